#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nbflow/blowup.hpp"

using namespace nbflow;

namespace {

std::mt19937 rng(77);

cplx rand_c(double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

CartesianState equilateral_rest() {
  CartesianState st;
  st.q = equilateral(1.0);
  st.v.assign(3, cplx(0, 0));
  return st;
}

CartesianState random_cluster_state(const MassSystem& sys) {
  // Generic non-degenerate configuration, centered.
  CartesianState st;
  for (int i = 0; i < sys.n(); ++i) {
    st.q.push_back(rand_c(2.0) + cplx(3.0 * i, 0));
    st.v.push_back(rand_c(0.7));
  }
  cplx c = center_of_mass(sys, st.q), cd = center_of_mass(sys, st.v);
  for (auto& q : st.q) q -= c;
  for (auto& v : st.v) v -= cd;
  return st;
}

}  // namespace

TEST_CASE("to_shape at the equilateral rest configuration") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto sh = to_shape(sys, k, equilateral_rest());
  CHECK(sh.r == Catch::Approx(1.0).epsilon(1e-13));
  CHECK(sh.rho == Catch::Approx(0.0).margin(1e-13));
  CHECK(sh.mu == Catch::Approx(0.0).margin(1e-13));
  REQUIRE(sh.s.size() == 1);
  CHECK(std::abs(sh.omega[0]) < 1e-13);
  CHECK(sh.ext.has_value());
  CHECK(sh.ext->masses.empty());
}

TEST_CASE("to_shape rotation equivariance") {
  MassSystem sys({1.0, 2.0, 0.5});
  Cluster k({0, 1, 2});
  auto st = random_cluster_state(sys);
  auto sh0 = to_shape(sys, k, st);

  double alpha = 0.37;
  cplx rot = std::exp(cplx(0, alpha));
  CartesianState rst = st;
  for (auto& q : rst.q) q *= rot;
  for (auto& v : rst.v) v *= rot;
  auto sh1 = to_shape(sys, k, rst, sh0.pivot);

  CHECK(sh1.r == Catch::Approx(sh0.r).epsilon(1e-12));
  CHECK(sh1.rho == Catch::Approx(sh0.rho).margin(1e-12));
  CHECK(sh1.mu == Catch::Approx(sh0.mu).margin(1e-12));
  double dth = std::remainder(sh1.theta - sh0.theta - alpha, 2 * M_PI);
  CHECK(std::abs(dth) < 1e-12);
  for (int j = 0; j < sh0.s.size(); ++j) {
    CHECK(std::abs(sh1.s[j] - sh0.s[j]) < 1e-12);
    CHECK(std::abs(sh1.omega[j] - sh0.omega[j]) < 1e-12);
  }
}

TEST_CASE("to_shape for a pair: empty shape") {
  MassSystem sys({1, 1});
  Cluster k({0, 1});
  CartesianState st;
  st.q = {cplx(-0.5, 0), cplx(0.5, 0)};
  st.v = {cplx(0, -0.3), cplx(0, 0.3)};
  auto sh = to_shape(sys, k, st);
  CHECK(sh.s.size() == 0);
  auto rc = relative_coords(sys, k, st);
  CHECK(std::remainder(sh.theta - std::arg(rc.z[0]), 2 * M_PI) ==
        Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("shape chart round-trip") {
  MassSystem sys({1.0, 2.0, 0.5, 1.5});
  Cluster k({0, 1, 2, 3});
  for (int trial = 0; trial < 20; ++trial) {
    auto st = random_cluster_state(sys);
    auto rc = relative_coords(sys, k, st);
    auto sh = to_shape(sys, k, st);
    auto back = from_shape(sys, k, sh);
    for (int a = 0; a < rc.z.size(); ++a) {
      CHECK(std::abs(back.z[a] - rc.z[a]) < 1e-12 * sh.r);
      CHECK(std::abs(back.zdot[a] - rc.zdot[a]) < 1e-11);
    }
  }
}

TEST_CASE("from_shape with zero velocities") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto sh = to_shape(sys, k, equilateral_rest());
  auto rc = from_shape(sys, k, sh);
  for (int a = 0; a < rc.zdot.size(); ++a) CHECK(std::abs(rc.zdot[a]) < 1e-13);
}

TEST_CASE("r scales linearly with the configuration") {
  MassSystem sys({1.0, 2.0, 0.7});
  Cluster k({0, 1, 2});
  auto st = random_cluster_state(sys);
  auto sh = to_shape(sys, k, st);
  CartesianState big = st;
  for (auto& q : big.q) q *= 2.5;
  auto sh2 = to_shape(sys, k, big, sh.pivot);
  CHECK(sh2.r == Catch::Approx(2.5 * sh.r).epsilon(1e-13));
  for (int j = 0; j < sh.s.size(); ++j) CHECK(std::abs(sh2.s[j] - sh.s[j]) < 1e-13);
}

TEST_CASE("fubini_data basic identities") {
  MassSystem sys({1.0, 2.0, 0.5, 1.5});
  Cluster k({0, 1, 2, 3});
  auto mm = mass_metric(sys, k);
  for (int trial = 0; trial < 10; ++trial) {
    auto st = random_cluster_state(sys);
    auto sh = to_shape(sys, k, st);
    auto fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
    // A positive definite and F = w^T A w.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fd.A);
    CHECK(es.eigenvalues().minCoeff() > 0);
    Eigen::VectorXd w = cvec_to_real(sh.omega);
    CHECK(fd.F == Catch::Approx(w.dot(fd.A * w)).margin(1e-12 * (1 + std::abs(fd.F))));
    CHECK(fd.n > 0);
  }
}

TEST_CASE("shape potential at the Lagrange configuration") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto mm = mass_metric(sys, k);
  auto sh = to_shape(sys, k, equilateral_rest());
  auto fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  // r = 1 there, so V = r * U = 3.
  CHECK(fd.V == Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("el_field conserves mu for an isolated cluster") {
  MassSystem sys({1.0, 2.0, 0.5});
  Cluster k({0, 1, 2});
  auto st = random_cluster_state(sys);
  auto sh = to_shape(sys, k, st);
  auto d = el_field(sys, k, sh);
  CHECK(d.mudot == 0.0);
}

TEST_CASE("el_field fixes the shape along the homothetic orbit") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto sh = to_shape(sys, k, equilateral_rest());
  auto d = el_field(sys, k, sh);
  CHECK(std::abs(d.sdot[0]) < 1e-12);
  CHECK(std::abs(d.omegadot[0]) < 1e-10);
  CHECK(d.thetadot == Catch::Approx(0.0).margin(1e-12));
  // rhodot = -V/r^2 = -3 at r = 1.
  CHECK(d.rhodot == Catch::Approx(-3.0).epsilon(1e-12));
}

namespace {

struct ShapeSeries {
  std::vector<ShapeState> sh;  // 5-point stencil, center at index 2
  double delta;
};

ShapeSeries stencil_shapes(const MassSystem& sys, const Cluster& k, const Trajectory& traj,
                           double t0, double delta) {
  ShapeSeries out;
  out.delta = delta;
  int pivot = to_shape(sys, k, traj.at(t0)).pivot;
  for (int j = -2; j <= 2; ++j) out.sh.push_back(to_shape(sys, k, traj.at(t0 + j * delta), pivot));
  // Unwrap theta around the center sample.
  double th0 = out.sh[2].theta;
  for (auto& s : out.sh) s.theta = th0 + std::remainder(s.theta - th0, 2 * M_PI);
  return out;
}

double fd5(double fm2, double fm1, double fp1, double fp2, double delta) {
  return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * delta);
}

}  // namespace

TEST_CASE("el_field matches the pushforward of the Cartesian flow") {
  auto sc = scenario_library("binary_plus_spectator_collision",
                             {.spectator_distance = 5.0, .t_max = 0.3});
  sc.cluster = Cluster({0, 1, 2});  // use all three so mu is not conserved trivially
  sc.stop.r_min = 0.0;
  sc.stop.r_min_cluster.reset();
  Trajectory traj = integrate(sc);
  REQUIRE(traj.stop_reason == "horizon");

  // For the 3-cluster there are no external bodies; also exercise the
  // sub-cluster with coupling terms.
  for (Cluster k : {Cluster({0, 1, 2}), Cluster({0, 1})}) {
    double t0 = 0.15, delta = 1e-3;
    auto ss = stencil_shapes(sc.sys, k, traj, t0, delta);
    auto d = el_field(sc.sys, k, ss.sh[2]);
    auto at = [&](auto&& get) {
      return fd5(get(ss.sh[0]), get(ss.sh[1]), get(ss.sh[3]), get(ss.sh[4]), delta);
    };
    CHECK(d.rdot == Catch::Approx(at([](const ShapeState& s) { return s.r; })).margin(1e-7));
    CHECK(d.rhodot == Catch::Approx(at([](const ShapeState& s) { return s.rho; })).margin(1e-7));
    CHECK(d.thetadot ==
          Catch::Approx(at([](const ShapeState& s) { return s.theta; })).margin(1e-7));
    CHECK(d.mudot == Catch::Approx(at([](const ShapeState& s) { return s.mu; })).margin(1e-7));
    for (int j = 0; j < d.sdot.size(); ++j) {
      for (int part = 0; part < 2; ++part) {
        auto re = [j, part](const ShapeState& s) {
          return part == 0 ? s.s[j].real() : s.s[j].imag();
        };
        auto rw = [j, part](const ShapeState& s) {
          return part == 0 ? s.omega[j].real() : s.omega[j].imag();
        };
        double sd = part == 0 ? d.sdot[j].real() : d.sdot[j].imag();
        double od = part == 0 ? d.omegadot[j].real() : d.omegadot[j].imag();
        CHECK(sd == Catch::Approx(at(re)).margin(1e-7));
        CHECK(od == Catch::Approx(at(rw)).margin(1e-7));
      }
    }
  }
}

TEST_CASE("energy_shape agrees with the cluster energy") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto sh = to_shape(sys, k, equilateral_rest());
  CHECK(energy_shape(sys, k, sh) == Catch::Approx(-3.0).epsilon(1e-12));

  MassSystem sys2({1.0, 2.0, 0.5, 1.5});
  Cluster k2({0, 1, 3});
  for (int trial = 0; trial < 20; ++trial) {
    auto st = random_cluster_state(sys2);
    auto g = cluster_geometry(sys2, k2, st);
    auto sh2 = to_shape(sys2, k2, st);
    CHECK(energy_shape(sys2, k2, sh2) ==
          Catch::Approx(g.h).margin(1e-10 * (1 + std::abs(g.h))));
  }
}

TEST_CASE("to_blowup closed forms and round-trip") {
  ShapeState sh;
  sh.r = 4.0;
  sh.rho = 1.0;
  sh.theta = 0.3;
  sh.mu = 0.7;
  sh.s.resize(1);
  sh.omega.resize(1);
  sh.s[0] = cplx(0.2, -0.1);
  sh.omega[0] = cplx(0.05, 0.02);
  auto b = to_blowup(sh, BlowupVariant::Parabolic);
  CHECK(b.x == Catch::Approx(0.5));
  CHECK(b.v == Catch::Approx(2.0));
  CHECK(std::abs(b.w[0] - 8.0 * sh.omega[0]) < 1e-15);

  auto bc = to_blowup(sh, BlowupVariant::Collision);
  CHECK(bc.x == Catch::Approx(4.0));
  CHECK(bc.v == Catch::Approx(2.0));

  for (auto variant : {BlowupVariant::Parabolic, BlowupVariant::Collision}) {
    auto back = from_blowup(to_blowup(sh, variant));
    CHECK(back.r == Catch::Approx(sh.r).epsilon(1e-13));
    CHECK(back.rho == Catch::Approx(sh.rho).epsilon(1e-13));
    CHECK(std::abs(back.omega[0] - sh.omega[0]) < 1e-13);
    CHECK(back.theta == sh.theta);
    CHECK(back.mu == sh.mu);
  }

  // At r = 1 both variants fix (x, v, s, w) up to the meaning of x.
  sh.r = 1.0;
  auto b1 = to_blowup(sh, BlowupVariant::Parabolic);
  CHECK(b1.x == Catch::Approx(1.0));
  CHECK(b1.v == Catch::Approx(sh.rho));
  CHECK(std::abs(b1.w[0] - sh.omega[0]) < 1e-15);
}

TEST_CASE("res_field vanishes at the parabolic equilibrium") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  auto sh = to_shape(sys, k, equilateral_rest());
  for (double v0 : {std::sqrt(6.0), -std::sqrt(6.0)}) {
    BlowupState b;
    b.variant = BlowupVariant::Parabolic;
    b.x = 0.0;
    b.v = v0;
    b.s = sh.s;
    b.w = Eigen::VectorXcd::Zero(1);
    b.pivot = sh.pivot;
    auto d = res_field(sys, k, b, 0.0, Eigen::VectorXd::Zero(2));
    CHECK(std::abs(d.xdot) < 1e-12);
    CHECK(std::abs(d.vdot) < 1e-10);
    CHECK(std::abs(d.sdot[0]) < 1e-14);
    CHECK(std::abs(d.wdot[0]) < 1e-10);
  }
}

TEST_CASE("res_field is tangent to the invariant slice") {
  MassSystem sys({1.0, 2.0, 0.5});
  Cluster k({0, 1, 2});
  auto st = random_cluster_state(sys);
  auto sh = to_shape(sys, k, st);
  BlowupState b = to_blowup(sh, BlowupVariant::Parabolic);
  b.x = 0.0;  // the u = 0 slice
  auto d = res_field(sys, k, b, 123.0, Eigen::VectorXd::Constant(2, 9.0));
  CHECK(d.xdot == 0.0);  // forcing enters only through x^2
  // The forced and unforced fields agree exactly on the slice.
  auto d0 = res_field(sys, k, b, 0.0, Eigen::VectorXd::Zero(2));
  CHECK(d.vdot == d0.vdot);
  CHECK(d.wdot == d0.wdot);
}

TEST_CASE("res_field matches the rescaled pushforward along a trajectory") {
  auto sc = scenario_library("binary_plus_spectator_collision",
                             {.spectator_distance = 5.0, .t_max = 0.3});
  Trajectory traj = integrate(sc);
  Cluster k = sc.cluster;
  auto mm = mass_metric(sc.sys, k);

  for (auto variant : {BlowupVariant::Parabolic, BlowupVariant::Collision}) {
    double t0 = 0.15, delta = 1e-3;
    auto ss = stencil_shapes(sc.sys, k, traj, t0, delta);
    const ShapeState& c = ss.sh[2];

    double P;
    Eigen::VectorXd Q;
    forcing_at(sc.sys, k, mm, c, variant, P, Q);
    auto b0 = to_blowup(c, variant);
    auto d = res_field(sc.sys, k, b0, P, Q);
    double jac = std::pow(c.r, 1.5);  // d/dtau = r^{3/2} d/dt

    std::vector<BlowupState> bs;
    for (const auto& s : ss.sh) bs.push_back(to_blowup(s, variant));
    auto at = [&](auto&& get) {
      return jac * fd5(get(bs[0]), get(bs[1]), get(bs[3]), get(bs[4]), delta);
    };
    CHECK(d.xdot == Catch::Approx(at([](const BlowupState& b) { return b.x; })).margin(1e-6));
    CHECK(d.vdot == Catch::Approx(at([](const BlowupState& b) { return b.v; })).margin(1e-6));
    CHECK(d.sdot.size() == 0);
  }
}

TEST_CASE("forcing for an isolated cluster") {
  MassSystem sys({1.0, 2.0, 0.5});
  Cluster k({0, 1, 2});
  auto mm = mass_metric(sys, k);
  auto st = random_cluster_state(sys);
  auto sh = to_shape(sys, k, st);
  double P;
  Eigen::VectorXd Q;
  forcing_at(sys, k, mm, sh, BlowupVariant::Parabolic, P, Q);
  CHECK(P == Catch::Approx(sh.mu * sh.mu).margin(1e-13));
  CHECK(Q.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("forcing stays bounded along the library scenarios") {
  {
    auto sc = scenario_library("parabolic_pair_plus_escaper", {.t_max = 100.0});
    Trajectory traj = integrate(sc);
    auto f = forcing_from_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Parabolic);
    CHECK(f.supP < 10.0);
    CHECK(std::isfinite(f.supP));
  }
  {
    auto sc = scenario_library("binary_plus_spectator_collision", {.t_max = 2.0});
    Trajectory traj = integrate(sc);
    auto f = forcing_from_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Collision);
    CHECK(std::isfinite(f.supP));
    CHECK(std::isfinite(f.supQ));
  }
}

TEST_CASE("energy_blowup identities") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  // Zero bracket at the parabolic equilibrium.
  auto sh = to_shape(sys, k, equilateral_rest());
  BlowupState b;
  b.variant = BlowupVariant::Parabolic;
  b.x = 0.0;
  b.v = std::sqrt(6.0);
  b.s = sh.s;
  b.w = Eigen::VectorXcd::Zero(1);
  b.pivot = sh.pivot;
  CHECK(energy_blowup(sys, k, b).bracket == Catch::Approx(0.0).margin(1e-12));

  // h agrees with energy_shape away from the slice.
  MassSystem sys2({1.0, 2.0, 0.5});
  Cluster k2({0, 1, 2});
  auto st = random_cluster_state(sys2);
  auto sh2 = to_shape(sys2, k2, st);
  auto b2 = to_blowup(sh2, BlowupVariant::Parabolic);
  auto e = energy_blowup(sys2, k2, b2);
  double h = energy_shape(sys2, k2, sh2);
  CHECK(e.h == Catch::Approx(h).margin(1e-10 * (1 + std::abs(h))));
  CHECK(e.bracket == Catch::Approx(h * sh2.r).margin(1e-10 * (1 + std::abs(h))));
}

TEST_CASE("transform_trajectory keeps theta continuous") {
  auto sc = scenario_library("binary_plus_spectator_collision", {.t_max = 2.0});
  Trajectory traj = integrate(sc);
  auto bt = transform_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Collision);
  REQUIRE(bt.samples.size() == traj.t.size());
  for (size_t i = 1; i < bt.samples.size(); ++i) {
    CHECK(std::abs(bt.samples[i].theta - bt.samples[i - 1].theta) < M_PI);
    CHECK(bt.samples[i].tau >= bt.samples[i - 1].tau);
  }
}
