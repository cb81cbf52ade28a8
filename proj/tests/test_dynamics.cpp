#include <catch2/catch_amalgamated.hpp>

#include "nbflow/dynamics.hpp"

using namespace nbflow;

namespace {

Scenario circular_kepler() {
  // Unit masses, separation 1: omega = sqrt(2), speed 1/sqrt(2) each.
  MassSystem sys({1, 1});
  CartesianState st;
  st.q = {cplx(-0.5, 0), cplx(0.5, 0)};
  double speed = std::sqrt(2.0) / 2.0;
  st.v = {cplx(0, -speed), cplx(0, speed)};
  Scenario sc{sys, st, Cluster({0, 1}), ScenarioMode::Generic, {}};
  return sc;
}

const double kKeplerPeriod = 2.0 * M_PI / std::sqrt(2.0);

}  // namespace

TEST_CASE("newton_rhs examples") {
  MassSystem pair({1, 1});
  auto a = newton_rhs(pair, {cplx(-0.5, 0), cplx(0.5, 0)});
  CHECK(std::abs(a[0] - cplx(1, 0)) < 1e-15);
  CHECK(std::abs(a[1] - cplx(-1, 0)) < 1e-15);

  MassSystem three({1, 1, 1});
  std::vector<cplx> tri = {cplx(0, 0), cplx(1, 0), cplx(0.5, std::sqrt(3.0) / 2)};
  cplx centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
  auto at = newton_rhs(three, tri);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(at[i]) == Catch::Approx(std::sqrt(3.0)).epsilon(1e-13));
    cplx dir = centroid - tri[i];
    CHECK(cross(at[i], dir) == Catch::Approx(0.0).margin(1e-13));
    CHECK(dot(at[i], dir) > 0);
  }

  // Newton's third law on a random state.
  MassSystem sys({1.0, 2.0, 0.5, 3.0});
  std::vector<cplx> q = {cplx(0.3, 1), cplx(-1, 0.2), cplx(2, -1), cplx(-0.4, -0.8)};
  auto ar = newton_rhs(sys, q);
  cplx tot = 0;
  for (int i = 0; i < 4; ++i) tot += sys.masses[i] * ar[i];
  CHECK(std::abs(tot) < 1e-14);
}

TEST_CASE("circular Kepler: drift and time reversal") {
  Scenario sc = circular_kepler();
  sc.stop.t_max = 10.0 * kKeplerPeriod;
  Trajectory traj = integrate(sc);
  CHECK(traj.stop_reason == "horizon");
  CHECK(traj.energy_drift < 1e-9);
  CHECK(traj.angmom_drift < 1e-9);

  // Center of mass stays put.
  for (size_t i = 0; i < traj.t.size(); i += 50)
    CHECK(std::abs(center_of_mass(sc.sys, traj.states[i].q)) < 1e-10);

  // Forward then backward returns the initial state.
  Scenario back = sc;
  back.initial = traj.states.back();
  back.stop.t_max = 0.0;
  Trajectory rev = integrate(back);
  const auto& fin = rev.states.back();
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(fin.q[i] - sc.initial.q[i]) < 1e-6);
    CHECK(std::abs(fin.v[i] - sc.initial.v[i]) < 1e-6);
  }
}

TEST_CASE("free-fall pair collision time") {
  // Two unit masses from rest at distance 1: t_c = pi/4 (radial Kepler).
  MassSystem sys({1, 1});
  CartesianState st;
  st.q = {cplx(-0.5, 0), cplx(0.5, 0)};
  st.v = {cplx(0, 0), cplx(0, 0)};
  Scenario sc{sys, st, Cluster({0, 1}), ScenarioMode::Collision, {}};
  sc.stop.t_max = 2.0;
  sc.stop.r_min = 1e-6;
  Trajectory traj = integrate(sc);
  CHECK(traj.stop_reason == "collision-approach");
  CHECK(std::abs(traj.t.back() - M_PI / 4.0) < 1e-6);
}

TEST_CASE("scenario library: kepler parabolic ratio") {
  auto sc = scenario_library("kepler_parabolic_radial", {.t_max = 1e4});
  Trajectory traj = integrate(sc);
  // r_rel(t) = 9^{1/3} (t + 1/3)^{2/3} for unit masses at separation 1.
  const auto& st = traj.states.back();
  double r_rel = std::abs(st.q[1] - st.q[0]);
  double t = traj.t.back();
  CHECK(r_rel / std::pow(t + 1.0 / 3.0, 2.0 / 3.0) ==
        Catch::Approx(std::cbrt(9.0)).epsilon(1e-6));
  CHECK(r_rel / std::pow(t, 2.0 / 3.0) == Catch::Approx(std::cbrt(9.0)).epsilon(1e-4));
}

TEST_CASE("scenario library: lagrange homothetic stays equilateral") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-4});
  Trajectory traj = integrate(sc);
  CHECK(traj.stop_reason == "collision-approach");
  for (size_t i = 0; i < traj.t.size(); i += std::max<size_t>(1, traj.t.size() / 20)) {
    const auto& q = traj.states[i].q;
    double d01 = std::abs(q[0] - q[1]);
    double d12 = std::abs(q[1] - q[2]);
    double d02 = std::abs(q[0] - q[2]);
    CHECK(std::abs(d01 - d12) < 1e-8 * d01);
    CHECK(std::abs(d01 - d02) < 1e-8 * d01);
  }
}

TEST_CASE("scenario library: lagrange parabolic zero energy") {
  auto sc = scenario_library("lagrange_parabolic");
  CHECK(std::abs(total_energy(sc.sys, sc.initial)) < 1e-12);
}

TEST_CASE("scenario library: unknown name") {
  CHECK_THROWS_AS(scenario_library("no_such_orbit"), std::invalid_argument);
}

TEST_CASE("classification verdicts") {
  // Parabolic pair plus escaper.
  {
    auto sc = scenario_library("parabolic_pair_plus_escaper", {.t_max = 1e4});
    Trajectory traj = integrate(sc);
    auto rep = classify(sc.sys, traj, sc.cluster);
    CHECK(rep.verdict == ClassificationReport::Verdict::KParabolic);
    CHECK(rep.C3 > 0);
    CHECK(rep.C1 <= rep.C2);
  }
  // Homothetic collapse is a total collision.
  {
    auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-6});
    Trajectory traj = integrate(sc);
    auto rep = classify(sc.sys, traj, sc.cluster);
    CHECK(rep.verdict == ClassificationReport::Verdict::KCollision);
    CHECK(rep.collision_time > traj.t.back());
  }
  // Circular Kepler matches neither template.
  {
    Scenario sc = circular_kepler();
    sc.stop.t_max = 40.0 * kKeplerPeriod;
    Trajectory traj = integrate(sc);
    auto rep = classify(sc.sys, traj, sc.cluster);
    CHECK(rep.verdict == ClassificationReport::Verdict::Undetermined);
  }
}

TEST_CASE("Sundman slope on a collision run") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-6});
  Trajectory traj = integrate(sc);
  auto rep = classify(sc.sys, traj, sc.cluster);
  REQUIRE(rep.verdict == ClassificationReport::Verdict::KCollision);
  double T = rep.collision_time;
  std::vector<double> dts, Is;
  for (size_t i = 0; i < traj.t.size(); ++i) {
    double dt = T - traj.t[i];
    if (dt <= 0) continue;
    dts.push_back(dt);
    Is.push_back(cluster_geometry(sc.sys, sc.cluster, traj.states[i]).I);
  }
  double slope = loglog_slope(dts, Is);
  CHECK(slope > 1.2);
  CHECK(slope < 1.5);
}

TEST_CASE("gamma residual") {
  // Cluster = all bodies: identically zero.
  {
    auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 0.3});
    Trajectory traj = integrate(sc);
    auto gs = gamma_residual(sc.sys, sc.cluster, traj);
    for (const auto& series : gs.mag)
      for (double g : series) CHECK(g == 0.0);
  }
  // Escaper scenario: decay slope in the expected window, and monotone in distance.
  {
    auto sc = scenario_library("parabolic_pair_plus_escaper", {.t_max = 1e4});
    Trajectory traj = integrate(sc);
    auto gs = gamma_residual(sc.sys, sc.cluster, traj);
    std::vector<double> ts, g1;
    for (size_t i = 0; i < gs.t.size(); ++i) {
      if (gs.t[i] < 1e3) continue;  // last decade
      ts.push_back(gs.t[i]);
      g1.push_back(gs.mag[0][i]);
    }
    double slope = loglog_slope(ts, g1);
    CHECK(slope > -2.7);
    CHECK(slope < -2.0);

    auto sc2 = scenario_library("parabolic_pair_plus_escaper",
                                {.spectator_distance = 100.0, .t_max = 10.0});
    Trajectory tr2 = integrate(sc2);
    auto g2 = gamma_residual(sc2.sys, sc2.cluster, tr2);
    auto g1s = gamma_residual(sc.sys, sc.cluster, traj);
    // Compare |gamma_1| at t = 5 via nearest samples.
    auto at_t = [](const GammaSeries& g, double t) {
      size_t best = 0;
      for (size_t i = 0; i < g.t.size(); ++i)
        if (std::abs(g.t[i] - t) < std::abs(g.t[best] - t)) best = i;
      return g.mag[0][best];
    };
    CHECK(at_t(g2, 5.0) < at_t(g1s, 5.0));
  }
}

TEST_CASE("step underflow produces truncated trajectory") {
  // Head-on collision with no r_min floor: the integrator should stop with an
  // explicit reason rather than crash.
  MassSystem sys({1, 1});
  CartesianState st;
  st.q = {cplx(-0.5, 0), cplx(0.5, 0)};
  st.v = {cplx(0, 0), cplx(0, 0)};
  Scenario sc{sys, st, Cluster({0, 1}), ScenarioMode::Collision, {}};
  sc.stop.t_max = 2.0;
  sc.stop.r_min = 0.0;
  Trajectory traj = integrate(sc);
  CHECK(traj.stop_reason == "step-underflow");
  CHECK(traj.t.back() < 2.0);
  CHECK(traj.t.back() > M_PI / 4.0 - 1e-3);
}
