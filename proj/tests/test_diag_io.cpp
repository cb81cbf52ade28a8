#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nbflow/io.hpp"

using namespace nbflow;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("nbflow_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("fit_rate on synthetic power laws") {
  std::vector<double> x, y;
  for (int i = 0; i <= 200; ++i) {
    double t = std::pow(10.0, 3.0 * i / 200.0);
    x.push_back(t);
    y.push_back(2.7 * std::pow(t, -5.0 / 3.0));
  }
  auto fit = fit_rate("synthetic", x, y, -5.0 / 3.0, FitSense::TwoSided);
  CHECK(fit.reliable);
  CHECK(fit.pass);
  CHECK(fit.slope == Catch::Approx(-5.0 / 3.0).margin(1e-10));
  CHECK(std::exp(fit.intercept) == Catch::Approx(2.7).epsilon(1e-8));
  CHECK(fit.rms < 1e-10);
  // Only the last decade enters the window.
  CHECK(fit.t_lo >= 99.0);

  // Sense semantics.
  CHECK(fit_rate("f", x, y, -1.0, FitSense::AtMost).pass);        // -5/3 <= -1 + tol
  CHECK_FALSE(fit_rate("f", x, y, -3.0, FitSense::AtMost).pass);  // -5/3 > -3 + tol
  CHECK(fit_rate("f", x, y, -2.0, FitSense::AtLeast).pass);
  CHECK_FALSE(fit_rate("f", x, y, -1.0, FitSense::AtLeast).pass);

  // Too few points in the window: unreliable, never passes.
  std::vector<double> xs(x.begin(), x.begin() + 3), ys(y.begin(), y.begin() + 3);
  auto bad = fit_rate("few", xs, ys, -5.0 / 3.0, FitSense::TwoSided);
  CHECK_FALSE(bad.reliable);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("fit_rate is density independent") {
  // Same power law, wildly uneven sampling: the log-interval weights keep the
  // slope exact.
  std::vector<double> x, y;
  for (int i = 0; i <= 400; ++i) {
    double t = 100.0 + i * 2.0;  // linear oversampling of the right end
    x.push_back(t);
    y.push_back(std::pow(t, -2.0));
  }
  for (double t = 90.0; t < 100.0; t += 0.01) {
    x.push_back(t);
    y.push_back(std::pow(t, -2.0));
  }
  auto fit = fit_rate("dense", x, y, -2.0, FitSense::TwoSided);
  CHECK(fit.slope == Catch::Approx(-2.0).margin(1e-9));
}

TEST_CASE("rate_suite collision laws on the homothetic collapse") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-6});
  Trajectory traj = integrate(sc);
  auto fits = rate_suite(sc.sys, sc.cluster, traj, ScenarioMode::Collision);
  REQUIRE(fits.size() == 3);
  CHECK(fits[0].name == "mu vs r");
  CHECK(fits[1].name == "I_k vs T-t");
  CHECK(fits[2].name == "K_k vs T-t");
  // Sundman laws hold on the homothetic orbit.
  CHECK(fits[1].pass);
  CHECK(fits[1].slope == Catch::Approx(4.0 / 3.0).margin(0.05));
  CHECK(fits[2].pass);
  CHECK(fits[2].slope == Catch::Approx(-2.0 / 3.0).margin(0.05));
  // The homothetic cluster has mu identically zero: nothing to fit.
  CHECK_FALSE(fits[0].pass);
}

TEST_CASE("mu law on a reversed zero-angular-momentum ejection") {
  // A genuine collision orbit of a forced pair needs mu(T) = 0 exactly; the
  // only way to manufacture one is to eject the pair from a tight separation
  // with zero angular momentum and read the run backward.
  MassSystem sys({1, 1, 1});
  double r0 = 1e-4, vrel = std::sqrt(2.0 * 2.0 / r0);
  std::vector<cplx> q = {cplx(-0.5 * r0, 0), cplx(0.5 * r0, 0),
                         10.0 * std::exp(cplx(0, M_PI / 6))};
  std::vector<cplx> v = {cplx(-0.5 * vrel, 0), cplx(0.5 * vrel, 0),
                         0.2 * std::exp(cplx(0, M_PI / 6))};
  Scenario sc{sys, recentered(sys, q, v), Cluster({0, 1}), ScenarioMode::Collision, {}};
  sc.stop.t_max = 0.12;
  Trajectory rev = time_reversed(integrate(sc), "collision-approach");

  // Reversal produced a genuine collision run.
  auto rep = classify(sys, rev, sc.cluster);
  REQUIRE(rep.verdict == ClassificationReport::Verdict::KCollision);
  CHECK(rep.collision_time >= rev.t.back());

  auto fits = rate_suite(sys, sc.cluster, rev, ScenarioMode::Collision);
  REQUIRE(fits.size() == 3);
  CHECK(fits[0].pass);
  CHECK(fits[0].slope >= 2.2);
  CHECK(fits[1].pass);
  CHECK(fits[2].pass);

  // And theta settles toward the collision.
  auto bt = transform_trajectory(sys, sc.cluster, rev, BlowupVariant::Collision);
  auto sp = spin_report(sys, sc.cluster, bt);
  CHECK(sp.tail_variation < 1e-4);
  CHECK(sp.theta_limit.has_value());
  CHECK(sp.L_tail_cauchy);
}

TEST_CASE("spin_report on the homothetic collapse") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-6});
  Trajectory traj = integrate(sc);
  auto bt = transform_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Collision);
  auto rep = spin_report(sc.sys, sc.cluster, bt);
  // The shape never moves: no Fubini-Study arclength, no spin.
  CHECK(rep.L.back() < 1e-8);
  CHECK(rep.L_tail_cauchy);
  CHECK(rep.tail_variation < 1e-8);
  CHECK(rep.winding == 0);
  REQUIRE(rep.theta_limit.has_value());
  CHECK(*rep.theta_limit == Catch::Approx(rep.theta.front()).margin(1e-8));
  CHECK(rep.thetadot_bound_violation <= 1e-10);
  // L is a nondecreasing partial sum.
  for (size_t i = 1; i < rep.L.size(); ++i) CHECK(rep.L[i] >= rep.L[i - 1]);
}

TEST_CASE("spin_report refuses undersampled theta") {
  MassSystem sys({1, 1});
  Cluster k({0, 1});
  std::vector<ShapeState> shapes;
  for (int i = 0; i < 5; ++i) {
    CartesianState st;
    st.t = i * 0.1;
    st.q = {cplx(-0.5, 0), cplx(0.5, 0)};
    st.v = {cplx(0, 0), cplx(0, 0)};
    shapes.push_back(to_shape(sys, k, st));
    shapes.back().theta = i * 3.5;  // jumps of 3.5 > pi
  }
  CHECK_THROWS_AS(spin_report(sys, k, shapes), std::runtime_error);
}

TEST_CASE("equilibrium_convergence on the homothetic collapse") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 2.0, .r_min = 1e-6});
  Trajectory traj = integrate(sc);
  auto bt = transform_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Collision);
  auto cc = find_cc(sc.sys, sc.cluster, traj.states.front().q);
  auto eq = classify_cc(sc.sys, sc.cluster, cc, BlowupVariant::Collision);
  auto rep = equilibrium_convergence(sc.sys, sc.cluster, bt, eq);
  CHECK(rep.u_end < 1e-3);
  CHECK(rep.v_end == Catch::Approx(-std::sqrt(6.0)).margin(1e-3));
  CHECK(rep.dist_s.back() < 1e-8);
  CHECK(rep.dist_w.back() < 1e-6);
}

TEST_CASE("trajectory CSV round-trips bitwise") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 0.5});
  Trajectory traj = integrate(sc);
  std::string path = tmp_path("traj.csv");
  write_trajectory_csv(path, traj);

  auto td = read_trajectory_csv(path);
  REQUIRE(td.t.size() == traj.t.size());
  for (size_t i = 0; i < td.t.size(); ++i) {
    CHECK(td.t[i] == traj.t[i]);
    for (int a = 0; a < 3; ++a) {
      CHECK(td.states[i].q[a] == traj.states[i].q[a]);
      CHECK(td.states[i].v[a] == traj.states[i].v[a]);
    }
  }
  // Writing the parsed data reproduces the file byte for byte.
  Trajectory t2;
  t2.t = td.t;
  t2.states = td.states;
  std::string again = tmp_path("traj2.csv");
  write_trajectory_csv(again, t2);
  CHECK(slurp(path) == slurp(again));
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("series CSV") {
  std::string path = tmp_path("series.csv");
  atomic_write(path, "t,value\n1,2.5\n10,0.25\n");
  auto sd = read_series_csv(path);
  REQUIRE(sd.t.size() == 2);
  CHECK(sd.t[1] == 10.0);
  CHECK(sd.value[1] == 0.25);
  fs::remove(path);
}

TEST_CASE("blow-up CSV round-trip") {
  auto sc = scenario_library("lagrange_homothetic_collision", {.t_max = 1.0, .r_min = 1e-3});
  Trajectory traj = integrate(sc);
  auto bt = transform_trajectory(sc.sys, sc.cluster, traj, BlowupVariant::Collision);
  std::string path = tmp_path("blowup.csv");
  write_blowup_csv(path, sc.sys, sc.cluster, bt);

  auto back = read_blowup_csv(path);
  REQUIRE(back.samples.size() == bt.samples.size());
  for (size_t i = 0; i < back.samples.size(); ++i) {
    const auto& a = bt.samples[i];
    const auto& b = back.samples[i];
    CHECK(b.variant == BlowupVariant::Collision);
    CHECK(b.tau == a.tau);
    CHECK(b.t == a.t);
    CHECK(b.x == a.x);
    CHECK(b.v == a.v);
    CHECK(b.s == a.s);
    CHECK(b.w == a.w);
    CHECK(b.theta == a.theta);
    CHECK(b.mu == a.mu);
    CHECK(b.pivot == a.pivot);
    CHECK(back.forcing.P[i] == bt.forcing.P[i]);
    CHECK(back.forcing.Q[i] == bt.forcing.Q[i]);
  }
  // Writing the parsed data reproduces the file byte for byte.
  std::string again = tmp_path("blowup2.csv");
  write_blowup_csv(again, sc.sys, sc.cluster, back);
  CHECK(slurp(path) == slurp(again));
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("scenario JSON round-trip") {
  auto sc = scenario_library("binary_plus_spectator_collision", {.t_max = 7.0});
  json j = scenario_to_json(sc);
  auto back = scenario_from_json(j);
  CHECK(back.sys.masses == sc.sys.masses);
  CHECK(back.cluster.indices == sc.cluster.indices);
  CHECK(back.mode == sc.mode);
  CHECK(back.stop.t_max == sc.stop.t_max);
  CHECK(back.stop.r_min == sc.stop.r_min);
  CHECK(back.stop.r_min_cluster.has_value() == sc.stop.r_min_cluster.has_value());
  for (int i = 0; i < 3; ++i) {
    CHECK(back.initial.q[i] == sc.initial.q[i]);
    CHECK(back.initial.v[i] == sc.initial.v[i]);
  }
  CHECK(tolerances_from_json(j).rtol == 1e-12);
}

TEST_CASE("cc JSON") {
  MassSystem sys({1, 1, 1});
  Cluster k({0, 1, 2});
  std::vector<cplx> guess(3);
  double R = 1.0 / std::sqrt(3.0);
  for (int i = 0; i < 3; ++i) guess[i] = R * std::exp(cplx(0, 2 * M_PI * i / 3));
  auto cc = find_cc(sys, k, guess);
  auto eq = classify_cc(sys, k, cc, BlowupVariant::Collision);
  json j = cc_to_json(sys, k, cc, &eq);
  CHECK(j["lambda"].get<double>() == Catch::Approx(3.0).margin(1e-10));
  CHECK(j["mode"] == "collision");
  CHECK(j["eigenvalues"].size() == 2);

  auto in = cc_input_from_json(j);
  CHECK(in.masses.size() == 3);
  CHECK(in.mode == "collision");
  CHECK(std::abs(in.guess[0] - cc.q[0]) < 1e-15);
}

TEST_CASE("malformed inputs are rejected with location info") {
  std::string path = tmp_path("bad.csv");

  atomic_write(path, "t,q1x,q1y,q2x,q2y,v1x,v1y,v2x,v2y\n0,0,0,1,0,0,0,0,0\n1,0,0,oops,0,0,0,0,0\n");
  CHECK_THROWS_WITH(read_trajectory_csv(path),
                    Catch::Matchers::ContainsSubstring("line 3") &&
                        Catch::Matchers::ContainsSubstring("q2x") &&
                        Catch::Matchers::ContainsSubstring("oops"));

  atomic_write(path, "t,q1x,q1y,v1x,v1y\n0,1,2\n");
  CHECK_THROWS_WITH(read_trajectory_csv(path),
                    Catch::Matchers::ContainsSubstring("line 2"));

  atomic_write(path, "x,q1x\n");
  CHECK_THROWS_AS(read_trajectory_csv(path), IoError);

  CHECK_THROWS_AS(read_trajectory_csv(tmp_path("missing_file.csv")), IoError);

  json j = {{"masses", {1.0, 1.0}}};
  CHECK_THROWS_WITH(scenario_from_json(j), Catch::Matchers::ContainsSubstring("positions"));
  fs::remove(path);
}

TEST_CASE("atomic_write leaves no temp file") {
  std::string path = tmp_path("atomic.txt");
  atomic_write(path, "hello\n");
  CHECK(slurp(path) == "hello\n");
  CHECK_FALSE(fs::exists(path + ".tmp"));
  fs::remove(path);
}
