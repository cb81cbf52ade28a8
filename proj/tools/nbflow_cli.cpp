// Command-line front end: simulate, transform, cc find/classify, spin,
// rates, shadow, report. Exit 0 on success, 1 on numerical failure, 2 on
// input errors.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nbflow/io.hpp"

namespace {

using namespace nbflow;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

/// A positional that is either a scenario file or a library scenario name.
Scenario resolve_scenario(const std::string& arg) {
  if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json")
    return scenario_from_json(load_json(arg));
  return scenario_library(arg);
}

/// CLI clusters are 1-based (matching the q1,q2,... column names).
Cluster cluster_from_cli(const std::vector<int>& ids) {
  std::vector<int> zero;
  for (int i : ids) {
    if (i < 1) throw IoError("--cluster: indices are 1-based");
    zero.push_back(i - 1);
  }
  return Cluster(zero);
}

void write_sidecar(const std::string& csv_path, const Trajectory& traj) {
  json side{{"stop_reason", traj.stop_reason},
            {"energy_drift", traj.energy_drift},
            {"angmom_drift", traj.angmom_drift},
            {"steps", traj.stats.nsteps},
            {"t_end", traj.t.back()}};
  atomic_write(csv_path + ".json", side.dump(2) + "\n");
}

BlowupVariant variant_of(const std::string& s) {
  if (s == "parabolic") return BlowupVariant::Parabolic;
  if (s == "collision") return BlowupVariant::Collision;
  throw IoError("--variant: expected parabolic or collision, got '" + s + "'");
}

int cmd_simulate(const std::string& scenario_arg, const std::string& out) {
  Scenario sc = resolve_scenario(scenario_arg);
  IntegOptions opt;
  if (scenario_arg.size() > 5 && scenario_arg.substr(scenario_arg.size() - 5) == ".json")
    opt = tolerances_from_json(load_json(scenario_arg));
  Trajectory traj = integrate(sc, opt);
  write_trajectory_csv(out, traj);
  write_sidecar(out, traj);
  std::cout << "wrote " << out << " (" << traj.t.size() << " samples, stop: "
            << traj.stop_reason << ")\n";
  return 0;
}

int cmd_transform(const std::string& in, const std::vector<double>& masses,
                  const std::vector<int>& cluster_ids, const std::string& variant,
                  const std::string& out) {
  TrajectoryData td = read_trajectory_csv(in);
  if (td.states.empty()) throw IoError(in + ": no samples");
  if ((int)masses.size() != (int)td.states.front().q.size())
    throw IoError("--masses: size must match the CSV body count");
  MassSystem sys(masses);
  Cluster k = cluster_from_cli(cluster_ids);
  k.validate_against(sys);
  Trajectory traj;
  traj.t = td.t;
  traj.states = td.states;
  BlowupTrajectory bt = transform_trajectory(sys, k, traj, variant_of(variant));
  write_blowup_csv(out, sys, k, bt);
  std::cout << "wrote " << out << " (" << bt.samples.size() << " samples)\n";
  return 0;
}

int cmd_cc(const std::string& sub, const std::string& in, const std::string& out) {
  CcInput ci = cc_input_from_json(load_json(in));
  MassSystem sys(ci.masses);
  std::vector<int> all(sys.n());
  for (int i = 0; i < sys.n(); ++i) all[i] = i;
  Cluster k(all);
  CentralConfig cc = find_cc(sys, k, ci.guess);
  json j;
  if (sub == "find") {
    j = cc_to_json(sys, k, cc);
  } else {
    BlowupVariant mode =
        ci.mode == "parabolic" ? BlowupVariant::Parabolic : BlowupVariant::Collision;
    EquilibriumData eq = classify_cc(sys, k, cc, mode);
    j = cc_to_json(sys, k, cc, &eq);
  }
  std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    atomic_write(out, text);
  return 0;
}

int cmd_spin(const std::string& in, const std::vector<double>& masses,
             const std::string& out) {
  BlowupTrajectory bt = read_blowup_csv(in);
  if (bt.samples.empty()) throw IoError(in + ": no samples");
  int ns = (int)bt.samples.front().s.size();
  if ((int)masses.size() != ns + 2)
    throw IoError("--masses: blow-up CSV has " + std::to_string(ns) +
                  " shape coordinates, need " + std::to_string(ns + 2) + " cluster masses");
  MassSystem sys(masses);
  std::vector<int> all(sys.n());
  for (int i = 0; i < sys.n(); ++i) all[i] = i;
  SpinReport rep = spin_report(sys, Cluster(all), bt);
  std::string text = spin_report_to_json(rep).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    atomic_write(out, text);
  return 0;
}

int cmd_rates(const std::string& in, const std::vector<double>& masses,
              const std::vector<int>& cluster_ids, const std::string& mode,
              const std::string& out) {
  json j;
  // Two-column synthetic series: fit the slope directly.
  bool is_series = false;
  {
    std::ifstream f(in);
    std::string header;
    if (f && std::getline(f, header)) is_series = header == "t,value";
  }
  if (is_series) {
    SeriesData sd = read_series_csv(in);
    RateFit fit = fit_rate("series", sd.t, sd.value, 0.0, FitSense::TwoSided, 1e9);
    j = json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"rms", fit.rms}};
  } else {
    TrajectoryData td = read_trajectory_csv(in);
    if ((int)masses.size() != (int)td.states.front().q.size())
      throw IoError("--masses: size must match the CSV body count");
    MassSystem sys(masses);
    Cluster k = cluster_from_cli(cluster_ids);
    k.validate_against(sys);
    ScenarioMode m = mode == "parabolic" ? ScenarioMode::Parabolic
                     : mode == "collision" ? ScenarioMode::Collision
                                           : ScenarioMode::Generic;
    Trajectory traj;
    traj.t = td.t;
    traj.states = td.states;
    traj.stop_reason = "horizon";
    j = json::array();
    for (const auto& f : rate_suite(sys, k, traj, m)) j.push_back(rate_fit_to_json(f));
  }
  std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    atomic_write(out, text);
  return 0;
}

int cmd_shadow(const std::string& in, const std::string& out) {
  json pj = load_json(in);
  Scenario sc = pj.contains("scenario") && pj["scenario"].is_string()
                    ? scenario_library(pj["scenario"].get<std::string>())
                    : scenario_from_json(detail::require_field(pj, "scenario", "shadow"));
  Trajectory traj = integrate(sc, tolerances_from_json(pj));
  BlowupVariant variant = sc.mode == ScenarioMode::Parabolic ? BlowupVariant::Parabolic
                                                             : BlowupVariant::Collision;
  BlowupTrajectory bt = transform_trajectory(sc.sys, sc.cluster, traj, variant);

  // Central configuration from the cluster's initial shape.
  std::vector<cplx> guess;
  for (int i : sc.cluster.indices) guess.push_back(sc.initial.q[i]);
  CentralConfig cc = find_cc(sc.sys, sc.cluster, guess);
  EquilibriumData eq = classify_cc(sc.sys, sc.cluster, cc, variant);

  double radius = pj.contains("neighborhood") ? pj["neighborhood"].get<double>() : 0.4;
  BlowupTrajectory tail = trim_to_neighborhood(bt, eq, radius);
  ShadowProblem prob = make_blowup_shadow_problem(sc.sys, sc.cluster, eq, tail, variant);
  if (pj.contains("cutoff_R")) prob.cutoff_R = pj["cutoff_R"].get<double>();
  LinearSplit split = spectral_split(prob.A);
  double eta = pj.contains("eta") ? pj["eta"].get<double>() : default_eta(eq);
  ShadowSolution sol = picard_solve(split, prob, eta);

  std::string text = shadow_report_to_json(sol.report).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    atomic_write(out, text);
  if (!sol.report.converged || sol.report.kappa >= 1.0) {
    std::cerr << "shadow: Picard iteration did not contract (kappa="
              << sol.report.kappa << "); try a smaller cutoff_R or eta\n";
    return 1;
  }
  return 0;
}

int cmd_report(const std::string& scenario_arg, const std::string& out) {
  json rep;
  std::string stage = "validate";
  try {
    Scenario sc = resolve_scenario(scenario_arg);
    rep["scenario"] = scenario_to_json(sc);

    stage = "simulate";
    Trajectory traj = integrate(sc);
    rep["simulate"] = {{"stop_reason", traj.stop_reason},
                       {"samples", traj.t.size()},
                       {"t_end", traj.t.back()},
                       {"energy_drift", traj.energy_drift},
                       {"angmom_drift", traj.angmom_drift}};

    stage = "classify";
    ClassificationReport cls = classify(sc.sys, traj, sc.cluster);
    rep["classify"] = {
        {"verdict", cls.verdict == ClassificationReport::Verdict::KParabolic ? "parabolic"
                    : cls.verdict == ClassificationReport::Verdict::KCollision ? "collision"
                                                                               : "undetermined"},
        {"detail", cls.detail}};

    stage = "rates";
    json fits = json::array();
    bool rates_pass = true;
    for (const auto& f : rate_suite(sc.sys, sc.cluster, traj, sc.mode)) {
      fits.push_back(rate_fit_to_json(f));
      if (f.reliable && !f.pass) rates_pass = false;
    }
    rep["rates"] = fits;

    bool spin_pass = true;
    if (sc.mode != ScenarioMode::Generic) {
      stage = "transform";
      BlowupVariant variant = sc.mode == ScenarioMode::Parabolic ? BlowupVariant::Parabolic
                                                                 : BlowupVariant::Collision;
      BlowupTrajectory bt = transform_trajectory(sc.sys, sc.cluster, traj, variant);

      stage = "spin";
      SpinReport spin = spin_report(sc.sys, sc.cluster, bt);
      rep["spin"] = spin_report_to_json(spin);
      spin_pass = spin.L_tail_cauchy && spin.tail_variation < 1e-3;

      stage = "equilibrium";
      if (sc.cluster.size() >= 2) {
        std::vector<cplx> guess;
        for (int i : sc.cluster.indices) guess.push_back(sc.initial.q[i]);
        CentralConfig cc = find_cc(sc.sys, sc.cluster, guess);
        EquilibriumData eq = classify_cc(sc.sys, sc.cluster, cc, variant);
        ConvergenceReport conv = equilibrium_convergence(sc.sys, sc.cluster, bt, eq);
        rep["equilibrium"] = {{"lambda", cc.lambda},
                              {"v0", eq.v0},
                              {"beta", eq.beta},
                              {"degenerate", eq.degenerate},
                              {"v_end", conv.v_end},
                              {"u_end", conv.u_end},
                              {"rate", conv.rate}};
      }
    }

    rep["pass"] = rates_pass && spin_pass;
    std::string text = rep.dump(2) + "\n";
    if (out.empty())
      std::cout << text;
    else
      atomic_write(out, text);
    return 0;
  } catch (const IoError& e) {
    std::cerr << "report: stage " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "report: stage " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "report: stage " << stage << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nbflow: planar n-body cluster dynamics toolkit"};
  app.require_subcommand(1);

  std::string in, out, variant = "parabolic", mode = "parabolic", cc_sub;
  std::vector<double> masses;
  std::vector<int> cluster_ids;

  auto* sim = app.add_subcommand("simulate", "Integrate a scenario to CSV");
  sim->add_option("scenario", in, "Scenario JSON file or library name")->required();
  sim->add_option("-o,--output", out, "Output CSV path")->required();

  auto* tr = app.add_subcommand("transform", "Transform a trajectory to blow-up coordinates");
  tr->add_option("trajectory", in, "Trajectory CSV")->required();
  tr->add_option("--masses", masses, "Masses of all bodies")->required()->delimiter(',');
  tr->add_option("--cluster", cluster_ids, "Cluster body indices, 1-based")
      ->required()
      ->delimiter(',');
  tr->add_option("--variant", variant, "parabolic|collision");
  tr->add_option("-o,--output", out, "Output CSV path")->required();

  auto* cc = app.add_subcommand("cc", "Central configurations");
  auto* cc_find = cc->add_subcommand("find", "Solve from a guess");
  auto* cc_cls = cc->add_subcommand("classify", "Solve and classify the equilibrium");
  cc->require_subcommand(1);
  std::string cc_in, cc_out;
  for (auto* sub : {cc_find, cc_cls}) {
    sub->add_option("input", cc_in, "CC JSON with masses and guess positions")->required();
    sub->add_option("-o,--output", cc_out, "Output JSON path (stdout when omitted)");
  }

  auto* sp = app.add_subcommand("spin", "Spin diagnostics of a blow-up CSV");
  sp->add_option("blowup", in, "Blow-up CSV")->required();
  sp->add_option("--masses", masses, "Cluster masses")->required()->delimiter(',');
  sp->add_option("-o,--output", out, "Output JSON path (stdout when omitted)");

  auto* rt = app.add_subcommand("rates", "Asymptotic rate fits");
  rt->add_option("trajectory", in, "Trajectory CSV or t,value series CSV")->required();
  rt->add_option("--masses", masses, "Masses of all bodies")->delimiter(',');
  rt->add_option("--cluster", cluster_ids, "Cluster body indices, 1-based")->delimiter(',');
  rt->add_option("--mode", mode, "parabolic|collision");
  rt->add_option("-o,--output", out, "Output JSON path (stdout when omitted)");

  auto* sh = app.add_subcommand("shadow", "Shadowing run from a problem JSON");
  sh->add_option("problem", in, "Problem JSON")->required();
  sh->add_option("-o,--output", out, "Output JSON path (stdout when omitted)");

  auto* rp = app.add_subcommand("report", "Full diagnostic bundle for a scenario");
  rp->add_option("scenario", in, "Scenario JSON file or library name")->required();
  rp->add_option("-o,--output", out, "Output JSON path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(in, out);
    if (tr->parsed()) return cmd_transform(in, masses, cluster_ids, variant, out);
    if (cc->parsed()) return cmd_cc(cc_find->parsed() ? "find" : "classify", cc_in, cc_out);
    if (sp->parsed()) return cmd_spin(in, masses, out);
    if (rt->parsed()) return cmd_rates(in, masses, cluster_ids, mode, out);
    if (sh->parsed()) return cmd_shadow(in, out);
    if (rp->parsed()) return cmd_report(in, out);
  } catch (const nbflow::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
