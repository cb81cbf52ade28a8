// File formats: trajectory and blow-up CSV, scenario / central-configuration
// / shadow-report JSON. All writes are atomic (temp file + rename).
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nbflow/diagnostics.hpp"
#include "nbflow/shadowing.hpp"

namespace nbflow {

using json = nlohmann::json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

/// Full 17-significant-digit decimal so doubles round-trip exactly.
inline std::string fmt_d(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Trajectory CSV

inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  int n = traj.n_bodies();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",q" << i << "x,q" << i << "y";
  for (int i = 1; i <= n; ++i) out << ",v" << i << "x,v" << i << "y";
  out << "\n";
  for (size_t s = 0; s < traj.t.size(); ++s) {
    const auto& st = traj.states[s];
    out << fmt_d(traj.t[s]);
    for (int i = 0; i < n; ++i)
      out << ',' << fmt_d(st.q[i].real()) << ',' << fmt_d(st.q[i].imag());
    for (int i = 0; i < n; ++i)
      out << ',' << fmt_d(st.v[i].real()) << ',' << fmt_d(st.v[i].imag());
    out << "\n";
  }
  return out.str();
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  atomic_write(path, trajectory_csv(traj));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

inline double parse_double(const std::string& s, int lineno, const std::string& field) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw IoError("line " + std::to_string(lineno) + ", field '" + field +
                  "': cannot parse '" + s + "' as a number");
  }
}

}  // namespace detail

struct TrajectoryData {
  std::vector<double> t;
  std::vector<CartesianState> states;
};

inline TrajectoryData read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw IoError(path + ": line 1: header must start with 't'");
  if ((header.size() - 1) % 4 != 0)
    throw IoError(path + ": line 1: expected t plus 4 columns per body");
  int n = (int)(header.size() - 1) / 4;

  TrajectoryData td;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw IoError(path + ": line " + std::to_string(lineno) + ": expected " +
                    std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    CartesianState st;
    st.t = detail::parse_double(f[0], lineno, "t");
    st.q.resize(n);
    st.v.resize(n);
    for (int i = 0; i < n; ++i) {
      st.q[i] = {detail::parse_double(f[1 + 2 * i], lineno, header[1 + 2 * i]),
                 detail::parse_double(f[2 + 2 * i], lineno, header[2 + 2 * i])};
      st.v[i] = {detail::parse_double(f[1 + 2 * n + 2 * i], lineno, header[1 + 2 * n + 2 * i]),
                 detail::parse_double(f[2 + 2 * n + 2 * i], lineno, header[2 + 2 * n + 2 * i])};
    }
    td.t.push_back(st.t);
    td.states.push_back(st);
  }
  return td;
}

/// Generic two-column series (header "t,value"), for synthetic rate checks.
struct SeriesData {
  std::vector<double> t, value;
};

inline SeriesData read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() != 2)
    throw IoError(path + ": line 1: expected a two-column 't,value' header");
  SeriesData sd;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 2)
      throw IoError(path + ": line " + std::to_string(lineno) + ": expected 2 fields");
    sd.t.push_back(detail::parse_double(f[0], lineno, header[0]));
    sd.value.push_back(detail::parse_double(f[1], lineno, header[1]));
  }
  return sd;
}

// ---------------------------------------------------------------------------
// Blow-up CSV

inline std::string blowup_csv(const MassSystem& sys, const Cluster& k,
                              const BlowupTrajectory& traj) {
  std::ostringstream out;
  int ns = k.size() - 2;
  bool parab = !traj.samples.empty() &&
               traj.samples.front().variant == BlowupVariant::Parabolic;
  out << "tau,t," << (parab ? "u" : "r") << ",v";
  for (int j = 1; j <= ns; ++j) out << ",s" << j << "x,s" << j << "y";
  for (int j = 1; j <= ns; ++j) out << ",w" << j << "x,w" << j << "y";
  out << ",hk,F,P";
  for (int j = 1; j <= 2 * ns; ++j) out << ",Q" << j;
  out << ",theta,mu,pivot\n";
  auto mm = mass_metric(sys, k);
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& b = traj.samples[i];
    FubiniData fd = fubini_data(sys, k, mm, b.s, b.w, b.pivot);
    double hk = parab ? energy_blowup(sys, k, b).h : energy_shape(sys, k, from_blowup(b));
    out << fmt_d(b.tau) << ',' << fmt_d(b.t) << ',' << fmt_d(b.x) << ',' << fmt_d(b.v);
    for (int j = 0; j < ns; ++j)
      out << ',' << fmt_d(b.s[j].real()) << ',' << fmt_d(b.s[j].imag());
    for (int j = 0; j < ns; ++j)
      out << ',' << fmt_d(b.w[j].real()) << ',' << fmt_d(b.w[j].imag());
    out << ',' << fmt_d(hk) << ',' << fmt_d(fd.F) << ',' << fmt_d(traj.forcing.P[i]);
    for (int j = 0; j < 2 * ns; ++j) out << ',' << fmt_d(traj.forcing.Q[i][j]);
    out << ',' << fmt_d(b.theta) << ',' << fmt_d(b.mu) << ',' << b.pivot << "\n";
  }
  return out.str();
}

inline void write_blowup_csv(const std::string& path, const MassSystem& sys,
                             const Cluster& k, const BlowupTrajectory& traj) {
  atomic_write(path, blowup_csv(sys, k, traj));
}

inline BlowupTrajectory read_blowup_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() < 10 || header[0] != "tau" || header[1] != "t")
    throw IoError(path + ": line 1: not a blow-up CSV header");
  bool parab = header[2] == "u";
  if (!parab && header[2] != "r")
    throw IoError(path + ": line 1: third column must be 'u' or 'r'");
  int ns = 0;
  while (4 + 2 * ns < (int)header.size() && header[4 + 2 * ns][0] == 's') ++ns;
  size_t expect = 4 + 4 * ns + 3 + 2 * ns + 3;
  if (header.size() != expect)
    throw IoError(path + ": line 1: expected " + std::to_string(expect) + " columns, got " +
                  std::to_string(header.size()));

  BlowupTrajectory traj;
  traj.forcing.variant = parab ? BlowupVariant::Parabolic : BlowupVariant::Collision;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw IoError(path + ": line " + std::to_string(lineno) + ": expected " +
                    std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    auto num = [&](int c) { return detail::parse_double(f[c], lineno, header[c]); };
    BlowupState b;
    b.variant = traj.forcing.variant;
    b.tau = num(0);
    b.t = num(1);
    b.x = num(2);
    b.v = num(3);
    b.s.resize(ns);
    b.w.resize(ns);
    for (int j = 0; j < ns; ++j) b.s[j] = {num(4 + 2 * j), num(5 + 2 * j)};
    for (int j = 0; j < ns; ++j) b.w[j] = {num(4 + 2 * ns + 2 * j), num(5 + 2 * ns + 2 * j)};
    int c = 4 + 4 * ns;
    double P = num(c + 2);
    Eigen::VectorXd Q(2 * ns);
    for (int j = 0; j < 2 * ns; ++j) Q[j] = num(c + 3 + j);
    b.theta = num(c + 3 + 2 * ns);
    b.mu = num(c + 4 + 2 * ns);
    b.pivot = (int)num(c + 5 + 2 * ns);
    traj.samples.push_back(b);
    traj.forcing.tau.push_back(b.tau);
    traj.forcing.t.push_back(b.t);
    traj.forcing.P.push_back(P);
    traj.forcing.Q.push_back(Q);
    traj.forcing.supP = std::max(traj.forcing.supP, std::abs(P));
    traj.forcing.supQ = std::max(traj.forcing.supQ, ns ? Q.lpNorm<Eigen::Infinity>() : 0.0);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Scenario JSON

namespace detail {

inline const json& require_field(const json& j, const std::string& key,
                                 const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline std::vector<cplx> parse_points(const json& arr, const std::string& where) {
  std::vector<cplx> out;
  if (!arr.is_array()) throw IoError(where + ": expected an array of [x,y] pairs");
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2)
      throw IoError(where + ": each entry must be an [x,y] pair");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  auto masses = detail::require_field(j, "masses", "scenario").get<std::vector<double>>();
  MassSystem sys(masses);
  CartesianState init;
  init.q = detail::parse_points(detail::require_field(j, "positions", "scenario"),
                                "scenario.positions");
  init.v = detail::parse_points(detail::require_field(j, "velocities", "scenario"),
                                "scenario.velocities");
  if (init.q.size() != masses.size() || init.v.size() != masses.size())
    throw IoError("scenario: positions/velocities size must match masses");
  auto cl = detail::require_field(j, "cluster", "scenario").get<std::vector<int>>();
  if (cl.empty()) throw IoError("scenario.cluster: must be nonempty");
  std::string mode = detail::require_field(j, "mode", "scenario").get<std::string>();
  ScenarioMode m;
  if (mode == "parabolic") m = ScenarioMode::Parabolic;
  else if (mode == "collision") m = ScenarioMode::Collision;
  else if (mode == "generic") m = ScenarioMode::Generic;
  else throw IoError("scenario.mode: expected parabolic|collision|generic, got '" + mode + "'");

  Scenario sc{sys, init, Cluster(cl), m, {}};
  const json& stop = detail::require_field(j, "stop", "scenario");
  sc.stop.t_max = detail::require_field(stop, "t_max", "scenario.stop").get<double>();
  if (stop.contains("r_min")) sc.stop.r_min = stop["r_min"].get<double>();
  if (stop.contains("r_max")) sc.stop.r_max = stop["r_max"].get<double>();
  if (stop.contains("r_min_cluster_only") && stop["r_min_cluster_only"].get<bool>())
    sc.stop.r_min_cluster = sc.cluster;
  return sc;
}

inline json scenario_to_json(const Scenario& sc) {
  json j;
  j["masses"] = sc.sys.masses;
  json qs = json::array(), vs = json::array();
  for (auto& q : sc.initial.q) qs.push_back({q.real(), q.imag()});
  for (auto& v : sc.initial.v) vs.push_back({v.real(), v.imag()});
  j["positions"] = qs;
  j["velocities"] = vs;
  j["cluster"] = sc.cluster.indices;
  j["mode"] = sc.mode == ScenarioMode::Parabolic ? "parabolic"
              : sc.mode == ScenarioMode::Collision ? "collision" : "generic";
  j["stop"] = {{"t_max", sc.stop.t_max}, {"r_min", sc.stop.r_min}, {"r_max", sc.stop.r_max},
               {"r_min_cluster_only", sc.stop.r_min_cluster.has_value()}};
  j["tolerances"] = {{"rtol", 1e-12}, {"atol", 1e-12}};
  return j;
}

inline IntegOptions tolerances_from_json(const json& j) {
  IntegOptions opt;
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (t.contains("rtol")) opt.rtol = t["rtol"].get<double>();
    if (t.contains("atol")) opt.atol = t["atol"].get<double>();
  }
  return opt;
}

// ---------------------------------------------------------------------------
// Central configuration and shadow report JSON

inline json cc_to_json(const MassSystem& sys, const Cluster& k, const CentralConfig& cc,
                       const EquilibriumData* eq = nullptr) {
  json j;
  std::vector<double> ms;
  for (int i : k.indices) ms.push_back(sys.masses[i]);
  j["masses"] = ms;
  json qs = json::array();
  for (auto& q : cc.q) qs.push_back({q.real(), q.imag()});
  j["positions"] = qs;
  j["lambda"] = cc.lambda;
  if (eq) {
    j["eigenvalues"] = std::vector<double>(eq->cs.data(), eq->cs.data() + eq->cs.size());
    j["beta"] = eq->beta;
    j["mode"] = eq->v0 > 0 ? "parabolic" : "collision";
    j["v0"] = eq->v0;
    j["degenerate"] = eq->degenerate;
  }
  return j;
}

struct CcInput {
  std::vector<double> masses;
  std::vector<cplx> guess;
  std::string mode = "collision";
};

inline CcInput cc_input_from_json(const json& j) {
  CcInput in;
  in.masses = detail::require_field(j, "masses", "cc").get<std::vector<double>>();
  in.guess = detail::parse_points(detail::require_field(j, "positions", "cc"), "cc.positions");
  if (in.masses.size() != in.guess.size())
    throw IoError("cc: positions size must match masses");
  if (j.contains("mode")) in.mode = j["mode"].get<std::string>();
  return in;
}

inline json shadow_report_to_json(const ShadowReport& rep) {
  return json{{"eta", rep.eta},
              {"kappa", rep.kappa},
              {"iterations", rep.iterations},
              {"C_fit", rep.C_fit},
              {"rate_fit", rep.rate_fit},
              {"membership_residual", rep.membership_residual}};
}

inline json rate_fit_to_json(const RateFit& f) {
  return json{{"name", f.name},       {"slope", f.slope},   {"intercept", f.intercept},
              {"t_lo", f.t_lo},       {"t_hi", f.t_hi},     {"rms", f.rms},
              {"target", f.target},   {"pass", f.pass},     {"reliable", f.reliable}};
}

inline json spin_report_to_json(const SpinReport& rep) {
  json j{{"tail_variation", rep.tail_variation},
         {"L_total", rep.L.empty() ? 0.0 : rep.L.back()},
         {"L_tail", rep.L_tail},
         {"L_tail_cauchy", rep.L_tail_cauchy},
         {"winding", rep.winding},
         {"C_chart", rep.C_chart},
         {"thetadot_bound_violation", rep.thetadot_bound_violation}};
  if (rep.theta_limit) j["theta_limit"] = *rep.theta_limit;
  // Convergence thresholds are finite-horizon proxies, flagged as such.
  j["convergence_is_tail_proxy"] = true;
  return j;
}

}  // namespace nbflow
