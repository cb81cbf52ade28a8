// McGehee-style rescalings of the cluster motion: the parabolic variant
// (u, v, s, w) and the collision variant (r, v, s, w), the rescaled-time
// vector field, the forcing terms sampled along a Cartesian trajectory and
// the rescaled energy identity.
#pragma once

#include <cmath>

#include "nbflow/chart.hpp"

namespace nbflow {

enum class BlowupVariant { Parabolic, Collision };

/// Rescaled state. theta and mu are carried along so the transform round-trips.
struct BlowupState {
  BlowupVariant variant = BlowupVariant::Parabolic;
  double x = 0.0;   // u = r^{-1/2} (parabolic) or r itself (collision)
  double v = 0.0;   // sqrt(r) * rho
  Eigen::VectorXcd s;
  Eigen::VectorXcd w;  // r^{3/2} * omega
  double tau = 0.0;
  double t = 0.0;
  double theta = 0.0, mu = 0.0;
  int pivot = 0;

  double radius() const {
    return variant == BlowupVariant::Parabolic ? 1.0 / (x * x) : x;
  }
};

inline BlowupState to_blowup(const ShapeState& sh, BlowupVariant variant, double tau = 0.0) {
  if (!(sh.r > 0)) throw std::domain_error("to_blowup: r must be positive");
  BlowupState b;
  b.variant = variant;
  double sr = std::sqrt(sh.r);
  b.x = variant == BlowupVariant::Parabolic ? 1.0 / sr : sh.r;
  b.v = sr * sh.rho;
  b.s = sh.s;
  b.w = sh.r * sr * sh.omega;
  b.tau = tau;
  b.t = sh.t;
  b.theta = sh.theta;
  b.mu = sh.mu;
  b.pivot = sh.pivot;
  return b;
}

inline ShapeState from_blowup(const BlowupState& b) {
  ShapeState sh;
  double r = b.radius();
  double sr = std::sqrt(r);
  sh.t = b.t;
  sh.r = r;
  sh.rho = b.v / sr;
  sh.s = b.s;
  sh.omega = b.w / (r * sr);
  sh.theta = b.theta;
  sh.mu = b.mu;
  sh.pivot = b.pivot;
  return sh;
}

/// Sampled forcing P(tau), Q(tau) with piecewise-cubic interpolation.
struct Forcing {
  BlowupVariant variant = BlowupVariant::Parabolic;
  std::vector<double> tau, t;
  std::vector<double> P;
  std::vector<Eigen::VectorXd> Q;  // 2k-4 each
  double supP = 0.0, supQ = 0.0;

  bool empty() const { return tau.empty(); }

  size_t bracket(double x) const {
    size_t lo = 0, hi = tau.size() - 1;
    while (lo + 1 < hi) {
      size_t mid = (lo + hi) / 2;
      (tau[mid] <= x ? lo : hi) = mid;
    }
    return lo;
  }

  template <class T>
  T interp(double x, const std::vector<T>& ys) const {
    if (x <= tau.front()) return ys.front();
    if (x >= tau.back()) return ys.back();
    size_t i = bracket(x);
    double h = tau[i + 1] - tau[i];
    double th = (x - tau[i]) / h;
    // Catmull-Rom, clamped at the ends.
    const T& y1 = ys[i];
    const T& y2 = ys[i + 1];
    T m1 = ys[i + 1] - ys[i], m2 = m1;
    if (i > 0) m1 = (ys[i + 1] - ys[i - 1]) * (h / (tau[i + 1] - tau[i - 1]));
    if (i + 2 < ys.size()) m2 = (ys[i + 2] - ys[i]) * (h / (tau[i + 2] - tau[i]));
    double h00 = (1 + 2 * th) * (1 - th) * (1 - th), h10 = th * (1 - th) * (1 - th);
    double h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
    return h00 * y1 + h10 * m1 + h01 * y2 + h11 * m2;
  }

  double P_at(double x) const { return empty() ? 0.0 : interp(x, P); }
  Eigen::VectorXd Q_at(double x, int d) const {
    return empty() ? Eigen::VectorXd::Zero(d) : interp(x, Q);
  }
};

/// P and Q evaluated at one shape sample.
inline void forcing_at(const MassSystem& sys, const Cluster& k, const MassMetric& mm,
                       const ShapeState& sh, BlowupVariant variant, double& P,
                       Eigen::VectorXd& Q) {
  int d = 2 * k.size() - 4;
  FubiniData fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  ExternalPartials ep = external_partials(sys, k, mm, sh);
  double r = sh.r, mu2 = sh.mu * sh.mu;
  Eigen::VectorXd bracket = Eigen::VectorXd::Zero(d);
  if (d > 0) {
    Eigen::LLT<Eigen::MatrixXd> Allt(fd.A);
    bracket = Allt.solve(ep.gradS) - ep.dUdth * Allt.solve(fd.B.transpose());
  }
  if (variant == BlowupVariant::Parabolic) {
    P = mu2 + r * r * r * ep.dUdr;
    Q = r * r * bracket;
  } else {
    P = mu2 / (r * r * r) + ep.dUdr;
    Q = bracket / r;
  }
}

/// Cumulative rescaled time tau(t) = int r^{-3/2} dt over the trajectory
/// samples, Simpson on each sample interval using the dense output.
inline std::vector<double> rescaled_time(const MassSystem& sys, const Cluster& k,
                                         const Trajectory& traj) {
  std::vector<double> tau(traj.t.size(), 0.0);
  bool have_dense = !traj.dense.segs.empty();
  auto integrand = [&](double t) {
    CartesianState st = traj.at(t);
    double I = cluster_geometry(sys, k, st).I;
    return std::pow(I, -0.75);
  };
  for (size_t i = 1; i < traj.t.size(); ++i) {
    double a = traj.t[i - 1], b = traj.t[i];
    double fa = std::pow(cluster_geometry(sys, k, traj.states[i - 1]).I, -0.75);
    double fb = std::pow(cluster_geometry(sys, k, traj.states[i]).I, -0.75);
    // Simpson with a dense-output midpoint; trapezoid when only samples exist.
    double step = have_dense
                      ? (b - a) / 6.0 * (fa + 4.0 * integrand(0.5 * (a + b)) + fb)
                      : (b - a) / 2.0 * (fa + fb);
    tau[i] = tau[i - 1] + step;
  }
  return tau;
}

struct BlowupTrajectory {
  std::vector<BlowupState> samples;
  Forcing forcing;
};

/// Transform a Cartesian trajectory sample-by-sample, splicing theta
/// continuously across samples and chart switches.
inline BlowupTrajectory transform_trajectory(const MassSystem& sys, const Cluster& k,
                                             const Trajectory& traj, BlowupVariant variant) {
  auto mm = mass_metric(sys, k);
  auto tau = rescaled_time(sys, k, traj);
  BlowupTrajectory out;
  out.forcing.variant = variant;
  double theta_offset = 0.0;
  int prev_pivot = -1;
  double prev_theta_raw = 0.0, prev_theta = 0.0;
  for (size_t i = 0; i < traj.t.size(); ++i) {
    ShapeState sh = to_shape(sys, k, traj.states[i], prev_pivot);
    if (i > 0) {
      if (sh.pivot != prev_pivot) {
        // Chart switch: splice theta so the series stays continuous.
        theta_offset = prev_theta - sh.theta;
        double spliced = sh.theta + theta_offset;
        if (std::abs(spliced - prev_theta) > M_PI)
          throw std::runtime_error("transform_trajectory: theta splice failed at chart switch");
      } else {
        double d = sh.theta - prev_theta_raw;
        while (d > M_PI) { theta_offset -= 2 * M_PI; d -= 2 * M_PI; }
        while (d < -M_PI) { theta_offset += 2 * M_PI; d += 2 * M_PI; }
      }
    }
    prev_pivot = sh.pivot;
    prev_theta_raw = sh.theta;
    sh.theta += theta_offset;
    prev_theta = sh.theta;

    double P;
    Eigen::VectorXd Q;
    forcing_at(sys, k, mm, sh, variant, P, Q);
    out.forcing.tau.push_back(tau[i]);
    out.forcing.t.push_back(traj.t[i]);
    out.forcing.P.push_back(P);
    out.forcing.Q.push_back(Q);
    out.forcing.supP = std::max(out.forcing.supP, std::abs(P));
    out.forcing.supQ = std::max(out.forcing.supQ, Q.size() ? Q.lpNorm<Eigen::Infinity>() : 0.0);
    out.samples.push_back(to_blowup(sh, variant, tau[i]));
  }
  return out;
}

inline Forcing forcing_from_trajectory(const MassSystem& sys, const Cluster& k,
                                       const Trajectory& traj, BlowupVariant variant) {
  return transform_trajectory(sys, k, traj, variant).forcing;
}

struct BlowupDeriv {
  double xdot = 0, vdot = 0;
  Eigen::VectorXcd sdot, wdot;
};

/// The rescaled-time vector field. With P = 0, Q = 0 the field is autonomous
/// and tangent to the invariant slice {u = 0} (resp. {r = 0}).
inline BlowupDeriv res_field(const MassSystem& sys, const Cluster& k, const BlowupState& b,
                             double P, const Eigen::VectorXd& Q) {
  auto mm = mass_metric(sys, k);
  int d = 2 * k.size() - 4;
  FubiniData fd = fubini_data(sys, k, mm, b.s, b.w, b.pivot);
  BlowupDeriv out;
  double forcing_scale = b.x * b.x;  // u^2 (parabolic) or r^2 (collision)
  out.xdot = b.variant == BlowupVariant::Parabolic ? -0.5 * b.x * b.v : b.x * b.v;
  out.vdot = 0.5 * b.v * b.v + fd.F - fd.V + forcing_scale * P;
  out.sdot = b.w;
  out.wdot = Eigen::VectorXcd::Zero(k.size() - 2);
  if (d == 0) return out;
  if (Q.size() != d) throw std::invalid_argument("res_field: forcing dimension mismatch");

  auto dA = dA_tensor(sys, k, mm, b.s, b.pivot);
  Eigen::VectorXd x = cvec_to_real(b.w);
  Eigen::VectorXd gF(d);
  for (int m = 0; m < d; ++m) gF[m] = x.dot(dA[m] * x);
  Eigen::MatrixXd DA = Eigen::MatrixXd::Zero(d, d);
  for (int m = 0; m < d; ++m) DA += x[m] * dA[m];
  Eigen::VectorXd gV = gradV(sys, k, mm, b.s, b.pivot);
  Eigen::LLT<Eigen::MatrixXd> Allt(fd.A);
  Eigen::VectorXd wd = -0.5 * b.v * x + Allt.solve(gV + 0.5 * gF) - Allt.solve(DA * x) +
                       forcing_scale * Q;
  out.wdot = real_to_cvec(wd);
  return out;
}

inline BlowupDeriv res_field(const MassSystem& sys, const Cluster& k, const BlowupState& b,
                             const Forcing& f) {
  if (!f.empty() && f.variant != b.variant)
    throw std::invalid_argument("res_field: forcing/state variant mismatch");
  int d = 2 * k.size() - 4;
  return res_field(sys, k, b, f.P_at(b.tau), f.Q_at(b.tau, d));
}

/// h_k in the parabolic rescaled variables, plus the bracket u^{-2} h_k.
struct BlowupEnergy {
  double h = 0.0;
  double bracket = 0.0;  // u^{-2} h_k
};

inline BlowupEnergy energy_blowup(const MassSystem& sys, const Cluster& k,
                                  const BlowupState& b) {
  if (b.variant != BlowupVariant::Parabolic)
    throw std::invalid_argument("energy_blowup: parabolic variant required");
  auto mm = mass_metric(sys, k);
  FubiniData fd = fubini_data(sys, k, mm, b.s, b.w, b.pivot);
  BlowupEnergy e;
  double u2 = b.x * b.x;
  e.bracket = 0.5 * b.v * b.v + 0.5 * u2 * b.mu * b.mu + 0.5 * fd.F - fd.V;
  e.h = u2 * e.bracket;
  return e;
}

}  // namespace nbflow
