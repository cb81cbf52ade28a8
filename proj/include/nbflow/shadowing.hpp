// Numerical shadowing machinery: spectral splitting with exponential-bound
// certificates, the x*/phi extension, the weighted space Z_eta, the
// four-integral Lambda operator, Picard iteration, and the gradient-flow
// laboratory (Lojasiewicz exponent and arclength).
#pragma once

#include <cmath>
#include <functional>
#include <memory>

#include <unsupported/Eigen/MatrixFunctions>

#include "nbflow/centconfig.hpp"

namespace nbflow {

// ---------------------------------------------------------------------------
// Spectral splitting

/// One invariant block of the splitting: column basis B, coefficient rows R
/// (the matching rows of S^{-1}) and the small matrix At = R A B, so that
/// e^{At} pi = B e^{At t} R without ever exponentiating the full matrix.
struct SplitBlock {
  Eigen::MatrixXd B, R, At;

  int dim() const { return (int)B.cols(); }

  Eigen::MatrixXd projection(int d) const {
    return dim() ? Eigen::MatrixXd(B * R) : Eigen::MatrixXd::Zero(d, d);
  }

  Eigen::MatrixXd expA(double t, int d) const {
    if (!dim()) return Eigen::MatrixXd::Zero(d, d);
    return B * (At * t).exp() * R;
  }
};

struct LinearSplit {
  Eigen::MatrixXd A;
  SplitBlock stable, center, unstable;
  double beta = 0.0;
  double eps = 0.0;
  double C_eps = 1.0;

  int d() const { return (int)A.rows(); }
  Eigen::MatrixXd pi_s() const { return stable.projection(d()); }
  Eigen::MatrixXd pi_c() const { return center.projection(d()); }
  Eigen::MatrixXd pi_u() const { return unstable.projection(d()); }

  /// e^{At} pi_s (use t >= 0), e^{At} pi_cu (use t <= 0).
  Eigen::MatrixXd expA_pi_s(double t) const { return stable.expA(t, d()); }
  Eigen::MatrixXd expA_pi_cu(double t) const {
    return center.expA(t, d()) + unstable.expA(t, d());
  }
};

namespace detail {

/// Basis of the generalized eigenspace of the eigenvalue group `keep`:
/// annihilate every other eigenvalue by the polynomial prod (A - lambda_j I)
/// and take the column space of the result.
inline Eigen::MatrixXd group_basis(const Eigen::MatrixXd& A,
                                   const std::vector<std::complex<double>>& others,
                                   int expect_dim) {
  int d = (int)A.rows();
  Eigen::MatrixXcd P = Eigen::MatrixXcd::Identity(d, d);
  Eigen::MatrixXcd Ac = A.cast<std::complex<double>>();
  for (auto lam : others) P = (Ac - lam * Eigen::MatrixXcd::Identity(d, d)) * P;
  Eigen::MatrixXd Pr = P.real();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Pr, Eigen::ComputeFullU);
  return svd.matrixU().leftCols(expect_dim);
}

}  // namespace detail

/// Split R^d into stable/center/unstable generalized eigenspaces of A and
/// certify the exponential bounds on a log-spaced grid.
inline LinearSplit spectral_split(const Eigen::MatrixXd& A, double eps = -1.0,
                                  double re_tol = 1e-10) {
  int d = (int)A.rows();
  LinearSplit out;
  out.A = A;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  std::vector<std::complex<double>> ls(d), lc, lu;
  for (int i = 0; i < d; ++i) ls[i] = es.eigenvalues()[i];

  std::vector<std::complex<double>> gs, gc, gu;
  out.beta = 0.0;
  for (auto lam : ls) {
    if (std::abs(lam.real()) <= re_tol)
      gc.push_back(lam);
    else {
      (lam.real() < 0 ? gs : gu).push_back(lam);
      if (out.beta == 0.0 || std::abs(lam.real()) < out.beta)
        out.beta = std::abs(lam.real());
    }
  }
  if (eps < 0) eps = out.beta / 4.0;
  if (out.beta > 0 && !(eps > 0 && eps < out.beta))
    throw std::invalid_argument("spectral_split: eps must lie in (0, beta)");
  out.eps = eps;

  auto make_block = [&](const std::vector<std::complex<double>>& mine,
                        const std::vector<std::complex<double>>& o1,
                        const std::vector<std::complex<double>>& o2) {
    SplitBlock blk;
    if (mine.empty()) return blk;
    std::vector<std::complex<double>> others = o1;
    others.insert(others.end(), o2.begin(), o2.end());
    blk.B = others.empty() ? Eigen::MatrixXd::Identity(d, d)
                           : detail::group_basis(A, others, (int)mine.size());
    return blk;
  };
  out.stable = make_block(gs, gc, gu);
  out.center = make_block(gc, gs, gu);
  out.unstable = make_block(gu, gs, gc);

  // Assemble S = [B_s B_c B_u], invert, distribute rows.
  Eigen::MatrixXd S(d, d);
  int col = 0;
  for (SplitBlock* b : {&out.stable, &out.center, &out.unstable}) {
    if (b->dim()) S.middleCols(col, b->dim()) = b->B;
    col += b->dim();
  }
  if (col != d) throw std::runtime_error("spectral_split: eigenspace dimensions inconsistent");
  Eigen::MatrixXd Sinv = S.inverse();
  int row = 0;
  for (SplitBlock* b : {&out.stable, &out.center, &out.unstable}) {
    if (b->dim()) {
      b->R = Sinv.middleRows(row, b->dim());
      b->At = b->R * A * b->B;
    }
    row += b->dim();
  }

  // C_eps: sample the bound ratios on a log grid, inflate 10%.
  double C = 1.0;
  double Tmax = out.beta > 0 ? 50.0 / out.beta : 50.0;
  for (int i = 0; i <= 40; ++i) {
    double t = std::pow(10.0, -3.0 + i * (std::log10(Tmax) + 3.0) / 40.0);
    if (out.stable.dim())
      C = std::max(C, out.stable.expA(t, d).norm() * std::exp((out.beta - eps) * t));
    if (out.unstable.dim())
      C = std::max(C, out.unstable.expA(-t, d).norm() * std::exp((out.beta - eps) * t));
    if (out.center.dim()) {
      C = std::max(C, out.center.expA(t, d).norm() * std::exp(-eps * t));
      C = std::max(C, out.center.expA(-t, d).norm() * std::exp(-eps * t));
    }
  }
  out.C_eps = 1.1 * C;
  return out;
}

// ---------------------------------------------------------------------------
// The weighted space and the shadow problem

struct WeightedTrajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> z;
  double eta = 0.0;

  double eta_norm() const {
    double n = 0.0;
    for (size_t i = 0; i < t.size(); ++i)
      n = std::max(n, std::exp(eta * t[i]) * z[i].norm());
    return n;
  }

  Eigen::VectorXd at(double x) const {
    if (x <= t.front()) return z.front();
    if (x >= t.back()) return z.back();
    size_t lo = 0, hi = t.size() - 1;
    while (lo + 1 < hi) {
      size_t mid = (lo + hi) / 2;
      (t[mid] <= x ? lo : hi) = mid;
    }
    double th = (x - t[lo]) / (t[lo + 1] - t[lo]);
    return (1 - th) * z[lo] + th * z[lo + 1];
  }
};

/// C^2 radial cutoff: 1 on [0, R], 0 beyond 2R, quintic smoothstep between.
inline double cutoff_bump(double rho, double R) {
  if (rho <= R) return 1.0;
  if (rho >= 2.0 * R) return 0.0;
  double u = (rho - R) / R;
  return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

struct ShadowProblem {
  int d = 0;
  Eigen::MatrixXd A;  // Df(0)
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;          // f(0) = 0
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> g;  // perturbation
  std::function<double(const Eigen::VectorXd&)> membership;          // residual of N
  std::function<Eigen::VectorXd(double)> xref;                       // on [0, T_f]
  double T_f = 0.0;
  double cutoff_R = 0.5;
  double alpha = 0.0;  // decay certificate for g along xref

  /// Cut nonlinearity h(x) = chi(|x|)(f(x) - Ax).
  Eigen::VectorXd h(const Eigen::VectorXd& x) const {
    double chi = cutoff_bump(x.norm(), cutoff_R);
    if (chi == 0.0) return Eigen::VectorXd::Zero(d);
    return chi * (f(x) - A * x);
  }

  Eigen::VectorXd xstar(double t) const {
    if (t < 0.0) return xref(0.0);
    return xref(std::min(t, T_f));
  }

  /// phi(t) = -Ax(0) - h(x(0)) - g(x(0), t) for t < 0, zero for t > 0.
  Eigen::VectorXd phi(double t) const {
    if (t >= 0.0) return Eigen::VectorXd::Zero(d);
    Eigen::VectorXd x0 = xref(0.0);
    return -(A * x0) - h(x0) - g(x0, t);
  }
};

/// x* and phi sampled on a grid (the spec'd extension operation, mostly a
/// convenience for inspection; Lambda evaluates both analytically).
inline std::pair<WeightedTrajectory, WeightedTrajectory> extend_and_force(
    const ShadowProblem& p, const std::vector<double>& grid) {
  WeightedTrajectory xs, phis;
  xs.t = phis.t = grid;
  for (double t : grid) {
    xs.z.push_back(p.xstar(t));
    phis.z.push_back(p.phi(t));
  }
  return {xs, phis};
}

/// Nonuniform grid on [-T_b, T_f], geometric refinement toward 0 where phi
/// jumps and x* loses differentiability.
inline std::vector<double> shadow_grid(double T_b, double T_f, double h0 = 1e-3,
                                       double ratio = 1.12) {
  std::vector<double> g{0.0};
  for (double sgn : {-1.0, 1.0}) {
    double lim = sgn < 0 ? T_b : T_f;
    double x = h0;
    while (x < lim) {
      g.push_back(sgn * x);
      x *= ratio;
    }
    g.push_back(sgn * lim);
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// One application of the four-integral operator Lambda to z; composite
/// Simpson on the nonuniform grid. The g-difference between the shadow and
/// the reference is folded into the first/third integrands so the fixed
/// point solves the perturbed equation even for state-dependent g.
inline WeightedTrajectory lambda_apply(const LinearSplit& split, const ShadowProblem& p,
                                       const WeightedTrajectory& z) {
  if (split.beta > 0 && z.eta >= split.beta - split.eps)
    throw std::invalid_argument("lambda_apply: eta must be below beta - eps");
  const auto& grid = z.t;
  int d = p.d;

  auto delta = [&](double tau) -> Eigen::VectorXd {
    Eigen::VectorXd xs = p.xstar(tau), zv = z.at(tau);
    return (p.h(xs + zv) - p.h(xs)) + (p.g(xs + zv, tau) - p.g(xs, tau));
  };
  auto force = [&](double tau) -> Eigen::VectorXd { return p.g(p.xstar(tau), tau) + p.phi(tau); };

  WeightedTrajectory out;
  out.t = grid;
  out.eta = z.eta;
  out.z.assign(grid.size(), Eigen::VectorXd::Zero(d));

  size_t n = grid.size();
  // Integrand samples at nodes and midpoints, shared across output points.
  std::vector<Eigen::VectorXd> dn(n), fn(n), dm(n - 1), fm(n - 1);
  for (size_t j = 0; j < n; ++j) {
    dn[j] = delta(grid[j]);
    fn[j] = force(grid[j]);
  }
  for (size_t j = 0; j + 1 < n; ++j) {
    double m = 0.5 * (grid[j] + grid[j + 1]);
    dm[j] = delta(m);
    fm[j] = force(m);
  }
  // phi jumps at tau = 0; a panel ending there must close with the left
  // limit of the forcing (the g terms cancel in it) or the node value
  // injects an O(h) error into the whole fixed point.
  ptrdiff_t i0 = -1;
  Eigen::VectorXd f0_left;
  for (size_t j = 0; j < n; ++j)
    if (grid[j] == 0.0) {
      i0 = static_cast<ptrdiff_t>(j);
      Eigen::VectorXd x0 = p.xstar(0.0);
      f0_left = -(p.A * x0) - p.h(x0);
      break;
    }

  for (size_t i = 0; i < n; ++i) {
    double t = grid[i];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    // Stable part over (-inf, t], grid-truncated at the left end.
    for (size_t j = 0; j + 1 <= i; ++j) {
      double a = grid[j], b = grid[j + 1], m = 0.5 * (a + b);
      const Eigen::VectorXd& fb =
          static_cast<ptrdiff_t>(j + 1) == i0 ? f0_left : fn[j + 1];
      Eigen::VectorXd ia = split.expA_pi_s(t - a) * (dn[j] - fn[j]);
      Eigen::VectorXd im = split.expA_pi_s(t - m) * (dm[j] - fm[j]);
      Eigen::VectorXd ib = split.expA_pi_s(t - b) * (dn[j + 1] - fb);
      acc += (b - a) / 6.0 * (ia + 4.0 * im + ib);
    }
    // Center-unstable part over [t, +inf), grid-truncated at the right end.
    for (size_t j = i; j + 1 < n; ++j) {
      double a = grid[j], b = grid[j + 1], m = 0.5 * (a + b);
      const Eigen::VectorXd& fb =
          static_cast<ptrdiff_t>(j + 1) == i0 ? f0_left : fn[j + 1];
      Eigen::VectorXd ia = split.expA_pi_cu(t - a) * (dn[j] - fn[j]);
      Eigen::VectorXd im = split.expA_pi_cu(t - m) * (dm[j] - fm[j]);
      Eigen::VectorXd ib = split.expA_pi_cu(t - b) * (dn[j + 1] - fb);
      acc -= (b - a) / 6.0 * (ia + 4.0 * im + ib);
    }
    out.z[i] = acc;
  }
  return out;
}

struct ShadowReport {
  double eta = 0.0;
  double kappa = 0.0;
  int iterations = 0;
  double C_fit = 0.0;
  double rate_fit = 0.0;
  double membership_residual = 0.0;
  double z_norm = 0.0;
  bool converged = false;
};

struct ShadowSolution {
  WeightedTrajectory z;
  ShadowReport report;
};

/// Picard iteration of Lambda from z = 0 until successive eta-norm
/// differences fall below tol; fits the exponential decay of the fixed point
/// and checks membership of y = x* + z along the grid.
inline ShadowSolution picard_solve(const LinearSplit& split, const ShadowProblem& p,
                                   double eta, double T_b = -1.0, double tol = 1e-10,
                                   int max_iter = 100, double grid_h0 = 1e-3,
                                   double grid_ratio = 1.12) {
  if (T_b < 0) {
    double rate = std::max(split.beta - split.eps, 1e-3);
    T_b = std::max(5.0, -std::log(1e-12) / rate);
  }
  ShadowSolution sol;
  sol.z.t = shadow_grid(T_b, p.T_f, grid_h0, grid_ratio);
  sol.z.eta = eta;
  sol.z.z.assign(sol.z.t.size(), Eigen::VectorXd::Zero(p.d));
  sol.report.eta = eta;

  double prev_diff = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    WeightedTrajectory next = lambda_apply(split, p, sol.z);
    double diff = 0.0;
    for (size_t i = 0; i < next.t.size(); ++i)
      diff = std::max(diff, std::exp(eta * next.t[i]) * (next.z[i] - sol.z.z[i]).norm());
    sol.z.z = next.z;
    sol.report.iterations = it;
    if (prev_diff > 0 && prev_diff > 1e-300)
      sol.report.kappa = std::max(sol.report.kappa, diff / prev_diff);
    if (diff < tol) {
      sol.report.converged = true;
      break;
    }
    if (prev_diff > 0 && diff > 10.0 * prev_diff && diff > 1.0) break;  // divergence
    prev_diff = diff;
  }
  sol.report.z_norm = sol.z.eta_norm();

  // Exponential fit of |z| on t > 0 and the membership check along y.
  // Interval weights keep the geometric clustering of the grid near t = 0
  // from swamping the tail, which carries the decay rate.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  const auto& gt = sol.z.t;
  for (size_t i = 0; i < gt.size(); ++i) {
    double t = gt[i];
    Eigen::VectorXd y = p.xstar(t) + sol.z.z[i];
    sol.report.membership_residual = std::max(sol.report.membership_residual, p.membership(y));
    double zn = sol.z.z[i].norm();
    if (t > 0 && zn > 1e-300) {
      double w = 0.0;
      if (i > 0) w += 0.5 * (gt[i] - gt[i - 1]);
      if (i + 1 < gt.size()) w += 0.5 * (gt[i + 1] - gt[i]);
      double ly = std::log(zn);
      sw += w; sx += w * t; sy += w * ly;
      sxx += w * t * t; sxy += w * t * ly;
      ++cnt;
    }
  }
  if (cnt >= 2) {
    double det = sw * sxx - sx * sx;
    double slope = (sw * sxy - sx * sy) / det;
    double icept = (sy * sxx - sx * sxy) / det;
    sol.report.rate_fit = -slope;
    sol.report.C_fit = std::exp(icept);
  }
  return sol;
}

/// Contraction factor of Lambda between two given iterates.
inline double measure_contraction(const LinearSplit& split, const ShadowProblem& p,
                                  const WeightedTrajectory& z1, const WeightedTrajectory& z2) {
  WeightedTrajectory l1 = lambda_apply(split, p, z1);
  WeightedTrajectory l2 = lambda_apply(split, p, z2);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < z1.t.size(); ++i) {
    double w = std::exp(z1.eta * z1.t[i]);
    num = std::max(num, w * (l1.z[i] - l2.z[i]).norm());
    den = std::max(den, w * (z1.z[i] - z2.z[i]).norm());
  }
  return num / den;
}

// ---------------------------------------------------------------------------
// Blow-up shadow problem

/// Package the rescaled cluster system near an equilibrium as a ShadowProblem:
/// state xi = (u or r, v - v0, s - s0, w) with N = {first component = 0},
/// autonomous part from res_field with zero forcing, perturbation from the
/// sampled forcing data, reference trajectory from the transformed samples.
inline ShadowProblem make_blowup_shadow_problem(const MassSystem& sys, const Cluster& k,
                                                const EquilibriumData& eq,
                                                const BlowupTrajectory& traj,
                                                BlowupVariant variant) {
  int ds = 2 * k.size() - 4;
  ShadowProblem p;
  p.d = 2 + 2 * ds;

  auto unpack = [=, s0 = eq.s0, pivot = eq.pivot, v0 = eq.v0](const Eigen::VectorXd& xi) {
    BlowupState b;
    b.variant = variant;
    b.x = xi[0];
    b.v = xi[1] + v0;
    b.s = s0 + real_to_cvec(xi.segment(2, ds));
    b.w = real_to_cvec(xi.segment(2 + ds, ds));
    b.pivot = pivot;
    return b;
  };
  auto pack_deriv = [=](const BlowupDeriv& bd) {
    Eigen::VectorXd dxi(2 + 2 * ds);
    dxi[0] = bd.xdot;
    dxi[1] = bd.vdot;
    dxi.segment(2, ds) = cvec_to_real(bd.sdot);
    dxi.segment(2 + ds, ds) = cvec_to_real(bd.wdot);
    return dxi;
  };

  Eigen::VectorXd zeroQ = Eigen::VectorXd::Zero(ds);
  p.f = [=](const Eigen::VectorXd& xi) {
    return pack_deriv(res_field(sys, k, unpack(xi), 0.0, zeroQ));
  };
  // Problem time is shifted so the first reference sample sits at tau = 0;
  // the forcing tables keep the original tau axis.
  Forcing fc = traj.forcing;
  double tau0 = traj.samples.front().tau;
  p.g = [=](const Eigen::VectorXd& xi, double tau) {
    BlowupState b = unpack(xi);
    b.tau = tau + tau0;
    Eigen::VectorXd full = pack_deriv(res_field(sys, k, b, fc.P_at(b.tau), fc.Q_at(b.tau, ds)));
    Eigen::VectorXd base = pack_deriv(res_field(sys, k, b, 0.0, zeroQ));
    return Eigen::VectorXd(full - base);
  };
  p.membership = [](const Eigen::VectorXd& xi) { return std::abs(xi[0]); };

  // Df(0) by central differences.
  p.A.resize(p.d, p.d);
  double h = 1e-6;
  for (int j = 0; j < p.d; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(p.d);
    e[j] = h;
    p.A.col(j) = (p.f(e) - p.f(-e)) / (2.0 * h);
  }

  // Reference solution: trajectory samples in xi coordinates on the shifted axis.
  auto samples = std::make_shared<WeightedTrajectory>();
  for (const auto& b : traj.samples) {
    Eigen::VectorXd xi(p.d);
    xi[0] = b.x;
    xi[1] = b.v - eq.v0;
    xi.segment(2, ds) = cvec_to_real(Eigen::VectorXcd(b.s - eq.s0));
    xi.segment(2 + ds, ds) = cvec_to_real(b.w);
    samples->t.push_back(b.tau - tau0);
    samples->z.push_back(xi);
  }
  p.T_f = samples->t.back();
  p.xref = [samples](double t) { return samples->at(t); };

  // Decay certificate for g along the reference: |g| = O(x^2) and the first
  // component decays exponentially; fit the rate.
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (size_t i = samples->t.size() / 2; i < samples->t.size(); ++i) {
      double gn = p.g(samples->z[i], samples->t[i]).norm();
      if (gn > 1e-300) {
        double t = samples->t[i], ly = std::log(gn);
        sx += t; sy += ly; sxx += t * t; sxy += t * ly;
        ++cnt;
      }
    }
    if (cnt >= 2) p.alpha = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  }
  return p;
}

/// Suffix of a transformed trajectory inside a neighborhood of the
/// equilibrium, the usable reference solution for the shadow problem.
inline BlowupTrajectory trim_to_neighborhood(const BlowupTrajectory& traj,
                                             const EquilibriumData& eq, double radius) {
  size_t start = traj.samples.size();
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& b = traj.samples[i];
    double d = std::abs(b.x) + std::abs(b.v - eq.v0) +
               (b.s.size() ? (b.s - eq.s0).norm() : 0.0) + (b.w.size() ? b.w.norm() : 0.0);
    if (d < radius) { start = i; break; }
  }
  if (start >= traj.samples.size())
    throw std::runtime_error("trim_to_neighborhood: trajectory never enters the neighborhood");
  BlowupTrajectory out;
  out.samples.assign(traj.samples.begin() + start, traj.samples.end());
  out.forcing = traj.forcing;  // forcing keeps the full tau range
  return out;
}

inline double default_eta(const EquilibriumData& eq) {
  return std::min(eq.beta / 2.0, std::abs(eq.v0) / 4.0);
}

// ---------------------------------------------------------------------------
// Gradient-flow laboratory

struct GradFlowResult {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<double> arclength;  // cumulative, same grid
  double total = 0.0;
  bool tail_cauchy = false;
  double tail_value = 0.0;  // arclength over the last dyadic window
};

/// Integrate x' = k grad~W(x) + gamma_pert(x) and accumulate Riemannian
/// arclength; grad~W = Ginv gradW for the supplied metric G.
inline GradFlowResult gradient_flow_run(
    const std::function<double(const Eigen::VectorXd&)>& W,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradW, double kcoef,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gamma_pert,
    const Eigen::VectorXd& x0, const Eigen::MatrixXd& metric, double t_max,
    double tail_tol = 1e-4) {
  (void)W;
  if (kcoef == 0.0) throw std::invalid_argument("gradient_flow_run: k must be nonzero");
  Eigen::LLT<Eigen::MatrixXd> Gllt(metric);
  auto rhs = [&](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd v = kcoef * Gllt.solve(gradW(x));
    if (gamma_pert) v += gamma_pert(x);
    return v;
  };

  GradFlowResult out;
  out.t.push_back(0.0);
  out.x.push_back(x0);
  out.arclength.push_back(0.0);
  IntegOptions opt;
  opt.rtol = opt.atol = 1e-12;
  opt.hmax = 1e11;
  auto speed = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd v = rhs(0.0, x);
    return std::sqrt(v.dot(metric * v));
  };
  auto observer = [&](const DenseSegment& seg, double t, const Eigen::VectorXd& y) {
    double a = seg.t0, b = seg.t0 + seg.h, m = 0.5 * (a + b);
    double ds = seg.h / 6.0 *
                (speed(seg.y0) + 4.0 * speed(seg.eval(m)) + speed(y));
    out.t.push_back(t);
    out.x.push_back(y);
    out.arclength.push_back(out.arclength.back() + ds);
    return StepOutcome::Continue;
  };
  integrate_adaptive(rhs, x0, 0.0, t_max, opt, observer);
  out.total = out.arclength.back();

  // Tail-Cauchy: arclength accumulated over [t_max/2, t_max].
  double half = t_max / 2.0;
  double at_half = out.arclength.back();
  for (size_t i = 0; i < out.t.size(); ++i)
    if (out.t[i] >= half) { at_half = out.arclength[i]; break; }
  out.tail_value = out.total - at_half;
  out.tail_cauchy = out.tail_value < tail_tol;
  return out;
}

struct LojasiewiczFit {
  double alpha = 0.0;
  bool alpha_lt_2 = false;
};

/// Shell-sampled exponent: the smallest alpha with |gradW|^2 >= |W - W(0)|^alpha
/// near 0 is the sup of log|gradW|^2 / log|W - W(0)| over the samples.
inline LojasiewiczFit lojasiewicz_estimate(
    const std::function<double(const Eigen::VectorXd&)>& W,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradW, int dim,
    double radius, int n_shells = 24, int n_dirs = 16, unsigned seed = 7) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss;
  double W0 = W(Eigen::VectorXd::Zero(dim));
  LojasiewiczFit fit;
  bool any = false;
  for (int i = 0; i < n_shells; ++i) {
    double rho = radius * std::pow(1e-4, double(i) / (n_shells - 1));
    for (int j = 0; j < n_dirs; ++j) {
      Eigen::VectorXd dir(dim);
      for (int l = 0; l < dim; ++l) dir[l] = gauss(rng);
      dir *= rho / dir.norm();
      double dW = std::abs(W(dir) - W0);
      double g2 = gradW(dir).squaredNorm();
      if (dW < 1e-300 || g2 < 1e-300) continue;
      double ratio = std::log(g2) / std::log(dW);
      if (!any || ratio > fit.alpha) fit.alpha = ratio;
      any = true;
    }
  }
  if (!any) throw std::domain_error("lojasiewicz_estimate: W constant near 0");
  fit.alpha_lt_2 = fit.alpha < 2.0;
  return fit;
}

}  // namespace nbflow
