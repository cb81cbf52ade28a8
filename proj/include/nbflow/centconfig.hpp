// Central configurations of a cluster: residual evaluation, a damped Newton
// solver with analytic Jacobian, the restricted shape-space Hessian and the
// spectral classification used by the blow-up equilibria.
#pragma once

#include <cmath>
#include <random>

#include "nbflow/blowup.hpp"

namespace nbflow {

struct CentralConfig {
  std::vector<cplx> q;  // |k| positions in E_k (cluster only, center of mass 0)
  double lambda = 0.0;
  bool normalized = false;  // I_k = 1
};

struct CcResidual {
  double norm = 0.0;
  double lambda = 0.0;
};

inline double cluster_inertia(const MassSystem& sys, const Cluster& k,
                              const std::vector<cplx>& q) {
  double I = 0.0;
  for (int a = 0; a < k.size(); ++a) I += sys.masses[k.indices[a]] * std::norm(q[a]);
  return I;
}

inline double cluster_potential(const MassSystem& sys, const Cluster& k,
                                const std::vector<cplx>& q) {
  double u = 0.0;
  for (int a = 0; a < k.size(); ++a)
    for (int b = a + 1; b < k.size(); ++b) {
      double r = std::abs(q[a] - q[b]);
      if (r == 0.0) throw std::domain_error("cc: coincident bodies " + pair_name(a, b));
      u += sys.masses[k.indices[a]] * sys.masses[k.indices[b]] / r;
    }
  return u;
}

inline std::vector<cplx> cluster_grad(const MassSystem& sys, const Cluster& k,
                                      const std::vector<cplx>& q) {
  std::vector<cplx> g(k.size(), cplx(0, 0));
  for (int a = 0; a < k.size(); ++a)
    for (int b = 0; b < k.size(); ++b) {
      if (a == b) continue;
      cplx d = q[b] - q[a];
      double r = std::abs(d);
      g[a] += sys.masses[k.indices[a]] * sys.masses[k.indices[b]] * d / (r * r * r);
    }
  return g;
}

/// Residual of grad_i U_k + lambda m_i q_i with lambda = U_k/I_k forced by
/// homogeneity; mass-metric norm sqrt(sum |g_i|^2/m_i).
inline CcResidual cc_residual(const MassSystem& sys, const Cluster& k,
                              const std::vector<cplx>& q) {
  CcResidual out;
  double I = cluster_inertia(sys, k, q);
  double U = cluster_potential(sys, k, q);
  out.lambda = U / I;
  auto g = cluster_grad(sys, k, q);
  double s2 = 0.0;
  for (int a = 0; a < k.size(); ++a) {
    cplx res = g[a] + out.lambda * sys.masses[k.indices[a]] * q[a];
    s2 += std::norm(res) / sys.masses[k.indices[a]];
  }
  out.norm = std::sqrt(s2);
  return out;
}

namespace detail {

/// Stacked residual for the solver: CC equations, center of mass,
/// normalization I = 1 and the rotation gauge (first body on the x-axis).
inline Eigen::VectorXd cc_system(const MassSystem& sys, const Cluster& k,
                                 const Eigen::VectorXd& x) {
  int kk = k.size();
  std::vector<cplx> q(kk);
  for (int a = 0; a < kk; ++a) q[a] = {x[2 * a], x[2 * a + 1]};
  double I = cluster_inertia(sys, k, q);
  double U = cluster_potential(sys, k, q);
  double lam = U / I;
  auto g = cluster_grad(sys, k, q);
  Eigen::VectorXd F(2 * kk + 4);
  cplx com = 0.0;
  for (int a = 0; a < kk; ++a) {
    double m = sys.masses[k.indices[a]];
    cplx res = g[a] + lam * m * q[a];
    F[2 * a] = res.real();
    F[2 * a + 1] = res.imag();
    com += m * q[a];
  }
  F[2 * kk] = com.real();
  F[2 * kk + 1] = com.imag();
  F[2 * kk + 2] = I - 1.0;
  F[2 * kk + 3] = q[0].imag();
  return F;
}

inline Eigen::MatrixXd cc_jacobian(const MassSystem& sys, const Cluster& k,
                                   const Eigen::VectorXd& x) {
  int kk = k.size();
  std::vector<cplx> q(kk);
  std::vector<double> m(kk);
  for (int a = 0; a < kk; ++a) {
    q[a] = {x[2 * a], x[2 * a + 1]};
    m[a] = sys.masses[k.indices[a]];
  }
  double I = cluster_inertia(sys, k, q);
  double U = cluster_potential(sys, k, q);
  double lam = U / I;
  auto g = cluster_grad(sys, k, q);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * kk + 4, 2 * kk);
  // Hessian of U_k.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * kk, 2 * kk);
  for (int a = 0; a < kk; ++a)
    for (int b = 0; b < kk; ++b) {
      if (a == b) continue;
      cplx d = q[b] - q[a];
      double r = std::abs(d);
      Eigen::Matrix2d uu;
      double ux = d.real() / r, uy = d.imag() / r;
      uu << ux * ux, ux * uy, ux * uy, uy * uy;
      Eigen::Matrix2d blk = m[a] * m[b] / (r * r * r) *
                            (Eigen::Matrix2d::Identity() - 3.0 * uu);
      H.block<2, 2>(2 * a, 2 * b) += blk;
      H.block<2, 2>(2 * a, 2 * a) -= blk;
    }
  // d lambda / dq_b = (grad_b U - 2 lam m_b q_b)/I.
  Eigen::RowVectorXd dlam(2 * kk);
  for (int b = 0; b < kk; ++b) {
    dlam[2 * b] = (g[b].real() - 2.0 * lam * m[b] * q[b].real()) / I;
    dlam[2 * b + 1] = (g[b].imag() - 2.0 * lam * m[b] * q[b].imag()) / I;
  }
  for (int a = 0; a < kk; ++a) {
    J.block(2 * a, 0, 2, 2 * kk) = H.block(2 * a, 0, 2, 2 * kk);
    J.block(2 * a, 0, 1, 2 * kk) += m[a] * q[a].real() * dlam;
    J.block(2 * a + 1, 0, 1, 2 * kk) += m[a] * q[a].imag() * dlam;
    J(2 * a, 2 * a) += lam * m[a];
    J(2 * a + 1, 2 * a + 1) += lam * m[a];
    J(2 * kk, 2 * a) = m[a];
    J(2 * kk + 1, 2 * a + 1) = m[a];
    J(2 * kk + 2, 2 * a) = 2.0 * m[a] * q[a].real();
    J(2 * kk + 2, 2 * a + 1) = 2.0 * m[a] * q[a].imag();
  }
  J(2 * kk + 3, 1) = 1.0;
  return J;
}

}  // namespace detail

/// Damped (Levenberg-style) Newton on the stacked residual; result is
/// normalized to I_k = 1 with the first body rotated onto the positive x-axis.
inline CentralConfig find_cc(const MassSystem& sys, const Cluster& k,
                             const std::vector<cplx>& guess, int max_iter = 200,
                             double tol = 1e-13) {
  k.validate_against(sys);
  int kk = k.size();
  if ((int)guess.size() != kk) throw std::invalid_argument("find_cc: guess size mismatch");

  // Pre-normalize the guess: center and scale to I = 1.
  Eigen::VectorXd x(2 * kk);
  {
    std::vector<cplx> q = guess;
    cplx c = 0.0;
    double mk = 0.0;
    for (int a = 0; a < kk; ++a) {
      c += sys.masses[k.indices[a]] * q[a];
      mk += sys.masses[k.indices[a]];
    }
    c /= mk;
    for (auto& qa : q) qa -= c;
    double I = cluster_inertia(sys, k, q);
    double sc = 1.0 / std::sqrt(I);
    cplx rot = std::abs(q[0]) > 0 ? std::conj(q[0]) / std::abs(q[0]) : cplx(1, 0);
    for (int a = 0; a < kk; ++a) {
      q[a] *= sc * rot;
      x[2 * a] = q[a].real();
      x[2 * a + 1] = q[a].imag();
    }
  }

  double nu = 1e-8;
  Eigen::VectorXd F = detail::cc_system(sys, k, x);
  for (int it = 0; it < max_iter; ++it) {
    if (F.norm() < tol) break;
    Eigen::MatrixXd J = detail::cc_jacobian(sys, k, x);
    Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::VectorXd JtF = J.transpose() * F;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd A = JtJ + nu * Eigen::MatrixXd::Identity(2 * kk, 2 * kk);
      Eigen::VectorXd dx = A.ldlt().solve(-JtF);
      Eigen::VectorXd Fnew = detail::cc_system(sys, k, x + dx);
      if (Fnew.norm() < F.norm()) {
        x += dx;
        F = Fnew;
        nu = std::max(nu * 0.25, 1e-14);
        accepted = true;
        break;
      }
      nu *= 4.0;
    }
    if (!accepted) break;
  }
  if (F.norm() > 1e-9)
    throw std::runtime_error("find_cc: no convergence, last residual " +
                             std::to_string(F.norm()));

  CentralConfig cc;
  cc.q.resize(kk);
  for (int a = 0; a < kk; ++a) cc.q[a] = {x[2 * a], x[2 * a + 1]};
  // Exact normalization and gauge fix of the converged point.
  double I = cluster_inertia(sys, k, cc.q);
  double sc = 1.0 / std::sqrt(I);
  for (auto& qa : cc.q) qa *= sc;
  cplx rot = std::conj(cc.q[0]) / std::abs(cc.q[0]);
  for (auto& qa : cc.q) qa *= rot;
  cc.lambda = cc_residual(sys, k, cc.q).lambda;
  cc.normalized = true;
  return cc;
}

/// Chart coordinates of a central configuration (relative z with the last
/// body dropped; the cluster's own center of mass is at the origin).
inline ShapeState cc_to_shape(const MassSystem& sys, const Cluster& k,
                              const CentralConfig& cc, int pivot = -1) {
  int kk = k.size();
  Eigen::VectorXcd z(kk - 1);
  for (int a = 0; a < kk - 1; ++a) z[a] = cc.q[a];
  auto mm = mass_metric(sys, k);
  ShapeState sh;
  sh.r = mass_norm(mm, z);
  sh.pivot = pivot < 0 ? auto_pivot(z, kk - 2) : pivot;
  if (std::abs(z[sh.pivot]) < 1e-12 * sh.r)
    throw std::domain_error("cc_to_shape: chart singular");
  sh.theta = std::arg(z[sh.pivot]);
  sh.s.resize(kk - 2);
  sh.omega = Eigen::VectorXcd::Zero(kk - 2);
  int a = 0;
  for (int i = 0; i < kk - 1; ++i)
    if (i != sh.pivot) sh.s[a++] = z[i] / z[sh.pivot];
  return sh;
}

struct RestrictedHessian {
  Eigen::MatrixXd H;       // A^{-1} Hess V at s0 (empty for |k| = 2)
  Eigen::VectorXd eigs;    // sorted ascending, real
};

/// D grad~ V at the chart point of the CC; 5-point finite differences of the
/// analytic gradient, eigenvalues from the symmetric pencil (Hess V, A).
inline RestrictedHessian restricted_hessian(const MassSystem& sys, const Cluster& k,
                                            const CentralConfig& cc, int pivot = -1) {
  int kk = k.size();
  int d = 2 * kk - 4;
  RestrictedHessian out;
  out.H.resize(d, d);
  out.eigs.resize(d);
  if (d == 0) return out;
  ShapeState sh = cc_to_shape(sys, k, cc, pivot);
  auto mm = mass_metric(sys, k);
  Eigen::VectorXd x0 = cvec_to_real(sh.s);
  double h = 1e-3 * std::max(1.0, x0.lpNorm<Eigen::Infinity>());
  Eigen::MatrixXd Hess(d, d);
  for (int l = 0; l < d; ++l) {
    auto gv = [&](double step) {
      Eigen::VectorXd x = x0;
      x[l] += step;
      return gradV(sys, k, mm, real_to_cvec(x), sh.pivot);
    };
    Hess.col(l) = (8.0 * (gv(h) - gv(-h)) - (gv(2 * h) - gv(-2 * h))) / (12.0 * h);
  }
  Hess = 0.5 * (Hess + Hess.transpose());
  FubiniData fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Hess, fd.A);
  out.eigs = es.eigenvalues();
  out.H = fd.A.llt().solve(Hess);
  return out;
}

/// Spectral data of the blow-up equilibrium attached to a CC.
struct EquilibriumData {
  Eigen::VectorXcd s0;
  int pivot = 0;
  double v0 = 0.0;          // +sqrt(2V) parabolic, -sqrt(2V) collision
  double V = 0.0;
  Eigen::VectorXd cs;       // restricted Hessian eigenvalues
  std::vector<std::pair<cplx, cplx>> lambda_pm;  // per eigenvalue c
  double beta = 0.0;        // spectral gap
  bool degenerate = false;
};

inline EquilibriumData classify_cc(const MassSystem& sys, const Cluster& k,
                                   const CentralConfig& cc, BlowupVariant mode,
                                   double degen_tol = 1e-8) {
  auto mm = mass_metric(sys, k);
  ShapeState sh = cc_to_shape(sys, k, cc);
  FubiniData fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  EquilibriumData eq;
  eq.s0 = sh.s;
  eq.pivot = sh.pivot;
  eq.V = fd.V;
  eq.v0 = (mode == BlowupVariant::Parabolic ? 1.0 : -1.0) * std::sqrt(2.0 * fd.V);
  eq.cs = restricted_hessian(sys, k, cc, sh.pivot).eigs;

  double beta = std::abs(eq.v0) / 2.0;  // u-direction eigenvalue -v0/2
  // v-direction eigenvalue v0 also contributes |v0| >= |v0|/2; kept implicit.
  double cmax = eq.cs.size() ? eq.cs.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < eq.cs.size(); ++i) {
    double c = eq.cs[i];
    cplx disc = std::sqrt(cplx(eq.v0 * eq.v0 + 16.0 * c, 0.0));
    cplx lp = (-eq.v0 + disc) / 4.0, lm = (-eq.v0 - disc) / 4.0;
    eq.lambda_pm.emplace_back(lp, lm);
    if (std::abs(c) < degen_tol * std::max(1.0, cmax)) eq.degenerate = true;
    for (cplx lam : {lp, lm})
      if (std::abs(lam.real()) > 1e-12) beta = std::min(beta, std::abs(lam.real()));
  }
  eq.beta = beta;
  return eq;
}

/// Multi-start search over random normalized shapes; configurations are
/// deduplicated by their sorted mutual-distance sets.
inline std::vector<CentralConfig> enumerate_ccs(const MassSystem& sys, const Cluster& k,
                                                int n_starts = 64, unsigned seed = 12345) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<CentralConfig> found;
  auto signature = [&](const CentralConfig& cc) {
    std::vector<double> dists;
    for (size_t a = 0; a < cc.q.size(); ++a)
      for (size_t b = a + 1; b < cc.q.size(); ++b)
        dists.push_back(std::abs(cc.q[a] - cc.q[b]));
    std::sort(dists.begin(), dists.end());
    return dists;
  };
  for (int trial = 0; trial < n_starts; ++trial) {
    std::vector<cplx> guess(k.size());
    for (auto& g : guess) g = {gauss(rng), gauss(rng)};
    try {
      CentralConfig cc = find_cc(sys, k, guess);
      auto sig = signature(cc);
      bool dup = false;
      for (const auto& other : found) {
        auto osig = signature(other);
        double diff = 0.0;
        for (size_t i = 0; i < sig.size(); ++i) diff = std::max(diff, std::abs(sig[i] - osig[i]));
        if (diff < 1e-6) { dup = true; break; }
      }
      if (!dup) found.push_back(cc);
    } catch (const std::exception&) {
      // diverged start, skip
    }
  }
  return found;
}

}  // namespace nbflow
