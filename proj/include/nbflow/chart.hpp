// The size-angle-shape chart for a cluster: z = r e^{i theta} hom(s)/||hom(s)||,
// Fubini-Study geometry (F, A, B, Omega, G, V), the Euler-Lagrange vector
// field in these coordinates and the energy identity.
#pragma once

#include <cmath>
#include <optional>

#include "nbflow/core.hpp"
#include "nbflow/dynamics.hpp"

namespace nbflow {

/// Positions/velocities of the bodies outside the cluster plus the cluster's
/// own center data; everything the time-dependent coupling terms need.
struct ExternalBodies {
  std::vector<double> masses;
  std::vector<cplx> q, v;
  cplx c = 0.0, cdot = 0.0;
};

/// Chart point of the cluster motion. s lives in C^{|k|-2}; `pivot` is the
/// index of the relative coordinate gauged to the real slot of the chart.
struct ShapeState {
  double t = 0.0;
  double r = 0.0;     // mass-metric size sqrt(I_k)
  double rho = 0.0;   // dr/dt
  double theta = 0.0;
  double mu = 0.0;    // cluster angular momentum
  Eigen::VectorXcd s;
  Eigen::VectorXcd omega;  // ds/dt
  int pivot = 0;
  std::optional<ExternalBodies> ext;
};

inline Eigen::VectorXcd embed_at_pivot(const Eigen::VectorXcd& s, int pivot, int dim_full,
                                       cplx pivot_value) {
  Eigen::VectorXcd h(dim_full);
  int a = 0;
  for (int i = 0; i < dim_full; ++i) h[i] = (i == pivot) ? pivot_value : s[a++];
  return h;
}

/// Homogeneous representative (s with 1 inserted at the pivot slot).
inline Eigen::VectorXcd hom_of(const Eigen::VectorXcd& s, int pivot, int dim_full) {
  return embed_at_pivot(s, pivot, dim_full, 1.0);
}

/// Complex basis direction of the l-th real chart coordinate (l = 2j: re s_j,
/// l = 2j+1: im s_j), embedded in C^{|k|-1} with 0 at the pivot.
inline Eigen::VectorXcd chart_basis(int l, int pivot, int dim_full) {
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(dim_full);
  int j = l / 2, a = 0;
  for (int i = 0; i < dim_full; ++i) {
    if (i == pivot) continue;
    if (a == j) {
      b[i] = (l % 2 == 0) ? cplx(1, 0) : cplx(0, 1);
      break;
    }
    ++a;
  }
  return b;
}

inline Eigen::VectorXd cvec_to_real(const Eigen::VectorXcd& s) {
  Eigen::VectorXd x(2 * s.size());
  for (int j = 0; j < s.size(); ++j) {
    x[2 * j] = s[j].real();
    x[2 * j + 1] = s[j].imag();
  }
  return x;
}

inline Eigen::VectorXcd real_to_cvec(const Eigen::VectorXd& x) {
  Eigen::VectorXcd s(x.size() / 2);
  for (int j = 0; j < s.size(); ++j) s[j] = {x[2 * j], x[2 * j + 1]};
  return s;
}

/// F, A, B, Omega, G and the shape potential V at a chart point.
struct FubiniData {
  double F = 0.0;
  Eigen::MatrixXd A;       // (2k-4)^2, F = w^T A w in real coordinates
  Eigen::RowVectorXd B;    // Omega/n^2 = B w
  double Omega = 0.0, G = 0.0;
  double V = 0.0;          // V_k(s) = n * U_k(hom)
  double n = 0.0;          // mass norm of hom(s)
};

namespace detail {

/// Symmetric bilinear extension of the Fubini-Study quadratic form.
struct FsForm {
  const MassMetric* mm;
  Eigen::VectorXcd hom;
  double n2, n4;

  double bil(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const {
    cplx hb_a = hdot(*mm, hom, a), hb_b = hdot(*mm, hom, b);
    double Ga = hb_a.real(), Oa = hb_a.imag();
    double Gb = hb_b.real(), Ob = hb_b.imag();
    return hdot(*mm, a, b).real() / n2 - (Ga * Gb + Oa * Ob) / n4;
  }

  /// d/ds_m of bil(a, b) for fixed a, b; dir is the chart basis vector of s_m.
  double dbil(const Eigen::VectorXcd& dir, const Eigen::VectorXcd& a,
              const Eigen::VectorXcd& b) const {
    double Gm = hdot(*mm, hom, dir).real();
    cplx hb_a = hdot(*mm, hom, a), hb_b = hdot(*mm, hom, b);
    double Ga = hb_a.real(), Oa = hb_a.imag();
    double Gb = hb_b.real(), Ob = hb_b.imag();
    cplx da = hdot(*mm, dir, a), db = hdot(*mm, dir, b);
    double n6 = n4 * n2;
    return -2.0 * Gm * hdot(*mm, a, b).real() / n4 -
           (da.real() * Gb + Ga * db.real() + da.imag() * Ob + Oa * db.imag()) / n4 +
           4.0 * Gm * (Ga * Gb + Oa * Ob) / n6;
  }
};

}  // namespace detail

inline double cluster_potential_at(const MassSystem& sys, const Cluster& k,
                                   const Eigen::VectorXcd& z_reduced) {
  auto zf = expand_relative(sys, k, z_reduced);
  double u = 0.0;
  for (size_t a = 0; a < zf.size(); ++a)
    for (size_t b = a + 1; b < zf.size(); ++b) {
      double r = std::abs(zf[a] - zf[b]);
      if (r == 0.0) throw std::domain_error("cluster_potential: coincident bodies");
      u += sys.masses[k.indices[a]] * sys.masses[k.indices[b]] / r;
    }
  return u;
}

inline FubiniData fubini_data(const MassSystem& sys, const Cluster& k, const MassMetric& mm,
                              const Eigen::VectorXcd& s, const Eigen::VectorXcd& omega,
                              int pivot) {
  int kk = k.size();
  int d = 2 * kk - 4;
  FubiniData fd;
  Eigen::VectorXcd hom = hom_of(s, pivot, kk - 1);
  fd.n = mass_norm(mm, hom);
  fd.V = fd.n * cluster_potential_at(sys, k, hom);
  fd.A = Eigen::MatrixXd::Zero(d, d);
  fd.B = Eigen::RowVectorXd::Zero(d);
  if (d == 0) return fd;

  detail::FsForm form{&mm, hom, fd.n * fd.n, std::pow(fd.n, 4)};
  std::vector<Eigen::VectorXcd> basis(d);
  for (int l = 0; l < d; ++l) basis[l] = chart_basis(l, pivot, kk - 1);
  for (int l = 0; l < d; ++l) {
    for (int m = l; m < d; ++m) {
      fd.A(l, m) = fd.A(m, l) = form.bil(basis[l], basis[m]);
    }
    fd.B[l] = hdot(mm, hom, basis[l]).imag() / form.n2;
  }
  Eigen::VectorXcd we = embed_at_pivot(omega, pivot, kk - 1, 0.0);
  cplx ho = hdot(mm, hom, we);
  fd.G = ho.real();
  fd.Omega = ho.imag();
  fd.F = form.bil(we, we);
  return fd;
}

/// dA/ds_m for every real chart coordinate m (analytic).
inline std::vector<Eigen::MatrixXd> dA_tensor(const MassSystem& sys, const Cluster& k,
                                              const MassMetric& mm, const Eigen::VectorXcd& s,
                                              int pivot) {
  int kk = k.size();
  int d = 2 * kk - 4;
  std::vector<Eigen::MatrixXd> out(d, Eigen::MatrixXd::Zero(d, d));
  if (d == 0) return out;
  Eigen::VectorXcd hom = hom_of(s, pivot, kk - 1);
  double n = mass_norm(mm, hom);
  detail::FsForm form{&mm, hom, n * n, std::pow(n, 4)};
  std::vector<Eigen::VectorXcd> basis(d);
  for (int l = 0; l < d; ++l) basis[l] = chart_basis(l, pivot, kk - 1);
  for (int m = 0; m < d; ++m)
    for (int l = 0; l < d; ++l)
      for (int p = l; p < d; ++p)
        out[m](l, p) = out[m](p, l) = form.dbil(basis[m], basis[l], basis[p]);
  return out;
}

/// Euclidean gradient of V(s) = n(s) U_k(hom(s)) in real chart coordinates.
inline Eigen::VectorXd gradV(const MassSystem& sys, const Cluster& k, const MassMetric& mm,
                             const Eigen::VectorXcd& s, int pivot) {
  int kk = k.size();
  int d = 2 * kk - 4;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  if (d == 0) return g;
  Eigen::VectorXcd hom = hom_of(s, pivot, kk - 1);
  double n = mass_norm(mm, hom);
  auto zf = expand_relative(sys, k, hom);
  double U = cluster_potential_at(sys, k, hom);
  // Per-body gradients of U_k at the homogeneous configuration.
  std::vector<cplx> gq(kk, cplx(0, 0));
  for (int a = 0; a < kk; ++a)
    for (int b = 0; b < kk; ++b) {
      if (a == b) continue;
      cplx dz = zf[b] - zf[a];
      double r = std::abs(dz);
      gq[a] += sys.masses[k.indices[a]] * sys.masses[k.indices[b]] * dz / (r * r * r);
    }
  // Reduce to the chart coordinates: z_last is eliminated.
  double mlast = sys.masses[k.indices.back()];
  std::vector<cplx> gred(kk - 1);
  for (int a = 0; a < kk - 1; ++a)
    gred[a] = gq[a] - sys.masses[k.indices[a]] / mlast * gq[kk - 1];
  for (int l = 0; l < d; ++l) {
    Eigen::VectorXcd b = chart_basis(l, pivot, kk - 1);
    double dn = hdot(mm, hom, b).real() / n;
    double dU = 0.0;
    for (int a = 0; a < kk - 1; ++a) dU += dot(gred[a], b[a]);
    g[l] = dn * U + n * dU;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Chart transforms

inline int auto_pivot(const Eigen::VectorXcd& z, int prefer) {
  int imax = 0;
  double best = 0.0;
  for (int i = 0; i < z.size(); ++i)
    if (std::abs(z[i]) > best) { best = std::abs(z[i]); imax = i; }
  if (prefer >= 0 && std::abs(z[prefer]) >= 0.3 * best) return prefer;
  return imax;
}

/// Cartesian -> chart. `pivot` = -1 picks the default chart (last coordinate)
/// unless the atlas rule forces a switch; an explicit pivot is honored.
inline ShapeState to_shape(const MassSystem& sys, const Cluster& k, const CartesianState& st,
                           int pivot = -1) {
  k.validate_against(sys);
  auto rc = relative_coords(sys, k, st);
  auto mm = mass_metric(sys, k);
  int kk = k.size();
  ShapeState sh;
  sh.t = st.t;
  sh.r = mass_norm(mm, rc.z);
  if (!(sh.r > 0)) throw std::domain_error("to_shape: zero cluster size");
  if (pivot < 0) pivot = auto_pivot(rc.z, kk - 2);
  if (std::abs(rc.z[pivot]) < 1e-12 * sh.r)
    throw std::domain_error("to_shape: chart singular at pivot " + std::to_string(pivot) +
                            "; switch charts");
  sh.pivot = pivot;
  sh.rho = hdot(mm, rc.zdot, rc.z).real() / sh.r;
  sh.mu = angular_momentum(mm, rc.z, rc.zdot);
  sh.theta = std::arg(rc.z[pivot]);
  sh.s.resize(kk - 2);
  sh.omega.resize(kk - 2);
  int a = 0;
  for (int i = 0; i < kk - 1; ++i) {
    if (i == pivot) continue;
    sh.s[a] = rc.z[i] / rc.z[pivot];
    sh.omega[a] = (rc.zdot[i] - sh.s[a] * rc.zdot[pivot]) / rc.z[pivot];
    ++a;
  }
  // External data for the coupling terms.
  ExternalBodies eb;
  eb.c = rc.c;
  eb.cdot = rc.cdot;
  for (int j : k.complement(sys.n())) {
    eb.masses.push_back(sys.masses[j]);
    eb.q.push_back(st.q[j]);
    eb.v.push_back(st.v[j]);
  }
  sh.ext = eb;
  return sh;
}

/// Chart -> cluster relative configuration and velocities (inverse of to_shape).
inline RelativeCoords from_shape(const MassSystem& sys, const Cluster& k,
                                 const ShapeState& sh) {
  auto mm = mass_metric(sys, k);
  int kk = k.size();
  Eigen::VectorXcd hom = hom_of(sh.s, sh.pivot, kk - 1);
  double n = mass_norm(mm, hom);
  cplx phase = std::exp(cplx(0, sh.theta));
  RelativeCoords rc;
  rc.z = (sh.r / n) * phase * hom;
  Eigen::VectorXcd we = embed_at_pivot(sh.omega, sh.pivot, kk - 1, 0.0);
  cplx ho = hdot(mm, hom, we);
  double G = ho.real(), Omega = ho.imag();
  double thdot = sh.mu / (sh.r * sh.r) - Omega / (n * n);
  rc.zdot = phase * ((cplx(sh.rho, sh.r * thdot) / n) * hom +
                     sh.r * (we / n - (G / (n * n * n)) * hom));
  if (sh.ext) {
    rc.c = sh.ext->c;
    rc.cdot = sh.ext->cdot;
  }
  return rc;
}

/// h_k expressed through the chart variables.
inline double energy_shape(const MassSystem& sys, const Cluster& k, const ShapeState& sh) {
  auto mm = mass_metric(sys, k);
  FubiniData fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  return 0.5 * sh.rho * sh.rho + 0.5 * sh.mu * sh.mu / (sh.r * sh.r) +
         0.5 * sh.r * sh.r * fd.F - fd.V / sh.r;
}

// ---------------------------------------------------------------------------
// Coupling partial derivatives and the Euler-Lagrange field

struct ExternalPartials {
  double dUdr = 0.0, dUdth = 0.0;
  Eigen::VectorXd gradS;  // 2k-4
};

inline ExternalPartials external_partials(const MassSystem& sys, const Cluster& k,
                                          const MassMetric& mm, const ShapeState& sh) {
  int kk = k.size();
  int d = 2 * kk - 4;
  ExternalPartials ep;
  ep.gradS = Eigen::VectorXd::Zero(d);
  if (!sh.ext || sh.ext->masses.empty()) return ep;
  const auto& eb = *sh.ext;

  Eigen::VectorXcd hom = hom_of(sh.s, sh.pivot, kk - 1);
  double n = mass_norm(mm, hom);
  cplx phase = std::exp(cplx(0, sh.theta));
  Eigen::VectorXcd zred = (sh.r / n) * phase * hom;
  auto zf = expand_relative(sys, k, zred);

  // Gradient of the coupling potential w.r.t. each cluster body position.
  std::vector<cplx> gq(kk, cplx(0, 0));
  for (int a = 0; a < kk; ++a) {
    cplx qa = eb.c + zf[a];
    for (size_t j = 0; j < eb.masses.size(); ++j) {
      cplx dz = eb.q[j] - qa;
      double r = std::abs(dz);
      if (r == 0.0) throw std::domain_error("external_partials: coincident bodies");
      gq[a] += sys.masses[k.indices[a]] * eb.masses[j] * dz / (r * r * r);
    }
  }
  for (int a = 0; a < kk; ++a) {
    ep.dUdr += dot(gq[a], zf[a] / sh.r);
    ep.dUdth += dot(gq[a], cplx(0, 1) * zf[a]);
  }
  // s-derivatives: z_full = (r/n) e^{i theta} homfull(s); homfull is linear in hom.
  double mlast = sys.masses[k.indices.back()];
  for (int l = 0; l < d; ++l) {
    Eigen::VectorXcd b = chart_basis(l, sh.pivot, kk - 1);
    double dn = hdot(mm, hom, b).real() / n;
    // d z_full/ds_l for the first k-1 bodies then the eliminated one.
    double acc = 0.0;
    cplx blast = 0.0;
    for (int a = 0; a < kk - 1; ++a) {
      cplx dz = (sh.r / n) * phase * (b[a] - hom[a] * dn / n);
      acc += dot(gq[a], dz);
      blast += sys.masses[k.indices[a]] * (b[a] - hom[a] * dn / n);
    }
    cplx dzlast = -(sh.r / n) * phase * blast / mlast;
    acc += dot(gq[kk - 1], dzlast);
    ep.gradS[l] = acc;
  }
  return ep;
}

struct ShapeDeriv {
  double rdot = 0, rhodot = 0, thetadot = 0, mudot = 0;
  Eigen::VectorXcd sdot, omegadot;
};

/// All six equations of the cluster Euler-Lagrange system.
inline ShapeDeriv el_field(const MassSystem& sys, const Cluster& k, const ShapeState& sh) {
  auto mm = mass_metric(sys, k);
  int kk = k.size();
  int d = 2 * kk - 4;
  FubiniData fd = fubini_data(sys, k, mm, sh.s, sh.omega, sh.pivot);
  ExternalPartials ep = external_partials(sys, k, mm, sh);

  ShapeDeriv out;
  out.rdot = sh.rho;
  out.rhodot = sh.r * fd.F - fd.V / (sh.r * sh.r) +
               sh.mu * sh.mu / (sh.r * sh.r * sh.r) + ep.dUdr;
  out.thetadot = sh.mu / (sh.r * sh.r) - fd.Omega / (fd.n * fd.n);
  out.mudot = ep.dUdth;
  out.sdot = sh.omega;
  out.omegadot = Eigen::VectorXcd::Zero(kk - 2);
  if (d == 0) return out;

  auto dA = dA_tensor(sys, k, mm, sh.s, sh.pivot);
  Eigen::VectorXd x = cvec_to_real(sh.omega);
  Eigen::VectorXd gF(d), DAx(d);
  for (int m = 0; m < d; ++m) gF[m] = x.dot(dA[m] * x);
  Eigen::MatrixXd DA = Eigen::MatrixXd::Zero(d, d);
  for (int m = 0; m < d; ++m) DA += x[m] * dA[m];
  Eigen::VectorXd gV = gradV(sys, k, mm, sh.s, sh.pivot);

  Eigen::LLT<Eigen::MatrixXd> Allt(fd.A);
  Eigen::VectorXd rhs = 0.5 * gF + gV / (sh.r * sh.r * sh.r) - DA * x +
                        ep.gradS / (sh.r * sh.r) -
                        (out.mudot / (sh.r * sh.r)) * fd.B.transpose();
  Eigen::VectorXd od = Allt.solve(rhs) - (2.0 * sh.rho / sh.r) * x;
  out.omegadot = real_to_cvec(od);
  return out;
}

}  // namespace nbflow
