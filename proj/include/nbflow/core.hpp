// Mass systems, cluster bookkeeping, potentials and the conserved quantities
// shared by every other module. Planar vectors are represented as complex
// numbers so rotations compose by multiplication.
#pragma once

#include <algorithm>
#include <complex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nbflow {

using cplx = std::complex<double>;

inline double dot(cplx a, cplx b) { return a.real() * b.real() + a.imag() * b.imag(); }
inline double cross(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

/// n >= 2 positive point masses.
struct MassSystem {
  std::vector<double> masses;

  explicit MassSystem(std::vector<double> m) : masses(std::move(m)) {
    if (masses.size() < 2) throw std::invalid_argument("MassSystem: need n >= 2 bodies");
    for (double mi : masses)
      if (!(mi > 0.0)) throw std::invalid_argument("MassSystem: masses must be positive");
  }

  int n() const { return static_cast<int>(masses.size()); }
  double total_mass() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }
};

/// Ordered index subset defining the subsystem under study (0-based).
struct Cluster {
  std::vector<int> indices;

  explicit Cluster(std::vector<int> idx) : indices(std::move(idx)) {
    std::sort(indices.begin(), indices.end());
    if (indices.size() < 2) throw std::invalid_argument("Cluster: need |k| >= 2");
    if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
      throw std::invalid_argument("Cluster: indices must be distinct");
    if (indices.front() < 0) throw std::invalid_argument("Cluster: negative index");
  }

  int size() const { return static_cast<int>(indices.size()); }

  std::vector<int> complement(int n) const {
    std::vector<int> out;
    std::set<int> in(indices.begin(), indices.end());
    for (int i = 0; i < n; ++i)
      if (!in.count(i)) out.push_back(i);
    return out;
  }

  void validate_against(const MassSystem& sys) const {
    if (indices.back() >= sys.n()) throw std::invalid_argument("Cluster: index out of range");
  }
};

/// Full planar state: positions and velocities of all bodies at time t.
struct CartesianState {
  double t = 0.0;
  std::vector<cplx> q;
  std::vector<cplx> v;
};

inline cplx center_of_mass(const MassSystem& sys, const std::vector<cplx>& q) {
  cplx c = 0.0;
  for (int i = 0; i < sys.n(); ++i) c += sys.masses[i] * q[i];
  return c / sys.total_mass();
}

/// Shift positions and velocities so total center of mass and momentum vanish.
/// Rejects states whose drift exceeds `tol` (large drift indicates a bug
/// upstream, not something to silently absorb).
inline CartesianState reduce_to_com(const MassSystem& sys, CartesianState st,
                                    double tol = 1e-8) {
  const cplx c = center_of_mass(sys, st.q);
  const cplx cd = center_of_mass(sys, st.v);
  if (std::abs(c) > tol || std::abs(cd) > tol)
    throw std::domain_error("reduce_to_com: center-of-mass drift " +
                            std::to_string(std::abs(c)) + " exceeds tolerance");
  for (auto& qi : st.q) qi -= c;
  for (auto& vi : st.v) vi -= cd;
  return st;
}

inline std::string pair_name(int i, int j) {
  return "(" + std::to_string(i) + "," + std::to_string(j) + ")";
}

/// U(q) = sum_{i<j} m_i m_j / r_ij.
inline double total_potential(const MassSystem& sys, const std::vector<cplx>& q) {
  double u = 0.0;
  for (int i = 0; i < sys.n(); ++i)
    for (int j = i + 1; j < sys.n(); ++j) {
      double rij = std::abs(q[i] - q[j]);
      if (rij == 0.0)
        throw std::domain_error("total_potential: coincident bodies " + pair_name(i, j));
      u += sys.masses[i] * sys.masses[j] / rij;
    }
  return u;
}

struct SplitPotentials {
  double U_k = 0.0;   // pairs inside the cluster
  double U_kp = 0.0;  // pairs inside the complement
  double U_kkp = 0.0; // cross pairs
};

inline double subset_potential(const MassSystem& sys, const std::vector<cplx>& q,
                               const std::vector<int>& idx) {
  double u = 0.0;
  for (size_t a = 0; a < idx.size(); ++a)
    for (size_t b = a + 1; b < idx.size(); ++b) {
      int i = idx[a], j = idx[b];
      double rij = std::abs(q[i] - q[j]);
      if (rij == 0.0)
        throw std::domain_error("subset_potential: coincident bodies " + pair_name(i, j));
      u += sys.masses[i] * sys.masses[j] / rij;
    }
  return u;
}

/// U = U_k + U_k' + U_{k,k'}.
inline SplitPotentials split_potentials(const MassSystem& sys, const Cluster& k,
                                        const std::vector<cplx>& q) {
  k.validate_against(sys);
  SplitPotentials out;
  auto comp = k.complement(sys.n());
  out.U_k = subset_potential(sys, q, k.indices);
  out.U_kp = comp.size() >= 2 ? subset_potential(sys, q, comp) : 0.0;
  for (int i : k.indices)
    for (int j : comp) {
      double rij = std::abs(q[i] - q[j]);
      if (rij == 0.0)
        throw std::domain_error("split_potentials: coincident bodies " + pair_name(i, j));
      out.U_kkp += sys.masses[i] * sys.masses[j] / rij;
    }
  return out;
}

/// Relative quantities of a cluster: center c_k, relative positions z_i = q_i - c_k,
/// moment of inertia I_k, internal energy h_k and internal angular momentum mu.
struct ClusterGeometry {
  cplx c = 0.0;
  cplx cdot = 0.0;
  std::vector<cplx> z;     // |k| entries, sum m_i z_i = 0
  std::vector<cplx> zdot;
  double I = 0.0;
  double h = 0.0;
  double mu = 0.0;
};

inline ClusterGeometry cluster_geometry(const MassSystem& sys, const Cluster& k,
                                        const CartesianState& st) {
  k.validate_against(sys);
  ClusterGeometry g;
  double mk = 0.0;
  for (int i : k.indices) mk += sys.masses[i];
  for (int i : k.indices) {
    g.c += sys.masses[i] * st.q[i];
    g.cdot += sys.masses[i] * st.v[i];
  }
  g.c /= mk;
  g.cdot /= mk;
  double K = 0.0;
  for (int i : k.indices) {
    cplx zi = st.q[i] - g.c;
    cplx zdi = st.v[i] - g.cdot;
    g.z.push_back(zi);
    g.zdot.push_back(zdi);
    g.I += sys.masses[i] * std::norm(zi);
    K += 0.5 * sys.masses[i] * std::norm(zdi);
    g.mu += sys.masses[i] * cross(zi, zdi);
  }
  double Uk = subset_potential(sys, st.q, k.indices);
  g.h = K - Uk;
  return g;
}

/// Mass metric on relative coordinates z = (z_1 .. z_{|k|-1}); the last cluster
/// body is eliminated through sum m_i z_i = 0. Stored in its compact complex
/// form: a real symmetric (|k|-1)x(|k|-1) matrix acting componentwise on C^{|k|-1}.
struct MassMetric {
  Eigen::MatrixXd Mc;  // compact form
  double m0 = 0.0;     // total cluster mass

  int dim() const { return static_cast<int>(Mc.rows()); }

  /// Real representation of size (2|k|-2)x(2|k|-2) (kron with I2).
  Eigen::MatrixXd real() const {
    int d = dim();
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        R(2 * i, 2 * j) = Mc(i, j);
        R(2 * i + 1, 2 * j + 1) = Mc(i, j);
      }
    return R;
  }
};

inline MassMetric mass_metric(const MassSystem& sys, const Cluster& k) {
  k.validate_against(sys);
  int kk = k.size();
  MassMetric mm;
  mm.Mc.resize(kk - 1, kk - 1);
  double mlast = sys.masses[k.indices.back()];
  for (int a = 0; a < kk - 1; ++a) {
    double ma = sys.masses[k.indices[a]];
    mm.m0 += ma;
    for (int b = 0; b < kk - 1; ++b) {
      double mb = sys.masses[k.indices[b]];
      mm.Mc(a, b) = (a == b ? ma : 0.0) + ma * mb / mlast;
    }
  }
  mm.m0 += mlast;
  return mm;
}

/// Hermitian mass inner product <<a,b>> = conj(a)^T M b.
inline cplx hdot(const MassMetric& mm, const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  cplx out = 0.0;
  for (int i = 0; i < mm.dim(); ++i)
    for (int j = 0; j < mm.dim(); ++j) out += std::conj(a[i]) * mm.Mc(i, j) * b[j];
  return out;
}

inline double mass_norm2(const MassMetric& mm, const Eigen::VectorXcd& a) {
  return hdot(mm, a, a).real();
}

inline double mass_norm(const MassMetric& mm, const Eigen::VectorXcd& a) {
  return std::sqrt(mass_norm2(mm, a));
}

/// mu = zdot^T M J z = re << zdot, i z >>.
inline double angular_momentum(const MassMetric& mm, const Eigen::VectorXcd& z,
                               const Eigen::VectorXcd& zdot) {
  return (hdot(mm, zdot, cplx(0, 1) * z)).real();
}

/// Reduced relative coordinates of the cluster: drops the last body.
struct RelativeCoords {
  Eigen::VectorXcd z;     // |k|-1
  Eigen::VectorXcd zdot;
  cplx c = 0.0, cdot = 0.0;
};

inline RelativeCoords relative_coords(const MassSystem& sys, const Cluster& k,
                                      const CartesianState& st) {
  auto g = cluster_geometry(sys, k, st);
  RelativeCoords rc;
  int kk = k.size();
  rc.z.resize(kk - 1);
  rc.zdot.resize(kk - 1);
  for (int a = 0; a < kk - 1; ++a) {
    rc.z[a] = g.z[a];
    rc.zdot[a] = g.zdot[a];
  }
  rc.c = g.c;
  rc.cdot = g.cdot;
  return rc;
}

/// Full set of |k| relative positions from the reduced ones.
inline std::vector<cplx> expand_relative(const MassSystem& sys, const Cluster& k,
                                         const Eigen::VectorXcd& z) {
  int kk = k.size();
  std::vector<cplx> out(kk);
  cplx acc = 0.0;
  for (int a = 0; a < kk - 1; ++a) {
    out[a] = z[a];
    acc += sys.masses[k.indices[a]] * z[a];
  }
  out[kk - 1] = -acc / sys.masses[k.indices.back()];
  return out;
}

}  // namespace nbflow
