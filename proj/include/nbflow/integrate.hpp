// Adaptive Dormand-Prince 5(4) with PI step control and the standard
// 4th-order dense-output interpolant.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace nbflow {

struct IntegOptions {
  double rtol = 1e-12;
  double atol = 1e-12;
  double h0 = 1e-4;
  double hmax = 1e12;
  double hmin = 1e-14;  // relative to |t|+1
  long max_steps = 50'000'000;
};

struct IntegStats {
  long nsteps = 0;
  long nrejected = 0;
  long nfev = 0;
};

/// One accepted step with everything needed for dense evaluation.
struct DenseSegment {
  double t0 = 0, h = 0;
  Eigen::VectorXd y0;
  std::vector<Eigen::VectorXd> k;  // 7 stages

  Eigen::VectorXd eval(double t) const {
    // ode45 interpolant: y0 + h * sum_i b_i(theta) k_i, b_i cubic in theta.
    static const double BI[7][4] = {
        {1.0, -183.0 / 64.0, 37.0 / 12.0, -145.0 / 128.0},
        {0.0, 0.0, 0.0, 0.0},
        {0.0, 1500.0 / 371.0, -1000.0 / 159.0, 1000.0 / 371.0},
        {0.0, -125.0 / 32.0, 125.0 / 12.0, -375.0 / 64.0},
        {0.0, 9477.0 / 3392.0, -729.0 / 106.0, 25515.0 / 6784.0},
        {0.0, -11.0 / 7.0, 11.0 / 3.0, -55.0 / 28.0},
        {0.0, 3.0 / 2.0, -4.0, 5.0 / 2.0}};
    double th = (t - t0) / h;
    Eigen::VectorXd y = y0;
    for (int i = 0; i < 7; ++i) {
      double b = th * (BI[i][0] + th * (BI[i][1] + th * (BI[i][2] + th * BI[i][3])));
      y += h * b * k[i];
    }
    return y;
  }

  Eigen::VectorXd eval_deriv(double t) const {
    static const double BI[7][4] = {
        {1.0, -183.0 / 64.0, 37.0 / 12.0, -145.0 / 128.0},
        {0.0, 0.0, 0.0, 0.0},
        {0.0, 1500.0 / 371.0, -1000.0 / 159.0, 1000.0 / 371.0},
        {0.0, -125.0 / 32.0, 125.0 / 12.0, -375.0 / 64.0},
        {0.0, 9477.0 / 3392.0, -729.0 / 106.0, 25515.0 / 6784.0},
        {0.0, -11.0 / 7.0, 11.0 / 3.0, -55.0 / 28.0},
        {0.0, 3.0 / 2.0, -4.0, 5.0 / 2.0}};
    double th = (t - t0) / h;
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(y0.size());
    for (int i = 0; i < 7; ++i) {
      double db = BI[i][0] + th * (2 * BI[i][1] + th * (3 * BI[i][2] + th * 4 * BI[i][3]));
      dy += db * k[i];
    }
    return dy;
  }
};

/// Piecewise interpolant over the accepted steps of one integration.
struct DenseOutput {
  std::vector<DenseSegment> segs;

  double tmin() const { return segs.empty() ? 0.0 : segs.front().t0; }
  double tmax() const { return segs.empty() ? 0.0 : segs.back().t0 + segs.back().h; }

  const DenseSegment& segment_at(double t) const {
    if (segs.empty()) throw std::runtime_error("DenseOutput: empty");
    size_t lo = 0, hi = segs.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi + 1) / 2;
      if (segs[mid].t0 <= t) lo = mid; else hi = mid - 1;
    }
    return segs[lo];
  }

  Eigen::VectorXd eval(double t) const { return segment_at(t).eval(t); }
  Eigen::VectorXd eval_deriv(double t) const { return segment_at(t).eval_deriv(t); }
};

enum class StepOutcome { Continue, Stop };

/// rhs: (t, y) -> dy.  observer: called after each accepted step with the
/// segment just produced; returning Stop ends the integration (the caller is
/// expected to truncate via the dense output).  Throws on step-size underflow
/// only if no observer requested a stop first; underflow is reported by
/// returning with stats.underflow set.
struct IntegrationRun {
  DenseOutput dense;
  IntegStats stats;
  Eigen::VectorXd y_end;
  double t_end = 0;
  bool underflow = false;
  bool stopped_by_observer = false;
};

template <class RHS, class Observer>
IntegrationRun integrate_adaptive(RHS&& rhs, Eigen::VectorXd y0, double t0, double t1,
                                  const IntegOptions& opt, Observer&& observer) {
  static const double c[7] = {0, 1. / 5, 3. / 10, 4. / 5, 8. / 9, 1., 1.};
  static const double a[7][6] = {
      {},
      {1. / 5},
      {3. / 40, 9. / 40},
      {44. / 45, -56. / 15, 32. / 9},
      {19372. / 6561, -25360. / 2187, 64448. / 6561, -212. / 729},
      {9017. / 3168, -355. / 33, 46732. / 5247, 49. / 176, -5103. / 18656},
      {35. / 384, 0., 500. / 1113, 125. / 192, -2187. / 6784, 11. / 84}};
  static const double e[7] = {71. / 57600, 0., -71. / 16695, 71. / 1920,
                              -17253. / 339200, 22. / 525, -1. / 40};  // b5 - b4

  IntegrationRun run;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  double t = t0, h = std::min(opt.h0, std::abs(t1 - t0)) * dir;
  Eigen::VectorXd y = std::move(y0);
  std::vector<Eigen::VectorXd> k(7);
  k[0] = rhs(t, y);
  run.stats.nfev++;
  double err_prev = 1.0;

  while (dir * (t1 - t) > 0) {
    if (std::abs(h) > opt.hmax) h = opt.hmax * dir;
    if (dir * (t + h - t1) > 0) h = t1 - t;
    if (std::abs(h) < opt.hmin * (std::abs(t) + 1.0)) {
      run.underflow = true;
      break;
    }
    if (run.stats.nsteps + run.stats.nrejected > opt.max_steps)
      throw std::runtime_error("integrate_adaptive: max step count exceeded");

    Eigen::VectorXd ytmp;
    for (int i = 1; i < 7; ++i) {
      ytmp = y;
      for (int j = 0; j < i; ++j) ytmp += h * a[i][j] * k[j];
      k[i] = rhs(t + c[i] * h, ytmp);
      run.stats.nfev++;
    }
    // k[6] is f at the 5th-order solution (FSAL): ytmp now holds y_next.
    Eigen::VectorXd ynext = ytmp;
    Eigen::VectorXd errv = Eigen::VectorXd::Zero(y.size());
    for (int i = 0; i < 7; ++i) errv += h * e[i] * k[i];
    double err = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynext[i]));
      err = std::max(err, std::abs(errv[i]) / sc);
    }
    if (err <= 1.0) {
      DenseSegment seg;
      seg.t0 = t;
      seg.h = h;
      seg.y0 = y;
      seg.k = k;
      run.dense.segs.push_back(std::move(seg));
      t += h;
      y = std::move(ynext);
      k[0] = k[6];  // FSAL
      run.stats.nsteps++;
      err_prev = std::max(err, 1e-10);
      if (observer(run.dense.segs.back(), t, y) == StepOutcome::Stop) {
        run.stopped_by_observer = true;
        break;
      }
    } else {
      run.stats.nrejected++;
    }
    // PI controller (beta = 0.08).
    double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) *
                 std::pow(err_prev, 0.4 / 5.0);
    fac = std::min(5.0, std::max(0.2, fac));
    h *= fac;
  }
  run.t_end = t;
  run.y_end = std::move(y);
  return run;
}

}  // namespace nbflow
