#pragma once

// Independent reference implementations used only by the tests.

#include "cqr/data_model.hpp"
#include "cqr/qr_core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace oracle {

inline double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                      double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-14) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50);
}

// Upper chi-squared tail by quadrature of the density in t = sqrt(x), which
// removes the singularity at zero for k = 1.
inline double chi2_sf(double x, int k) {
  const double h = 0.5 * k;
  const double log_norm = -h * std::log(2.0) - std::lgamma(h);
  auto g = [&](double t) {
    if (t <= 0.0) return k == 1 ? 2.0 * std::exp(log_norm) : 0.0;
    return 2.0 * std::exp(log_norm + (k - 1) * std::log(t) - 0.5 * t * t);
  };
  const double lo = std::sqrt(std::max(0.0, x));
  const double hi = lo + 40.0 + std::sqrt(static_cast<double>(k)) * 4.0;
  // Split the range so the adaptive rule sees the peak.
  const double peak = std::sqrt(std::max(0.0, k - 1.0));
  double total = 0.0;
  if (peak > lo) {
    total += integrate(g, lo, peak);
    total += integrate(g, peak, hi);
  } else {
    total += integrate(g, lo, hi);
  }
  return total;
}

// Phi through the Maclaurin series of erf, summed in long double.
inline double normal_cdf(double x) {
  const long double t = static_cast<long double>(x) / std::sqrt(2.0L);
  long double term = t, sum = t;
  for (int n = 1; n < 400; ++n) {
    term *= -t * t / n;
    const long double add = term / (2 * n + 1);
    sum += add;
    if (std::fabs(add) < 1e-30L) break;
  }
  const long double erf = 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * sum;
  return static_cast<double>(0.5L * (1.0L + erf));
}

inline double check_loss(double tau, double u) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

inline double powell_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& c, double tau,
                               const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) s += check_loss(tau, y[i] - std::max(c[i], X.row(i).dot(b)));
  return s;
}

inline double qr_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) s += check_loss(tau, y[i] - X.row(i).dot(b));
  return s;
}

// Every candidate vertex of a hyperplane arrangement in dimension d <= 2:
// intersections of d hyperplanes a_k' b = r_k with linearly independent a_k.
inline std::vector<Eigen::VectorXd> arrangement_vertices(const std::vector<Eigen::VectorXd>& normals,
                                                         const std::vector<double>& offsets, int d) {
  std::vector<Eigen::VectorXd> out;
  const std::size_t m = normals.size();
  if (d == 1) {
    for (std::size_t i = 0; i < m; ++i)
      if (std::abs(normals[i][0]) > 1e-12) out.push_back(Eigen::VectorXd::Constant(1, offsets[i] / normals[i][0]));
    return out;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      Eigen::Matrix2d A;
      A.row(0) = normals[i].transpose();
      A.row(1) = normals[j].transpose();
      const double det = A.determinant();
      if (std::abs(det) < 1e-10 * (1.0 + A.cwiseAbs().maxCoeff() * A.cwiseAbs().maxCoeff())) continue;
      out.push_back(A.partialPivLu().solve(Eigen::Vector2d(offsets[i], offsets[j])));
    }
  return out;
}

// Global minimum of the ordinary check-loss objective by vertex enumeration.
inline double qr_minimum(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau) {
  std::vector<Eigen::VectorXd> normals;
  std::vector<double> offsets;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    normals.push_back(X.row(i).transpose());
    offsets.push_back(y[i]);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : arrangement_vertices(normals, offsets, static_cast<int>(X.cols())))
    best = std::min(best, qr_objective(X, y, tau, b));
  return best;
}

// Global minimum of Powell's objective: its pieces are linear on the cells of
// the arrangement {x_i'b = y_i} and {x_i'b = c_i}, and those cells are pointed
// whenever X has full column rank.
inline double powell_minimum(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& c,
                             double tau) {
  std::vector<Eigen::VectorXd> normals;
  std::vector<double> offsets;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    normals.push_back(X.row(i).transpose());
    offsets.push_back(y[i]);
    if (y[i] != c[i]) {
      normals.push_back(X.row(i).transpose());
      offsets.push_back(c[i]);
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : arrangement_vertices(normals, offsets, static_cast<int>(X.cols())))
    best = std::min(best, powell_objective(X, y, c, tau, b));
  return best;
}

// Small xorshift generator with Box-Muller normals, kept apart from the
// library's RNG plumbing.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed * 2685821657736338717ULL + 1) {}
  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 2685821657736338717ULL;
  }
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * (1.0 / 9007199254740992.0); }
  double normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

 private:
  std::uint64_t s_;
};

// Random censored dataset: subjects x rows, x = (1, N(0,1)) (or intercept
// only when p == 1), optional scalar z, left censoring at the given quantile
// of the latent response.
inline cqr::LongitudinalDataset random_dataset(Gen& g, int subjects, int rows, int p, int q, double censor_share,
                                               double slope = 1.0) {
  cqr::LongitudinalDataset d;
  std::vector<double> latent;
  for (int i = 0; i < subjects; ++i) {
    cqr::SubjectBlock b{"s" + std::to_string(i), {}};
    const double a = 0.7 * g.normal();
    for (int j = 0; j < rows; ++j) {
      cqr::Row r;
      r.x.push_back(1.0);
      for (int k = 1; k < p; ++k) r.x.push_back(g.normal());
      for (int k = 0; k < q; ++k) r.z.push_back(k == 0 ? (i % 2 == 0 ? 1.0 : 0.0) : g.normal());
      r.y = 0.5 + (p > 1 ? slope * r.x[1] : 0.0) + a + g.normal();
      latent.push_back(r.y);
      b.rows.push_back(r);
    }
    d.subjects.push_back(b);
  }
  std::vector<double> sorted = latent;
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(censor_share * static_cast<double>(sorted.size()));
  const double limit = k == 0 ? sorted.front() - 1.0 : sorted[k - 1];
  for (auto& b : d.subjects)
    for (auto& r : b.rows) {
      r.censor_limit = limit;
      r.y = std::max(r.y, limit);
    }
  return cqr::validate_dataset(std::move(d));
}

}  // namespace oracle
