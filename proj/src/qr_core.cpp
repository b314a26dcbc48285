#include "cqr/qr_core.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cqr {

QuantileLevel::QuantileLevel(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1), got " + std::to_string(tau));
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxDegenerateBases = 4096;

struct Edge {
  Index k = -1;
  double sign = 0.0;
  double slope = 0.0;
  double tol = 0.0;
};

class VertexSolver {
 public:
  VertexSolver(MatrixXd x, VectorXd y, double tau)
      : x_(std::move(x)), y_(std::move(y)), tau_(tau), m_(x_.rows()), d_(x_.cols()),
        in_basis_(static_cast<std::size_t>(m_), 0) {
    const double ymax = m_ > 0 ? y_.cwiseAbs().maxCoeff() : 0.0;
    ztol_ = 1e-11 * ymax;
  }

  Index rows() const { return m_; }

  // Least-squares fit, then greedily the rows closest to it that are linearly
  // independent. Returns false when the design is rank deficient.
  bool cold_start() {
    if (m_ < d_) return false;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(x_);
    if (qr.rank() < d_) return false;
    const VectorXd ls = qr.solve(y_);
    const VectorXd r = (y_ - x_ * ls).cwiseAbs();
    std::vector<Index> order(static_cast<std::size_t>(m_));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return r[a] < r[b]; });

    MatrixXd q(d_, d_);
    std::vector<Index> basis;
    for (Index i : order) {
      VectorXd w = x_.row(i).transpose();
      const double norm0 = w.norm();
      if (norm0 == 0.0) continue;
      const auto k = static_cast<Index>(basis.size());
      if (k > 0) w -= q.leftCols(k) * (q.leftCols(k).transpose() * w);
      const double norm = w.norm();
      if (norm <= 1e-8 * norm0) continue;
      q.col(k) = w / norm;
      basis.push_back(i);
      if (static_cast<Index>(basis.size()) == d_) break;
    }
    if (static_cast<Index>(basis.size()) < d_) return false;
    return set_basis(std::move(basis));
  }

  bool set_basis(std::vector<Index> basis) {
    if (static_cast<Index>(basis.size()) != d_) return false;
    MatrixXd xh(d_, d_);
    VectorXd yh(d_);
    for (Index k = 0; k < d_; ++k) {
      xh.row(k) = x_.row(basis[k]);
      yh[k] = y_[basis[k]];
    }
    Eigen::FullPivLU<MatrixXd> lu(xh);
    if (lu.rank() < d_) return false;
    for (Index i : basis_) in_basis_[static_cast<std::size_t>(i)] = 0;
    basis_ = std::move(basis);
    for (Index i : basis_) in_basis_[static_cast<std::size_t>(i)] = 1;
    inv_ = lu.inverse();
    coef_ = inv_ * yh;
    resid_ = y_ - x_ * coef_;
    for (Index i : basis_) resid_[i] = 0.0;
    dirs_ = x_ * inv_;
    return true;
  }

  // Minimise; returns false if the pivot budget is exhausted.
  bool solve() {
    const int budget = static_cast<int>(10 * m_ + 100);
    while (pivots_ < budget) {
      Edge e = steepest_edge(slopes());
      if (e.slope < -e.tol) {
        if (!pivot_along(e)) return false;
        continue;
      }
      if (!escape_degenerate_vertex()) break;
    }
    if (pivots_ >= budget) return false;
    polish_lexicographic(budget);
    return true;
  }

  const VectorXd& coef() const { return coef_; }
  const std::vector<Index>& basis() const { return basis_; }
  int pivots() const { return pivots_; }

  double objective() const {
    double s = 0.0;
    for (Index i = 0; i < m_; ++i) s += loss(resid_[i]);
    return s;
  }

  std::size_t zero_residuals() const {
    std::size_t n = 0;
    for (Index i = 0; i < m_; ++i)
      if (std::abs(resid_[i]) <= ztol_) ++n;
    return n;
  }

 private:
  double loss(double u) const { return u * (tau_ - (u < 0.0 ? 1.0 : 0.0)); }

  bool is_zero(Index i) const { return std::abs(resid_[i]) <= ztol_; }

  // Directional derivatives along the 2d edges: entry 2k is +inv.col(k),
  // entry 2k+1 is -inv.col(k). Freeing basis row k along +direction drives
  // its residual negative.
  std::vector<Edge> slopes() const {
    std::vector<Edge> edges(static_cast<std::size_t>(2 * d_));
    for (Index k = 0; k < d_; ++k) {
      double pos = 0.0, neg = 0.0, zpos = 0.0, zneg = 0.0, scale = 1.0;
      for (Index i = 0; i < m_; ++i) {
        if (in_basis_[static_cast<std::size_t>(i)]) continue;
        const double a = dirs_(i, k);
        scale += std::abs(a);
        const double r = resid_[i];
        if (std::abs(r) <= ztol_) {
          if (a > 0.0) zpos += a;
          else zneg -= a;
        } else if (r > 0.0) {
          pos += a;
        } else {
          neg += a;
        }
      }
      const double tol = 1e-11 * scale;
      edges[static_cast<std::size_t>(2 * k)] = {
          k, 1.0, -tau_ * pos + (1.0 - tau_) * neg + (1.0 - tau_) * zpos + tau_ * zneg + (1.0 - tau_), tol};
      edges[static_cast<std::size_t>(2 * k + 1)] = {
          k, -1.0, tau_ * pos - (1.0 - tau_) * neg + (1.0 - tau_) * zneg + tau_ * zpos + tau_, tol};
    }
    return edges;
  }

  static Edge steepest_edge(const std::vector<Edge>& edges) {
    Edge best = edges.front();
    for (const auto& e : edges)
      if (e.slope < best.slope) best = e;
    return best;
  }

  // Exact line search: walk breakpoints in order until the slope turns
  // non-negative, then swap the entering row into the basis.
  bool pivot_along(const Edge& e) {
    breakpoints_.clear();
    for (Index i = 0; i < m_; ++i) {
      if (in_basis_[static_cast<std::size_t>(i)] || is_zero(i)) continue;
      const double a = e.sign * dirs_(i, e.k);
      if (a == 0.0) continue;
      const double t = resid_[i] / a;
      if (t > 0.0) breakpoints_.push_back({t, i, std::abs(a)});
    }
    std::sort(breakpoints_.begin(), breakpoints_.end(), [](const Breakpoint& a, const Breakpoint& b) {
      return a.t < b.t || (a.t == b.t && a.row < b.row);
    });
    double slope = e.slope;
    for (const auto& bp : breakpoints_) {
      slope += bp.weight;
      if (slope >= -e.tol) {
        std::vector<Index> next = basis_;
        next[static_cast<std::size_t>(e.k)] = bp.row;
        ++pivots_;
        return set_basis(std::move(next));
      }
    }
    return false;
  }

  // At a vertex with extra zero residuals the 2d edges of the current basis
  // need not span every descent ray. Try every other basis through the same
  // point; adopt the first one with a descending edge.
  bool escape_degenerate_vertex() {
    std::vector<Index> pool = basis_;
    for (Index i = 0; i < m_; ++i) {
      if (in_basis_[static_cast<std::size_t>(i)] || !is_zero(i)) continue;
      // A zero row parallel to a basis row adds no new hyperplane.
      int nonzero = 0;
      const double amax = dirs_.row(i).cwiseAbs().maxCoeff();
      for (Index k = 0; k < d_; ++k)
        if (std::abs(dirs_(i, k)) > 1e-12 * amax) ++nonzero;
      if (nonzero >= 2) pool.push_back(i);
    }
    if (static_cast<Index>(pool.size()) == d_) return false;

    const std::vector<Index> current = basis_;
    const auto u = pool.size();
    const auto d = static_cast<std::size_t>(d_);
    std::vector<std::size_t> pick(d);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    int tried = 0;
    while (tried < kMaxDegenerateBases) {
      std::vector<Index> candidate(d);
      for (std::size_t k = 0; k < d; ++k) candidate[k] = pool[pick[k]];
      if (candidate != current && set_basis(candidate)) {
        ++tried;
        Edge e = steepest_edge(slopes());
        if (e.slope < -e.tol) return pivot_along(e);
      }
      // next combination
      std::size_t k = d;
      while (k > 0 && pick[k - 1] == u - d + (k - 1)) --k;
      if (k == 0) break;
      ++pick[k - 1];
      for (std::size_t j = k; j < d; ++j) pick[j] = pick[j - 1] + 1;
    }
    set_basis(current);
    return false;
  }

  // Among optimal vertices, follow flat edges whose direction is
  // lexicographically negative.
  void polish_lexicographic(int budget) {
    while (pivots_ < budget) {
      bool moved = false;
      for (const auto& e : slopes()) {
        if (std::abs(e.slope) > e.tol) continue;
        const VectorXd v = e.sign * inv_.col(e.k);
        const double vmax = v.cwiseAbs().maxCoeff();
        Index j = 0;
        while (j < d_ && std::abs(v[j]) <= 1e-12 * vmax) ++j;
        if (j == d_ || v[j] > 0.0) continue;
        Edge flat = e;
        flat.slope = 0.0;
        if (pivot_along(flat)) {
          moved = true;
          break;
        }
      }
      if (!moved) return;
    }
  }

  struct Breakpoint {
    double t;
    Index row;
    double weight;
  };

  MatrixXd x_;
  VectorXd y_;
  double tau_;
  Index m_;
  Index d_;
  double ztol_ = 0.0;

  std::vector<Index> basis_;
  std::vector<unsigned char> in_basis_;
  MatrixXd inv_;
  VectorXd coef_;
  VectorXd resid_;
  MatrixXd dirs_;
  std::vector<Breakpoint> breakpoints_;
  int pivots_ = 0;
};

}  // namespace

QrSolution try_solve_convex_qr(const Eigen::Ref<const Eigen::MatrixXd>& design,
                               const Eigen::Ref<const Eigen::VectorXd>& response,
                               std::span<const unsigned char> active, QuantileLevel tau,
                               std::span<const Eigen::Index> warm_basis) {
  const Index n = design.rows();
  const Index d = design.cols();
  if (response.size() != n || (!active.empty() && static_cast<Index>(active.size()) != n))
    throw Error(ErrorCode::DimensionMismatch, "response/active length does not match the design");

  // Inactive rows contribute nothing; drop them before factorising.
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    if (active.empty() || active[static_cast<std::size_t>(i)]) rows.push_back(i);
  const auto m = static_cast<Index>(rows.size());

  QrSolution out;
  if (d == 0 || m < d) return out;

  MatrixXd x(m, d);
  VectorXd y(m);
  for (Index r = 0; r < m; ++r) {
    x.row(r) = design.row(rows[static_cast<std::size_t>(r)]);
    y[r] = response[rows[static_cast<std::size_t>(r)]];
  }

  VertexSolver solver(std::move(x), std::move(y), tau.value());
  bool started = false;
  if (static_cast<Index>(warm_basis.size()) == d) {
    std::vector<Index> compact;
    for (Index i : warm_basis) {
      auto it = std::lower_bound(rows.begin(), rows.end(), i);
      if (it == rows.end() || *it != i) break;
      compact.push_back(static_cast<Index>(it - rows.begin()));
    }
    if (static_cast<Index>(compact.size()) == d) started = solver.set_basis(std::move(compact));
  }
  if (!started && !solver.cold_start()) return out;
  if (!solver.solve())
    throw Error(ErrorCode::NonConvergence, "convex quantile regression exceeded its pivot budget");

  out.coef = solver.coef();
  out.objective = solver.objective();
  out.n_zero_residuals = solver.zero_residuals();
  out.rank_ok = true;
  out.pivots = solver.pivots();
  for (Index k : solver.basis()) out.basis.push_back(rows[static_cast<std::size_t>(k)]);
  return out;
}

QrSolution solve_convex_qr(const ConvexQrProblem& problem) {
  QrSolution s = try_solve_convex_qr(problem.design, problem.response, problem.active, problem.tau);
  if (!s.rank_ok) throw Error(ErrorCode::RankDeficient, "active design is not of full column rank");
  return s;
}

double convex_qr_objective(const Eigen::Ref<const Eigen::MatrixXd>& design,
                           const Eigen::Ref<const Eigen::VectorXd>& response,
                           std::span<const unsigned char> active, QuantileLevel tau,
                           const Eigen::VectorXd& coef) {
  const VectorXd r = response - design * coef;
  double s = 0.0;
  for (Index i = 0; i < r.size(); ++i)
    if (active.empty() || active[static_cast<std::size_t>(i)]) s += rho(tau, r[i]);
  return s;
}

}  // namespace cqr
