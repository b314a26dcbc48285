#include "cqr/error.hpp"
#include "cqr/qr_core.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace cqr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

QrSolution solve(const MatrixXd& X, const VectorXd& y, double tau) {
  return solve_convex_qr({X, y, {}, QuantileLevel(tau)});
}

}  // namespace

TEST_SUITE("example") {
  TEST_CASE("check loss") {
    CHECK(rho(QuantileLevel(0.5), 2.0) == 1.0);
    CHECK(rho(QuantileLevel(0.25), -2.0) == 1.5);
    CHECK(rho(QuantileLevel(0.7), 0.0) == 0.0);
  }

  TEST_CASE("quantile score") {
    CHECK(phi(QuantileLevel(0.5), -1.0) == -0.5);
    CHECK(phi(QuantileLevel(0.75), 2.0) == 0.75);
    CHECK(phi(QuantileLevel(0.3), 0.0) == 0.3);
  }

  TEST_CASE("sample median") {
    const auto s = solve(MatrixXd::Ones(3, 1), VectorXd::LinSpaced(3, 1, 3), 0.5);
    CHECK(s.coef[0] == 2.0);
  }

  TEST_CASE("two points are interpolated") {
    MatrixXd X(2, 2);
    X << 1, 0, 1, 1;
    const auto s = solve(X, VectorXd::LinSpaced(2, 0, 1), 0.5);
    CHECK(s.coef[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(s.coef[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.objective == doctest::Approx(0.0));
  }

  TEST_CASE("even sample takes the smallest optimal breakpoint") {
    const VectorXd y = VectorXd::LinSpaced(4, 1, 4);
    const MatrixXd X = MatrixXd::Ones(4, 1);
    // Brute force over the candidate breakpoints.
    double best = 1e300, arg = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double v = oracle::qr_objective(X, y, 0.5, VectorXd::Constant(1, y[k]));
      if (v < best - 1e-12) best = v, arg = y[k];
    }
    CHECK(arg == 2.0);
    CHECK(solve(X, y, 0.5).coef[0] == 2.0);
  }
}

TEST_CASE("quantile level must lie strictly inside (0, 1)") {
  CHECK_THROWS_AS(QuantileLevel(0.0), Error);
  CHECK_THROWS_AS(QuantileLevel(1.0), Error);
  CHECK_THROWS_AS(QuantileLevel(std::nan("")), Error);
}

TEST_CASE("rank deficient design") {
  MatrixXd X(3, 2);
  X << 1, 2, 1, 2, 1, 2;
  CHECK_FALSE(try_solve_convex_qr(X, VectorXd::Ones(3), {}, QuantileLevel(0.5)).rank_ok);
  try {
    solve(X, VectorXd::Ones(3), 0.5);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("inactive rows are ignored") {
  const VectorXd y = (VectorXd(5) << 1, 2, 3, 100, 200).finished();
  const std::vector<unsigned char> active{1, 1, 1, 0, 0};
  const auto s = try_solve_convex_qr(MatrixXd::Ones(5, 1), y, active, QuantileLevel(0.5));
  CHECK(s.coef[0] == 2.0);
}

TEST_CASE("matches vertex enumeration on random problems") {
  oracle::Gen g(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + g.below(30);
    const int d = 1 + g.below(2);
    const double tau = 0.1 + 0.8 * g.uniform();
    MatrixXd X(n, d);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      if (d > 1) X(i, 1) = g.normal();
      y[i] = 1.0 + (d > 1 ? 2.0 * X(i, 1) : 0.0) + g.normal();
      // Discrete responses create ties and degenerate vertices.
      if (trial % 3 == 0) y[i] = std::round(y[i]);
    }
    const auto s = solve(X, y, tau);
    const double best = oracle::qr_minimum(X, y, tau);
    CHECK(s.objective <= best + 1e-9 * (1.0 + best));
    CHECK(s.objective == doctest::Approx(oracle::qr_objective(X, y, tau, s.coef)));
  }
}

TEST_CASE("warm start reaches the same optimum") {
  oracle::Gen g(7);
  MatrixXd X(40, 3);
  VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    X.row(i) << 1.0, g.normal(), g.normal();
    y[i] = X(i, 1) - X(i, 2) + g.normal();
  }
  const auto cold = try_solve_convex_qr(X, y, {}, QuantileLevel(0.3));
  const std::vector<Eigen::Index> warm{0, 1, 2};
  const auto hot = try_solve_convex_qr(X, y, {}, QuantileLevel(0.3), warm);
  CHECK(hot.objective == doctest::Approx(cold.objective).epsilon(1e-12));
  CHECK(cold.basis.size() == 3);
}

TEST_CASE("duplicated rows and exact fits") {
  MatrixXd X(6, 2);
  X << 1, 0, 1, 0, 1, 1, 1, 1, 1, 2, 1, 2;
  const VectorXd y = (VectorXd(6) << 1, 1, 3, 3, 5, 5).finished();
  const auto s = solve(X, y, 0.4);
  CHECK(s.objective == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.coef[1] == doctest::Approx(2.0));
}
