#include "cqr/distributions.hpp"
#include "cqr/error.hpp"
#include "cqr/rank_score.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace cqr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Dataset whose rows carry the given x, z and subject grouping; y is unused
// by the score pieces, which read residuals from the fit.
LongitudinalDataset design_dataset(const MatrixXd& X, const MatrixXd& Z, const std::vector<int>& subject) {
  LongitudinalDataset d;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto s = static_cast<std::size_t>(subject[static_cast<std::size_t>(i)]);
    if (d.subjects.size() <= s) d.subjects.resize(s + 1);
    d.subjects[s].subject_id = std::to_string(s);
    Row r;
    r.y = 1.0;
    r.censor_limit = 0.0;
    for (Eigen::Index k = 0; k < X.cols(); ++k) r.x.push_back(X(i, k));
    for (Eigen::Index k = 0; k < Z.cols(); ++k) r.z.push_back(Z(i, k));
    d.subjects[s].rows.push_back(r);
  }
  return validate_dataset(d);
}

PowellFit fake_fit(const std::vector<double>& residuals, std::vector<unsigned char> mask = {}) {
  PowellFit f;
  f.residuals = Eigen::Map<const VectorXd>(residuals.data(), static_cast<Eigen::Index>(residuals.size()));
  f.uncensored_pred_mask = mask.empty() ? std::vector<unsigned char>(residuals.size(), 1) : std::move(mask);
  return f;
}

std::vector<int> singletons(int n) {
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = i;
  return s;
}

const QuantileLevel kMedian(0.5);

}  // namespace

TEST_SUITE("example") {
  TEST_CASE("z equal to a column of x is projected away") {
    MatrixXd X(4, 2);
    X << 1, 0.5, 1, -1, 1, 2, 1, 3;
    const auto d = design_dataset(X, X.col(1), singletons(4));
    const auto zd = build_zstar(d, fake_fit({1, -1, 1, -1}));
    CHECK(zd.zstar.cwiseAbs().maxCoeff() <= 1e-14);
  }

  TEST_CASE("intercept only design centres z") {
    MatrixXd Z(4, 1);
    Z << 1, 2, 3, 10;
    const auto d = design_dataset(MatrixXd::Ones(4, 1), Z, singletons(4));
    const auto zd = build_zstar(d, fake_fit({1, -1, 1, -1}));
    for (int i = 0; i < 4; ++i) CHECK(zd.zstar(i, 0) == doctest::Approx(Z(i, 0) - 4.0).epsilon(1e-14));
  }

  TEST_CASE("inactive row of x carries no constraint") {
    MatrixXd X(3, 2), Z(3, 1);
    X << 1, 0, 1, 1, 1, 5;
    Z << 0, 1, 7;
    const auto d = design_dataset(X, Z, singletons(3));
    const auto zd = build_zstar(d, fake_fit({1, 1, 1}, {1, 1, 0}));
    // Two active rows fit z exactly; the inactive row keeps its z.
    CHECK(std::abs(zd.zstar(0, 0)) <= 1e-14);
    CHECK(std::abs(zd.zstar(1, 0)) <= 1e-14);
    CHECK(zd.zstar(2, 0) == doctest::Approx(7.0));
  }

  TEST_CASE("score sums") {
    ZStarDecomposition zero{{1, 1}, MatrixXd::Zero(2, 1), 0, false};
    const auto d2 = design_dataset(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1), singletons(2));
    CHECK(compute_sn(d2, fake_fit({-1, 1}), zero, kMedian)[0] == 0.0);

    const auto d1 = design_dataset(MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), {0});
    ZStarDecomposition one{{1}, MatrixXd::Ones(1, 1), 0, false};
    CHECK(compute_sn(d1, fake_fit({-0.5}), one, kMedian)[0] == -0.5);
    CHECK(compute_sn(d1, fake_fit({0.0}), one, QuantileLevel(0.3))[0] == 0.3);
  }

  TEST_CASE("pair counting") {
    const auto d = design_dataset(MatrixXd::Ones(4, 1), MatrixXd::Ones(4, 1), {0, 0, 1, 1});
    const auto est = estimate_delta(d, fake_fit({-1, -2, 1, 1}));
    CHECK(est.pair_count == 4);
    CHECK(est.delta_hat == 0.5);

    const auto lone = design_dataset(MatrixXd::Ones(3, 1), MatrixXd::Ones(3, 1), singletons(3));
    try {
      estimate_delta(lone, fake_fit({-1, 1, 1}));
      FAIL("expected NoPairs");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoPairs);
    }
  }

  TEST_CASE("variance arithmetic") {
    const auto d = design_dataset(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1), {0, 0});
    ZStarDecomposition zd{{1, 1}, MatrixXd::Ones(2, 1), 0, false};
    CHECK(compute_vn(d, zd, kMedian, 0.5)(0, 0) == 0.5);
    CHECK(compute_vn(d, zd, kMedian, 0.25)(0, 0) == 0.25);
    CHECK(design_effect_ratio(d, zd, kMedian, 0.5) == 2.0);
    CHECK(design_effect_ratio(d, zd, kMedian, 0.25) == 1.0);

    // Opposite signs inside a subject: delta above tau^2 shrinks V.
    ZStarDecomposition opposite{{1, 1}, (MatrixXd(2, 1) << 1, -1).finished(), 0, false};
    CHECK(compute_vn(d, opposite, kMedian, 0.4)(0, 0) < compute_vn(d, opposite, kMedian, 0.25)(0, 0));
    CHECK(design_effect_ratio(d, opposite, kMedian, 0.4) < 1.0);
  }

  TEST_CASE("independence value drops the cross term") {
    oracle::Gen g(8);
    MatrixXd Z(6, 2);
    for (int i = 0; i < 6; ++i) Z.row(i) << g.normal(), g.normal();
    const auto d = design_dataset(MatrixXd::Ones(6, 1), Z, {0, 0, 0, 1, 1, 2});
    ZStarDecomposition zd{std::vector<unsigned char>(6, 1), Z, 0, false};
    const MatrixXd v = compute_vn(d, zd, QuantileLevel(0.3), 0.09);
    const MatrixXd expect = 0.21 * Z.transpose() * Z / 6.0;
    CHECK((v - expect).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("grouping covariate inflates the variance") {
    MatrixXd Z(4, 1);
    Z << 1, 1, 0, 0;
    const auto d = design_dataset(MatrixXd::Ones(4, 1), Z, {0, 0, 1, 1});
    const auto zd = build_zstar(d, fake_fit({1, -1, 1, -1}));
    CHECK(design_effect_ratio(d, zd, kMedian, 0.4) > 1.0);
  }

  TEST_CASE("test statistic compositions") {
    MatrixXd Z(4, 1);
    Z << 1, 1, 0, 0;
    const auto d = design_dataset(MatrixXd::Ones(4, 1), Z, {0, 0, 1, 1});
    // Balanced scores: S_n = 0.
    const auto zero = qrs_test(d, fake_fit({1, -1, 1, -1}), kMedian, DeltaMode::ForcedIndependence);
    CHECK(zero.t_n == 0.0);
    CHECK(zero.p_value == 1.0);
  }

  TEST_CASE("S = -0.5 and V = 0.5 give T = 0.5") {
    MatrixXd Z(6, 1);
    Z << 1, 1, 0, 0, 2, 0;
    const auto d = design_dataset(MatrixXd::Ones(6, 1), Z, {0, 0, 1, 1, 2, 2});
    const auto r = qrs_test(d, fake_fit({1, -1, -1, 1, -1, -2}), kMedian, DeltaMode::Estimated);
    REQUIRE(r.df == 1);
    CHECK(r.t_n == r.s_n[0] * r.s_n[0] / r.v_n(0, 0));
    CHECK(-0.5 * -0.5 / 0.5 == 0.5);
    CHECK(chi2_sf(0.5, 1) == doctest::Approx(oracle::chi2_sf(0.5, 1)).epsilon(1e-10));
  }

  TEST_CASE("statistic at the five percent point") {
    // Tilting z toward the residual signs moves T_n continuously; bisect onto 3.841.
    const int n = 20;
    std::vector<double> res;
    MatrixXd Z(n, 1);
    for (int i = 0; i < n; ++i) {
      res.push_back(i % 3 == 0 ? -1.0 : 1.0);
      Z(i, 0) = i % 2;
    }
    auto statistic = [&](double t) {
      MatrixXd Zt = Z;
      for (int i = 0; i < n; ++i) Zt(i, 0) += t * res[static_cast<std::size_t>(i)];
      const auto d = design_dataset(MatrixXd::Ones(n, 1), Zt, singletons(n));
      return qrs_test(d, fake_fit(res), kMedian, DeltaMode::ForcedIndependence);
    };
    double lo = 0.0, hi = 5.0;
    REQUIRE(statistic(lo).t_n < 3.841);
    REQUIRE(statistic(hi).t_n > 3.841);
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      (statistic(mid).t_n < 3.841 ? lo : hi) = mid;
    }
    const auto r = statistic(lo);
    CHECK(r.t_n == doctest::Approx(3.841).epsilon(1e-9));
    CHECK(std::abs(r.p_value - 0.05) <= 1e-4);
    CHECK(std::abs(r.p_value - oracle::chi2_sf(r.t_n, 1)) <= 1e-8);
  }

  TEST_CASE("local power") {
    CHECK(local_power({0.05, 1.0, 0.0, 1.0, 1.0}) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(local_power({0.05, 1.0, 60.0, 1.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-12));
    const double z = 1.959963984540054;
    const double expect = 1.0 - oracle::normal_cdf(z - 2.0) + oracle::normal_cdf(-z - 2.0);
    CHECK(std::abs(local_power({0.05, 1.0, 2.0, 1.0, 1.0}) - 0.5160) <= 5e-4);
    CHECK(local_power({0.05, 1.0, 2.0, 1.0, 1.0}) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("scalar-only helpers") {
  const auto d = design_dataset(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 2), {0, 0});
  ZStarDecomposition zd{{1, 1}, MatrixXd::Ones(2, 2), 0, false};
  try {
    design_effect_ratio(d, zd, kMedian, 0.3);
    FAIL("expected NotScalar");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotScalar);
  }
  ZStarDecomposition zero{{1, 1}, MatrixXd::Zero(2, 1), 0, false};
  const auto d1 = design_dataset(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1), {0, 0});
  try {
    design_effect_ratio(d1, zero, kMedian, 0.3);
    FAIL("expected ZeroDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroDenominator);
  }
}

TEST_CASE("missing pairs fall back to independence") {
  MatrixXd Z(4, 1);
  Z << 1, 1, 0, 0;
  const auto d = design_dataset(MatrixXd::Ones(4, 1), Z, singletons(4));
  const auto r = qrs_test(d, fake_fit({1, -1, -1, -1}), kMedian, DeltaMode::Estimated);
  CHECK(r.delta_mode == DeltaMode::ForcedIndependence);
  CHECK(r.delta_hat == 0.25);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("singular variance uses the pseudo-inverse") {
  MatrixXd Z(6, 2);
  Z << 1, 2, 0, 0, 1, 2, 0, 0, 1, 2, 0, 0;
  const auto d = design_dataset(MatrixXd::Ones(6, 1), Z, singletons(6));
  const auto r = qrs_test(d, fake_fit({1, 1, -1, 1, -1, -1}), kMedian, DeltaMode::ForcedIndependence);
  CHECK(r.df == 1);
  CHECK(std::isfinite(r.t_n));
}

TEST_CASE("variance is symmetric positive semidefinite and T_n recomputes") {
  oracle::Gen g(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = oracle::random_dataset(g, 12, 4, 2, 2, 0.3);
    const auto fit = fit_powell(d, kMedian, FitConfig{}, DesignSelector::XOnly);
    const auto r = qrs_test(d, fit, kMedian, DeltaMode::Estimated);
    CHECK((r.v_n - r.v_n.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r.v_n);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    if (r.df == 2) {
      const double t = r.s_n.dot(r.v_n.inverse() * r.s_n);
      CHECK(r.t_n == doctest::Approx(t).epsilon(1e-8));
    }
  }
}

TEST_SUITE("property") {
  TEST_CASE("projected z is orthogonal to the active x rows") {
    oracle::Gen g(41);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 10 + g.below(60);
      const int p = 1 + g.below(4);
      const int q = 1 + g.below(3);
      MatrixXd X(n, p), Z(n, q);
      std::vector<unsigned char> mask(static_cast<std::size_t>(n));
      const double scale = std::exp(3.0 * g.normal());
      for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int k = 1; k < p; ++k) X(i, k) = scale * g.normal();
        for (int k = 0; k < q; ++k) Z(i, k) = g.normal() * (k + 1);
        mask[static_cast<std::size_t>(i)] = g.uniform() < 0.7 ? 1 : 0;
      }
      std::vector<int> subj(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) subj[static_cast<std::size_t>(i)] = i / 3;
      const auto d = design_dataset(X, Z, subj);
      const auto zd = build_zstar(d, fake_fit(std::vector<double>(static_cast<std::size_t>(n), 1.0), mask));
      MatrixXd xstar = X;
      for (int i = 0; i < n; ++i)
        if (!mask[static_cast<std::size_t>(i)]) xstar.row(i).setZero();
      const double bound = 1e-8 * (1.0 + xstar.cwiseAbs().maxCoeff() * Z.cwiseAbs().maxCoeff());
      CHECK((xstar.transpose() * zd.zstar).cwiseAbs().maxCoeff() <= bound);
    }
  }

  TEST_CASE("T_n is invariant under invertible reparameterisation of z") {
    oracle::Gen g(42);
    for (int trial = 0; trial < 30; ++trial) {
      const int q = 1 + g.below(3);
      const auto d = oracle::random_dataset(g, 15, 4, 2, q, 0.3);
      const auto fit = fit_powell(d, kMedian, FitConfig{}, DesignSelector::XOnly);
      MatrixXd A(q, q);
      do {
        for (int i = 0; i < q; ++i)
          for (int j = 0; j < q; ++j) A(i, j) = g.normal();
      } while (std::abs(A.determinant()) < 0.1);
      LongitudinalDataset moved = d;
      for (auto& b : moved.subjects)
        for (auto& r : b.rows) {
          const VectorXd z = Eigen::Map<const VectorXd>(r.z.data(), q);
          const VectorXd za = A.transpose() * z;
          r.z.assign(za.data(), za.data() + q);
        }
      const auto a = qrs_test(d, fit, kMedian, DeltaMode::Estimated);
      const auto b = qrs_test(moved, fit, kMedian, DeltaMode::Estimated);
      CHECK(a.df == b.df);
      CHECK(std::abs(a.t_n - b.t_n) <= 1e-8 * std::max(1.0, a.t_n));
    }
  }

  TEST_CASE("delta estimate under independence") {
    // Errors drawn independently of subject: P(both negative) = tau^2.
    oracle::Gen g(43);
    const int n = 10000;
    LongitudinalDataset d;
    for (int i = 0; i < n / 10; ++i) {
      SubjectBlock b{std::to_string(i), {}};
      for (int j = 0; j < 10; ++j) {
        Row r;
        r.x = {1.0, g.normal()};
        r.y = 2.0 + r.x[1] + g.normal();
        r.censor_limit = -100.0;
        b.rows.push_back(r);
      }
      d.subjects.push_back(b);
    }
    d = validate_dataset(d);
    const auto fit = fit_uncensored(d, kMedian, DesignSelector::XOnly);
    CHECK(std::abs(estimate_delta(d, fit).delta_hat - 0.25) <= 0.02);
  }
}
