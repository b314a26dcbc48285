#pragma once

#include "cqr/intervals.hpp"
#include "cqr/powell.hpp"
#include "cqr/rank_score.hpp"

#include <json.hpp>

namespace cqr::cli {

using nlohmann::ordered_json;

ordered_json vector_json(const Eigen::VectorXd& v);
ordered_json matrix_json(const Eigen::MatrixXd& m);

ordered_json fit_json(const PowellFit& fit, double tau, DesignSelector selector);
ordered_json test_json(const RankScoreResult& result, double tau, const Eigen::VectorXd& beta0);
ordered_json interval_json(const ConfidenceInterval& ci, double tau);
ordered_json bootstrap_json(const BootstrapResult& result, const BootstrapConfig& config, double tau);

}  // namespace cqr::cli
