#include "json_output.hpp"

namespace cqr::cli {

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

ordered_json fit_json(const PowellFit& fit, double tau, DesignSelector selector) {
  ordered_json j;
  j["tau"] = tau;
  j["design"] = selector == DesignSelector::JointXZ ? "joint" : "x";
  j["coef"] = vector_json(fit.coef);
  j["objective"] = fit.objective;
  j["n"] = fit.uncensored_pred_mask.size();
  j["n_active"] = fit.n_active();
  j["n_predicted_censored"] = fit.uncensored_pred_mask.size() - fit.n_active();
  j["n_iterations"] = fit.n_iterations;
  j["n_starts"] = fit.n_starts;
  j["converged"] = fit.converged;
  j["boundary_flag"] = fit.boundary_flag;
  return j;
}

ordered_json test_json(const RankScoreResult& r, double tau, const Eigen::VectorXd& beta0) {
  ordered_json j;
  j["tau"] = tau;
  j["beta0"] = vector_json(beta0);
  j["s_n"] = vector_json(r.s_n);
  j["delta_hat"] = r.delta_hat;
  j["delta_mode"] = to_string(r.delta_mode);
  j["pair_count_L"] = r.pair_count_L;
  j["v_n"] = matrix_json(r.v_n);
  j["t_n"] = r.t_n;
  j["df"] = r.df;
  j["p_value"] = r.p_value;
  j["warnings"] = r.warnings;
  return j;
}

ordered_json interval_json(const ConfidenceInterval& ci, double tau) {
  ordered_json j;
  j["tau"] = tau;
  j["method"] = to_string(ci.method);
  j["coefficient"] = ci.target;
  j["estimate"] = ci.estimate;
  j["level"] = ci.level;
  // Unbounded sides are written as null.
  j["lower"] = ci.lower;
  j["upper"] = ci.upper;
  j["n_evaluations"] = ci.n_evaluations;
  j["boundary_warnings"] = ci.boundary_warnings;
  j["warnings"] = ci.warnings;
  return j;
}

ordered_json bootstrap_json(const BootstrapResult& result, const BootstrapConfig& config, double tau) {
  ordered_json j;
  j["tau"] = tau;
  j["method"] = to_string(IntervalMethod::Bootstrap);
  j["B"] = config.B;
  j["seed"] = config.seed;
  j["level"] = config.level;
  j["attempts"] = result.attempts;
  j["estimate"] = vector_json(result.estimate);
  ordered_json intervals = ordered_json::array();
  for (const auto& ci : result.intervals) {
    ordered_json c;
    c["coefficient"] = ci.target;
    c["estimate"] = ci.estimate;
    c["lower"] = ci.lower;
    c["upper"] = ci.upper;
    intervals.push_back(std::move(c));
  }
  j["intervals"] = std::move(intervals);
  return j;
}

}  // namespace cqr::cli
