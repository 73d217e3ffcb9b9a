#include "emenv/report.hpp"

#include <cmath>

namespace emenv {

using nlohmann::json;

namespace {

// JSON has no inf/nan literals; encode them as null.
json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

json double_vector(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(finite_or_null(x));
  return arr;
}

}  // namespace

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(finite_or_null(m(i, j)));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

json vector_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(finite_or_null(v(i)));
  return arr;
}

Mat matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  Mat m(rows, cols);
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data.at(i).at(jj).get<double>();
  }
  return m;
}

json fit_to_json(const EnvelopeFit& fit) {
  json rho;
  if (fit.rho.family == PredictorFamily::Normal) {
    rho = json{{"family", "normal"},
               {"mu_x", vector_to_json(fit.rho.mu_x)},
               {"sigma_x", matrix_to_json(fit.rho.sigma_x)}};
  } else {
    rho = json{{"family", "bernoulli"}, {"pi", fit.rho.pi}, {"scale", fit.rho.scale}};
  }
  return json{
      {"beta", matrix_to_json(fit.beta)},
      {"sigma", matrix_to_json(fit.sigma)},
      {"sigma1", matrix_to_json(fit.sigma1)},
      {"sigma2", matrix_to_json(fit.sigma2)},
      {"gamma", matrix_to_json(fit.gamma)},
      {"gamma0", matrix_to_json(fit.gamma0)},
      {"eta", matrix_to_json(fit.eta)},
      {"omega", matrix_to_json(fit.omega)},
      {"omega0", matrix_to_json(fit.omega0)},
      {"rho", std::move(rho)},
      {"u", fit.u},
      {"n", fit.n},
      {"iterations", fit.iterations},
      {"converged", fit.converged},
      {"standard_mle", fit.u == static_cast<int>(fit.beta.rows())},
      {"loglik_trace", double_vector(fit.loglik_trace)},
      {"beta_trace_norm", double_vector(fit.beta_trace_norm)},
      {"q_value", finite_or_null(fit.q_value)},
  };
}

json selection_to_json(const SelectionReport& report) {
  json j{{"chosen_u", report.chosen_u}, {"method", report.method}};
  if (!report.bic_values.empty()) j["bic_values"] = double_vector(report.bic_values);
  if (!report.candidates.empty()) {
    j["candidates"] = report.candidates;
    j["mean_q2"] = double_vector(report.mean_q2);
    j["reps"] = report.reps;
    j["failed_reps"] = report.failed_reps;
    j["used_fallback"] = report.used_fallback;
  }
  return j;
}

json bootstrap_to_json(const BootstrapResult& result) {
  return json{
      {"se", matrix_to_json(result.se)},
      {"ci_lower", matrix_to_json(result.ci_lower)},
      {"ci_upper", matrix_to_json(result.ci_upper)},
      {"p_value", matrix_to_json(result.p_value)},
      {"replicates", result.replicates},
      {"failures", result.failures},
      {"unreliable", result.unreliable},
  };
}

json summary_to_json(const MseSummary& summary) {
  json estimators = json::array();
  for (const EstimatorSummary& s : summary.estimators) {
    estimators.push_back(json{
        {"name", s.name},
        {"min", finite_or_null(s.min)},
        {"q1", finite_or_null(s.q1)},
        {"median", finite_or_null(s.median)},
        {"mean", finite_or_null(s.mean)},
        {"q3", finite_or_null(s.q3)},
        {"max", finite_or_null(s.max)},
        {"failures", s.failures},
        {"mse", double_vector(s.mse)},
    });
  }
  return json{{"estimators", std::move(estimators)},
              {"reps", summary.reps},
              {"chosen_u", summary.chosen_u}};
}

std::string dump_report(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace emenv
