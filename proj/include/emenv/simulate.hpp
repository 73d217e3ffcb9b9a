#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emenv/em.hpp"
#include "emenv/rng.hpp"

namespace emenv {

enum class ErrorFamily { Normal, StudentT5, Uniform, Laplace };
enum class PredictorGenFamily { Normal, TwoPoint, StudentT5 };

// One simulation scenario.  omega_scale / omega0_scale parameterize the
// material / immaterial error magnitudes: variances for the normal family,
// the scale matrix, half-width or scale parameter for t / uniform / Laplace.
struct ScenarioSpec {
  int n = 500;
  int r = 20;
  int p = 5;
  int u = 3;
  ErrorFamily error_family = ErrorFamily::Normal;
  PredictorGenFamily predictor_family = PredictorGenFamily::Normal;
  double two_point_scale = 25.0;
  double two_point_pi = 0.5;
  double omega_scale = 0.1;
  double omega0_scale = 1000.0;
  int reps = 100;
  std::uint64_t seed = 1;

  // Missingness calibration targets (marginal per-variable rates).
  double target_missing_x = 0.12;
  double target_missing_y = 0.07;
  bool disable_missingness = false;

  // Envelope dimension handling for the envelope estimators: fixed true u
  // (default), or selected per replicate.
  enum class USelection { FixedTrue, BicQ, Bootstrap };
  USelection u_selection = USelection::FixedTrue;
  int bootstrap_b = 20;

  double tol = 1e-6;
  int max_iter = 500;
};

struct ScenarioParams {
  Mat gamma;    // r x u
  Mat gamma0;   // r x (r - u)
  Mat beta;     // r x p, satisfies Q_gamma beta = 0
  Mat sigma_x;  // normal / t predictors
  Vec mu_x;
  double pi = 0.5;  // two-point predictors
  Mat sigma_eps;    // error covariance under the normal family
};

ScenarioParams gen_parameters(const ScenarioSpec& spec, std::uint64_t seed);

struct FullData {
  Mat x;
  Mat y;
};

FullData gen_full_data(const ScenarioParams& params, const ScenarioSpec& spec,
                       std::uint64_t seed);

// Per-cell observed masks from the MAR mechanisms (one predictor mechanism
// and one response mechanism chosen uniformly per row); intercepts are
// calibrated against the generated data to hit the target marginal rates.
struct MissingnessMask {
  ObservedDataset::BoolMat x_observed;
  ObservedDataset::BoolMat y_observed;
};

MissingnessMask gen_missingness(const Mat& x, const Mat& y, const ScenarioSpec& spec,
                                std::uint64_t seed);

// The six estimators compared by the harness, in report order.
enum class Estimator {
  EmEnvelope,
  CcEnvelope,
  FullEnvelope,
  EmStandard,
  CcStandard,
  FullStandard,
};
inline constexpr std::array<Estimator, 6> kAllEstimators = {
    Estimator::EmEnvelope,  Estimator::CcEnvelope, Estimator::FullEnvelope,
    Estimator::EmStandard,  Estimator::CcStandard, Estimator::FullStandard,
};
const char* estimator_name(Estimator e);

struct EstimatorSummary {
  std::string name;
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
  int failures = 0;
  std::vector<double> mse;  // per successful replicate, replicate order
};

struct MseSummary {
  std::vector<EstimatorSummary> estimators;
  int reps = 0;
  // chosen u per replicate for the EM envelope (when selection is active)
  std::vector<int> chosen_u;
};

MseSummary run_scenario(const ScenarioSpec& spec, int threads = 1);

// Named presets mirroring the simulation studies.
std::vector<std::string> scenario_names();
std::optional<ScenarioSpec> scenario_by_name(const std::string& name);

// Appendix-style delimited table (estimator rows; min/Q1/median/mean/Q3/max).
std::string format_mse_table(const MseSummary& summary);

}  // namespace emenv
