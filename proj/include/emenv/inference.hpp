#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "emenv/em.hpp"

namespace emenv {

struct BootstrapResult {
  Mat se;        // r x p, sample standard deviation across replicates
  Mat ci_lower;  // percentile 2.5%
  Mat ci_upper;  // percentile 97.5%
  Mat p_value;   // 2 Phi(-|beta_hat / se|)
  int replicates = 0;
  int failures = 0;
  bool unreliable = false;  // more than 10% of replicates failed
};

// Which estimator a bootstrap refit should use.
enum class EstimatorKind { EmEnvelope, EmStandard, CompleteCaseEnvelope, CompleteCaseStandard };

EnvelopeFit fit_estimator(const ObservedDataset& ds, const EmOptions& opts,
                          EstimatorKind kind);

// Nonparametric bootstrap over rows: refits the chosen estimator on each
// resample with u fixed at opts.u; failed replicates are dropped and counted.
BootstrapResult bootstrap_se(const ObservedDataset& ds, const EmOptions& opts,
                             EstimatorKind kind, int reps, std::uint64_t seed,
                             int threads = 1);

// The gradient matrix of h(phi) = (vec beta, vech Sigma, vec rho) with
// respect to phi = (vec eta, vec Gamma, vech Omega, vech Omega0, vec rho);
// rank-deficient by over-parameterization.
struct GradientMatrixG {
  Mat g;
  int row_beta = 0;   // rp
  int row_sigma = 0;  // r(r+1)/2
  int row_rho = 0;    // dim rho
};

GradientMatrixG construct_g(const Mat& eta, const Mat& gamma, const Mat& gamma0,
                            const Mat& omega, const Mat& omega0, int dim_rho);

// V_env = G (G^T V_std^{-1} G)^dagger G^T; symmetric PSD, and
// V_std - V_env is PSD (the envelope efficiency gain).
Mat project_covariance(const GradientMatrixG& g, const Mat& v_std);

// Interpolated sample quantile (linear between order statistics).
double sample_quantile(std::vector<double> values, double prob);

}  // namespace emenv
