#pragma once

#include <optional>
#include <vector>

#include "emenv/dataset.hpp"
#include "emenv/matrix_kernels.hpp"

namespace emenv {

// Predictor (X) model.  Normal: X ~ N(mu_x, Sigma_x).  TwoPoint: p = 1 and
// X takes values {0, scale} with P(X = scale) = pi.
enum class PredictorFamily { Normal, TwoPoint };

struct PredictorModel {
  PredictorFamily family = PredictorFamily::Normal;
  double scale = 1.0;  // two-point support {0, scale}
};

// Joint-normal parameters of the stacked vector (X^T, Y^T)^T implied by
// Y | X ~ N(beta X, Sigma) and X ~ N(mu_x, Sigma_x):
//   mu_tilde    = (mu_x, beta mu_x)
//   sigma_tilde = [[Sigma_x,        Sigma_x beta^T],
//                  [beta Sigma_x,   Sigma + beta Sigma_x beta^T]]
struct NormalJointParams {
  int p = 0;
  int r = 0;
  Vec mu_tilde;
  Mat sigma_tilde;
};

NormalJointParams build_joint(const Mat& beta, const Mat& sigma, const Vec& mu_x,
                              const Mat& sigma_x);

// Sufficient statistics of one E-step:
//   a1 = sum_i E(Y_i Y_i^T | obs),  a2 = sum_i E(Y_i X_i^T | obs),
//   a3 = sum_i E(X_i X_i^T | obs),  a4 = sum_i E(X_i | obs).
struct MomentAccumulators {
  Mat a1;
  Mat a2;
  Mat a3;
  Vec a4;
  int n_eff = 0;

  static MomentAccumulators zero(int p, int r);
  void add(const MomentAccumulators& other);
};

// Per-row conditional moments (single-row accumulators).
struct RowMoments {
  Mat a1;
  Mat a2;
  Mat a3;
  Vec a4;
};

// Exact conditional first/second moments of one row under the joint-normal
// model, assembled back into (X, Y) coordinates via the pattern permutation.
RowMoments cond_normal_moments(const ObservedDataset& ds, int row,
                               const MissPattern& pattern, const NormalJointParams& jp);

// Posterior success probability of a two-point predictor given the observed
// responses (pi_tilde = x/scale when x is observed).
struct BernoulliPosterior {
  double pi_tilde = 0.0;
};

BernoulliPosterior bernoulli_posterior(const ObservedDataset& ds, int row,
                                       const MissPattern& pattern, const Mat& beta,
                                       const Mat& sigma, double pi, double scale);

RowMoments bernoulli_cond_moments(const ObservedDataset& ds, int row,
                                  const MissPattern& pattern, const Mat& beta,
                                  const Mat& sigma, const BernoulliPosterior& posterior,
                                  double scale);

// Parameters of both predictor families; exactly one branch is active.
struct ModelParams {
  Mat beta;   // r x p
  Mat sigma;  // r x r
  // normal-predictor branch
  Vec mu_x;
  Mat sigma_x;
  // two-point branch
  double pi = 0.5;
  PredictorModel model;
};

// Full E-step: sums per-row conditional moments over the dataset.
// Conditional-moment coefficients are computed once per distinct pattern.
MomentAccumulators accumulate(const ObservedDataset& ds, const ModelParams& params);
MomentAccumulators accumulate(const ObservedDataset& ds, const ModelParams& params,
                              const PatternTable& table);

// For the two-point model: also returns sum_i pi_tilde_i (the rho update).
struct EStepResult {
  MomentAccumulators acc;
  double sum_pi_tilde = 0.0;
};
EStepResult e_step(const ObservedDataset& ds, const ModelParams& params,
                   const PatternTable& table);

// Closed-form observed-data log-likelihood under the joint-normal model,
// marginalizing each row to its observed coordinates (patterns cached).
double observed_loglik_normal(const ObservedDataset& ds, const NormalJointParams& jp);
double observed_loglik_normal(const ObservedDataset& ds, const NormalJointParams& jp,
                              const PatternTable& table);

}  // namespace emenv
