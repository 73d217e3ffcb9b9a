#pragma once

#include <optional>
#include <vector>

#include "emenv/dataset.hpp"
#include "emenv/envelope.hpp"
#include "emenv/moments.hpp"

namespace emenv {

// Optional initialization overrides (defaults follow the cold start:
// sigma = I, beta = 0, mu_x = 0, sigma_x = I, pi = 0.5).
struct InitOverrides {
  std::optional<Mat> beta;
  std::optional<Mat> sigma;
  std::optional<Vec> mu_x;
  std::optional<Mat> sigma_x;
  std::optional<double> pi;
};

struct EmOptions {
  double tol = 1e-6;  // L1 change in beta between iterations
  int max_iter = 500;
  int u = -1;  // envelope dimension; fits with u = r reduce to the standard EM
  PredictorModel model;
  bool warm_start = false;   // seed from complete-case moments when >= 10 complete rows
  bool track_loglik = true;  // record the observed-data log-likelihood (normal model)
  InitOverrides init;
};

// Predictor-distribution parameters carried in a fit.
struct RhoParams {
  PredictorFamily family = PredictorFamily::Normal;
  Vec mu_x;
  Mat sigma_x;
  double pi = 0.5;
  double scale = 1.0;
};

struct EnvelopeFit {
  Mat beta;
  Mat sigma;
  Mat sigma1;
  Mat sigma2;
  Mat gamma;
  Mat gamma0;
  Mat eta;
  Mat omega;
  Mat omega0;
  RhoParams rho;
  int u = 0;
  int n = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;      // normal predictor model only
  std::vector<double> beta_trace_norm;   // L1 change in beta per iteration
  double q_value = 0.0;                  // Q(phi_hat | phi_hat), constants included
};

// EM with the envelope M-step at fixed dimension opts.u.
EnvelopeFit em_envelope_fit(const ObservedDataset& ds, const EmOptions& opts);

// The same loop with gamma fixed at the identity span (u = r): the
// unconstrained maximum-likelihood updates.
EnvelopeFit em_standard_fit(const ObservedDataset& ds, const EmOptions& opts);

// Drops every row with any missing cell, then runs the full-data estimator.
EnvelopeFit complete_case_fit(const ObservedDataset& ds, const EmOptions& opts,
                              bool envelope);

// One-shot estimator on fully observed (x, y); envelope selects the u < r path.
EnvelopeFit full_data_fit(const Mat& x, const Mat& y, int u, bool envelope,
                          const EmOptions& opts = {});

}  // namespace emenv
