#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emenv/em.hpp"

namespace emenv {

struct SelectionReport {
  int chosen_u = 0;
  std::string method;  // "bicq" | "bootstrap"
  // BIC path: criterion value for u = 0..r (r+1 entries).
  std::vector<double> bic_values;
  // Bootstrap path: candidates actually evaluated (descending) and the
  // mean q^2 across converged resamples for each.
  std::vector<int> candidates;
  std::vector<double> mean_q2;
  int reps = 0;
  int failed_reps = 0;
  bool used_fallback = false;  // bootstrap path fell back to BIC
};

// BIC_Q = -2 Q(phi_hat | phi_hat) + p u log n.
double bic_q(const EnvelopeFit& fit, int n, int p, int u);

// Fits u = 0..r and returns the argmin of BIC_Q (ties toward smaller u).
SelectionReport select_u_bic(const ObservedDataset& ds, const EmOptions& opts,
                             int threads = 1);

// Bootstrap q^2 procedure: for candidate u descending from r-1, compare the
// original-data basis against b row-resampled refits; pick the largest u
// whose mean q^2 exceeds `threshold`.  u = 0 qualifies vacuously; if every
// candidate errors out, falls back to BIC.
SelectionReport select_u_bootstrap(const ObservedDataset& ds, const EmOptions& opts,
                                   int b, double threshold, std::uint64_t seed,
                                   int threads = 1);

// Row indices of one bootstrap resample (sampling with replacement).
std::vector<int> bootstrap_indices(int n, std::uint64_t master_seed, int replicate);

}  // namespace emenv
