#include "emenv/selection.hpp"

#include <cmath>
#include <limits>

#include "emenv/parallel.hpp"
#include "emenv/rng.hpp"

namespace emenv {

double bic_q(const EnvelopeFit& fit, int n, int p, int u) {
  return -2.0 * fit.q_value + static_cast<double>(p) * u * std::log(static_cast<double>(n));
}

SelectionReport select_u_bic(const ObservedDataset& ds, const EmOptions& opts,
                             int threads) {
  const int r = ds.r();
  SelectionReport report;
  report.method = "bicq";
  report.bic_values.assign(r + 1, std::numeric_limits<double>::infinity());

  std::vector<std::string> errors(r + 1);
  parallel_for(r + 1, threads, [&](int u) {
    try {
      EmOptions local = opts;
      local.u = u;
      local.track_loglik = false;
      const EnvelopeFit fit = em_envelope_fit(ds, local);
      report.bic_values[u] = bic_q(fit, ds.n(), ds.p(), u);
    } catch (const Error& e) {
      errors[u] = e.what();
    }
  });

  int best = -1;
  for (int u = 0; u <= r; ++u) {
    if (!std::isfinite(report.bic_values[u])) continue;
    if (best < 0 || report.bic_values[u] < report.bic_values[best]) best = u;
  }
  if (best < 0) {
    raise(ErrorCode::AllReplicatesFailed, "no envelope dimension could be fitted: " +
                                              (errors.empty() ? "" : errors[0]));
  }
  report.chosen_u = best;
  return report;
}

std::vector<int> bootstrap_indices(int n, std::uint64_t master_seed, int replicate) {
  Rng rng = make_rng(master_seed, static_cast<std::uint64_t>(replicate));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) {
    idx[i] = static_cast<int>(runif(rng) * n);
    if (idx[i] >= n) idx[i] = n - 1;
  }
  return idx;
}

SelectionReport select_u_bootstrap(const ObservedDataset& ds, const EmOptions& opts,
                                   int b, double threshold, std::uint64_t seed,
                                   int threads) {
  if (b < 1) raise(ErrorCode::InvalidArgument, "bootstrap selection needs b >= 1");
  const int r = ds.r();
  SelectionReport report;
  report.method = "bootstrap";
  report.reps = b;

  // Resample index streams are shared across candidate dimensions; stream j
  // derives from the master seed by the replicate counter.
  std::vector<std::vector<int>> resamples(b);
  for (int j = 0; j < b; ++j) resamples[j] = bootstrap_indices(ds.n(), seed, j);

  for (int u = r - 1; u >= 0; --u) {
    EmOptions local = opts;
    local.u = u;
    local.track_loglik = false;

    double mean_q2 = std::numeric_limits<double>::quiet_NaN();
    int failures = 0;
    if (u == 0) {
      mean_q2 = 1.0;  // empty-basis convention
    } else {
      Mat gamma_hat;
      try {
        gamma_hat = em_envelope_fit(ds, local).gamma;
      } catch (const Error&) {
        report.candidates.push_back(u);
        report.mean_q2.push_back(mean_q2);
        continue;
      }
      std::vector<double> q2(b, std::numeric_limits<double>::quiet_NaN());
      parallel_for(b, threads, [&](int j) {
        try {
          const ObservedDataset resampled = ds.select_rows(resamples[j]);
          const EnvelopeFit fit = em_envelope_fit(resampled, local);
          q2[j] = mk::q2_corr(gamma_hat, fit.gamma);
        } catch (const Error&) {
          // dropped and counted below
        }
      });
      double sum = 0.0;
      int ok = 0;
      for (int j = 0; j < b; ++j) {
        if (std::isfinite(q2[j])) {
          sum += q2[j];
          ++ok;
        } else {
          ++failures;
        }
      }
      if (ok > 0) mean_q2 = sum / ok;
    }

    report.candidates.push_back(u);
    report.mean_q2.push_back(mean_q2);
    report.failed_reps += failures;
    if (std::isfinite(mean_q2) && mean_q2 > threshold) {
      report.chosen_u = u;
      return report;
    }
  }

  // Every candidate failed outright; defer to BIC.
  SelectionReport bic = select_u_bic(ds, opts, threads);
  report.chosen_u = bic.chosen_u;
  report.bic_values = std::move(bic.bic_values);
  report.used_fallback = true;
  return report;
}

}  // namespace emenv
