#include "emenv/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "emenv/parallel.hpp"
#include "emenv/rng.hpp"
#include "emenv/selection.hpp"

namespace emenv {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

EnvelopeFit fit_estimator(const ObservedDataset& ds, const EmOptions& opts,
                          EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::EmEnvelope: return em_envelope_fit(ds, opts);
    case EstimatorKind::EmStandard: return em_standard_fit(ds, opts);
    case EstimatorKind::CompleteCaseEnvelope: return complete_case_fit(ds, opts, true);
    case EstimatorKind::CompleteCaseStandard: return complete_case_fit(ds, opts, false);
  }
  raise(ErrorCode::InvalidArgument, "unknown estimator kind");
}

double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_se(const ObservedDataset& ds, const EmOptions& opts,
                             EstimatorKind kind, int reps, std::uint64_t seed,
                             int threads) {
  if (reps < 2) raise(ErrorCode::InvalidArgument, "bootstrap_se needs reps >= 2");
  const int r = ds.r();
  const int p = ds.p();

  const EnvelopeFit original = fit_estimator(ds, opts, kind);

  EmOptions local = opts;
  local.track_loglik = false;

  std::vector<Mat> betas(reps);
  std::vector<char> ok(reps, 0);
  parallel_for(reps, threads, [&](int j) {
    try {
      const std::vector<int> idx = bootstrap_indices(ds.n(), seed, j);
      const EnvelopeFit fit = fit_estimator(ds.select_rows(idx), local, kind);
      betas[j] = fit.beta;
      ok[j] = 1;
    } catch (const Error&) {
      // singular blocks or too few complete rows; dropped and counted
    }
  });

  BootstrapResult out;
  out.replicates = reps;
  for (int j = 0; j < reps; ++j) out.failures += ok[j] ? 0 : 1;
  const int good = reps - out.failures;
  if (good == 0) {
    raise(ErrorCode::AllReplicatesFailed, "no bootstrap replicate converged");
  }
  out.unreliable = out.failures > reps / 10;

  out.se = Mat::Zero(r, p);
  out.ci_lower = Mat::Zero(r, p);
  out.ci_upper = Mat::Zero(r, p);
  out.p_value = Mat::Zero(r, p);
  std::vector<double> coef;
  coef.reserve(good);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < p; ++j) {
      coef.clear();
      for (int k = 0; k < reps; ++k) {
        if (ok[k]) coef.push_back(betas[k](i, j));
      }
      const double mean =
          std::accumulate(coef.begin(), coef.end(), 0.0) / coef.size();
      double ss = 0.0;
      for (double v : coef) ss += (v - mean) * (v - mean);
      const double sd = coef.size() > 1 ? std::sqrt(ss / (coef.size() - 1)) : 0.0;
      out.se(i, j) = sd;
      out.ci_lower(i, j) = sample_quantile(coef, 0.025);
      out.ci_upper(i, j) = sample_quantile(coef, 0.975);
      if (sd > 0.0) {
        out.p_value(i, j) = 2.0 * normal_cdf(-std::abs(original.beta(i, j) / sd));
      } else {
        out.p_value(i, j) = original.beta(i, j) == 0.0 ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

GradientMatrixG construct_g(const Mat& eta, const Mat& gamma, const Mat& gamma0,
                            const Mat& omega, const Mat& omega0, int dim_rho) {
  const int r = static_cast<int>(gamma.rows());
  const int u = static_cast<int>(gamma.cols());
  const int p = static_cast<int>(eta.cols());
  if (eta.rows() != u || gamma0.rows() != r || gamma0.cols() != r - u ||
      omega.rows() != u || omega.cols() != u || omega0.rows() != r - u ||
      omega0.cols() != r - u || dim_rho < 0) {
    raise(ErrorCode::ShapeMismatch, "construct_g argument shapes disagree");
  }
  if (u > 0 || r - u > 0) {
    Mat joint(r, r);
    if (u > 0) joint.leftCols(u) = gamma;
    if (r - u > 0) joint.rightCols(r - u) = gamma0;
    if ((joint.transpose() * joint - Mat::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-8) {
      raise(ErrorCode::NotOrthonormal, "(gamma, gamma0) is not jointly orthonormal");
    }
  }

  const int rows_beta = r * p;
  const int rows_sigma = r * (r + 1) / 2;
  const int cols_eta = u * p;
  const int cols_gamma = r * u;
  const int cols_omega = u * (u + 1) / 2;
  const int cols_omega0 = (r - u) * (r - u + 1) / 2;

  GradientMatrixG out;
  out.row_beta = rows_beta;
  out.row_sigma = rows_sigma;
  out.row_rho = dim_rho;
  out.g = Mat::Zero(rows_beta + rows_sigma + dim_rho,
                    cols_eta + cols_gamma + cols_omega + cols_omega0 + dim_rho);

  const Mat c_r = mk::contraction_matrix(r);
  const Mat i_r = Mat::Identity(r, r);
  const Mat i_p = Mat::Identity(p, p);

  int col = 0;
  // d vec(beta) / d vec(eta) and d vec(beta) / d vec(gamma)
  if (cols_eta > 0) out.g.block(0, col, rows_beta, cols_eta) = mk::kron(i_p, gamma);
  col += cols_eta;
  if (cols_gamma > 0) {
    out.g.block(0, col, rows_beta, cols_gamma) = mk::kron(eta.transpose(), i_r);
    // d vech(Sigma) / d vec(gamma), with gamma0 co-varying to stay orthonormal
    const Mat w = gamma0 * omega0 * gamma0.transpose();
    out.g.block(rows_beta, col, rows_sigma, cols_gamma) =
        2.0 * c_r * (mk::kron(gamma * omega, i_r) - mk::kron(gamma, w));
  }
  col += cols_gamma;
  if (cols_omega > 0) {
    out.g.block(rows_beta, col, rows_sigma, cols_omega) =
        c_r * mk::kron(gamma, gamma) * mk::expansion_matrix(u);
  }
  col += cols_omega;
  if (cols_omega0 > 0) {
    out.g.block(rows_beta, col, rows_sigma, cols_omega0) =
        c_r * mk::kron(gamma0, gamma0) * mk::expansion_matrix(r - u);
  }
  col += cols_omega0;
  if (dim_rho > 0) {
    out.g.block(rows_beta + rows_sigma, col, dim_rho, dim_rho) =
        Mat::Identity(dim_rho, dim_rho);
  }
  return out;
}

Mat project_covariance(const GradientMatrixG& g, const Mat& v_std) {
  const Mat v = mk::symmetrize(v_std, 1e-8 * (1.0 + v_std.cwiseAbs().maxCoeff()));
  if (v.rows() != g.g.rows()) {
    raise(ErrorCode::ShapeMismatch, "v_std dimension does not match G rows");
  }
  Eigen::LLT<Mat> llt(v);
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::NotPD, "v_std is not positive definite");
  }
  const Mat inner = g.g.transpose() * llt.solve(g.g);
  Mat v_env = g.g * mk::pinv(0.5 * (inner + inner.transpose())) * g.g.transpose();
  return 0.5 * (v_env + v_env.transpose());
}

}  // namespace emenv
