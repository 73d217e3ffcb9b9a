#include "emenv/moments.hpp"

#include <cmath>

namespace emenv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Gather sigma(rows, cols) for index vectors.
Mat gather(const Mat& sigma, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(i, j) = sigma(rows[i], cols[j]);
    }
  }
  return out;
}

Vec gather(const Vec& v, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

// Cholesky of an observed-block covariance with the one-shot ridge retry.
Eigen::LLT<Mat> factor_observed_block(const Mat& block) {
  Eigen::LLT<Mat> llt(block);
  if (llt.info() == Eigen::Success) return llt;
  const double dim = static_cast<double>(block.rows());
  const double ridge = 1e-10 * block.trace() / std::max(dim, 1.0);
  Mat repaired = block;
  repaired.diagonal().array() += ridge;
  llt.compute(repaired);
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::SingularObservedBlock, "observed-block covariance is singular");
  }
  return llt;
}

// Per-pattern conditional-moment coefficients for the joint-normal model.
struct NormalPatternCoeffs {
  std::vector<int> obs;
  std::vector<int> mis;
  Vec mu_obs;
  Vec mu_mis;
  Mat k;       // Sigma_mo Sigma_oo^{-1}
  Mat schur;   // Sigma_mm - K Sigma_om
  Eigen::LLT<Mat> llt_oo;
  double logdet_oo = 0.0;
};

NormalPatternCoeffs make_normal_coeffs(const MissPattern& pattern,
                                       const NormalJointParams& jp) {
  NormalPatternCoeffs c;
  c.obs = pattern.obs_idx;
  c.mis = pattern.mis_idx;
  c.mu_obs = gather(jp.mu_tilde, c.obs);
  c.mu_mis = gather(jp.mu_tilde, c.mis);
  const Mat sigma_oo = gather(jp.sigma_tilde, c.obs, c.obs);
  c.llt_oo = factor_observed_block(sigma_oo);
  c.logdet_oo = 2.0 * c.llt_oo.matrixLLT().diagonal().array().log().sum();
  if (!c.mis.empty()) {
    const Mat sigma_om = gather(jp.sigma_tilde, c.obs, c.mis);
    const Mat sigma_mm = gather(jp.sigma_tilde, c.mis, c.mis);
    c.k = c.llt_oo.solve(sigma_om).transpose();
    c.schur = sigma_mm - c.k * sigma_om;
    c.schur = 0.5 * (c.schur + c.schur.transpose());
  } else {
    c.k = Mat(0, c.obs.size());
    c.schur = Mat(0, 0);
  }
  return c;
}

RowMoments row_moments_from_coeffs(const ObservedDataset& ds, int row,
                                   const NormalPatternCoeffs& c) {
  const int p = ds.p();
  const int r = ds.r();
  const int m = p + r;
  const int no = static_cast<int>(c.obs.size());
  const int nm = static_cast<int>(c.mis.size());

  Vec d_obs(no);
  for (int i = 0; i < no; ++i) d_obs(i) = ds.cell_value(row, c.obs[i]);

  // First and second conditional moments of the full coordinate vector.
  Vec first = Vec::Zero(m);
  Mat second = Mat::Zero(m, m);
  Vec mu_c;
  if (nm > 0) {
    mu_c = c.mu_mis + c.k * (d_obs - c.mu_obs);
  }
  for (int i = 0; i < no; ++i) first(c.obs[i]) = d_obs(i);
  for (int i = 0; i < nm; ++i) first(c.mis[i]) = mu_c(i);

  for (int i = 0; i < no; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = d_obs(i) * d_obs(j);
      second(c.obs[i], c.obs[j]) = v;
      second(c.obs[j], c.obs[i]) = v;
    }
  }
  for (int i = 0; i < nm; ++i) {
    for (int j = 0; j < no; ++j) {
      const double v = mu_c(i) * d_obs(j);
      second(c.mis[i], c.obs[j]) = v;
      second(c.obs[j], c.mis[i]) = v;
    }
    for (int j = 0; j <= i; ++j) {
      const double v = c.schur(i, j) + mu_c(i) * mu_c(j);
      second(c.mis[i], c.mis[j]) = v;
      second(c.mis[j], c.mis[i]) = v;
    }
  }

  RowMoments rm;
  rm.a3 = second.topLeftCorner(p, p);
  rm.a2 = second.bottomLeftCorner(r, p);
  rm.a1 = second.bottomRightCorner(r, r);
  rm.a4 = first.head(p);
  return rm;
}

// --- two-point predictor machinery (p = 1, support {0, scale}) ---

struct TwoPointPatternCoeffs {
  bool x_observed = false;
  std::vector<int> y_obs;  // indices into 0..r-1
  std::vector<int> y_mis;
  Vec beta_obs;
  Vec beta_mis;
  Mat k;      // Sigma_mo Sigma_oo^{-1} over the response partition
  Mat schur;  // conditional covariance of missing responses given observed
  Vec w;      // Sigma_oo^{-1} beta_obs
};

TwoPointPatternCoeffs make_twopoint_coeffs(const MissPattern& pattern, const Mat& beta,
                                           const Mat& sigma, int p) {
  if (p != 1) {
    raise(ErrorCode::InvalidArgument, "two-point predictor model requires p = 1");
  }
  TwoPointPatternCoeffs c;
  c.x_observed = !pattern.obs_idx.empty() && pattern.obs_idx.front() == 0;
  for (int idx : pattern.obs_idx) {
    if (idx >= p) c.y_obs.push_back(idx - p);
  }
  for (int idx : pattern.mis_idx) {
    if (idx >= p) c.y_mis.push_back(idx - p);
  }
  const int no = static_cast<int>(c.y_obs.size());
  const int nm = static_cast<int>(c.y_mis.size());
  c.beta_obs = Vec(no);
  for (int i = 0; i < no; ++i) c.beta_obs(i) = beta(c.y_obs[i], 0);
  c.beta_mis = Vec(nm);
  for (int i = 0; i < nm; ++i) c.beta_mis(i) = beta(c.y_mis[i], 0);

  if (no > 0) {
    const Mat sigma_oo = gather(sigma, c.y_obs, c.y_obs);
    const Eigen::LLT<Mat> llt = factor_observed_block(sigma_oo);
    c.w = llt.solve(c.beta_obs);
    if (nm > 0) {
      const Mat sigma_om = gather(sigma, c.y_obs, c.y_mis);
      c.k = llt.solve(sigma_om).transpose();
      c.schur = gather(sigma, c.y_mis, c.y_mis) - c.k * sigma_om;
      c.schur = 0.5 * (c.schur + c.schur.transpose());
    } else {
      c.k = Mat(0, no);
      c.schur = Mat(0, 0);
    }
  } else {
    c.w = Vec(0);
    c.k = Mat(nm, 0);
    c.schur = gather(sigma, c.y_mis, c.y_mis);
  }
  return c;
}

double twopoint_posterior(const TwoPointPatternCoeffs& c, const Vec& y_obs_vals,
                          double pi, double scale) {
  if (pi <= 0.0) return 0.0;
  if (pi >= 1.0) return 1.0;
  // log q = c beta_o^T S_oo^{-1} y_o - c^2 beta_o^T S_oo^{-1} beta_o / 2
  const double log_q =
      scale * c.w.dot(y_obs_vals) - 0.5 * scale * scale * c.w.dot(c.beta_obs);
  const double z = std::log(pi / (1.0 - pi)) + log_q;
  return 1.0 / (1.0 + std::exp(-z));
}

// E(Y | X = x, y_obs) assembled into response coordinates.
Vec twopoint_cond_mean(const TwoPointPatternCoeffs& c, const Vec& y_obs_vals, double x,
                       int r) {
  Vec mean = Vec::Zero(r);
  for (std::size_t i = 0; i < c.y_obs.size(); ++i) mean(c.y_obs[i]) = y_obs_vals(i);
  if (!c.y_mis.empty()) {
    const Vec mis = c.beta_mis * x + c.k * (y_obs_vals - c.beta_obs * x);
    for (std::size_t i = 0; i < c.y_mis.size(); ++i) mean(c.y_mis[i]) = mis(i);
  }
  return mean;
}

RowMoments twopoint_row_moments(const ObservedDataset& ds, int row,
                                const TwoPointPatternCoeffs& c, double pi_tilde,
                                double scale) {
  const int r = ds.r();
  Vec y_obs_vals(c.y_obs.size());
  for (std::size_t i = 0; i < c.y_obs.size(); ++i) {
    y_obs_vals(i) = ds.y()(row, c.y_obs[i]);
  }

  // Conditional covariance contribution (independent of x).
  Mat cov = Mat::Zero(r, r);
  for (std::size_t i = 0; i < c.y_mis.size(); ++i) {
    for (std::size_t j = 0; j < c.y_mis.size(); ++j) {
      cov(c.y_mis[i], c.y_mis[j]) = c.schur(i, j);
    }
  }

  RowMoments rm;
  rm.a3 = Mat(1, 1);
  rm.a4 = Vec(1);
  if (c.x_observed) {
    const double x = ds.x()(row, 0);
    const Vec mean = twopoint_cond_mean(c, y_obs_vals, x, r);
    rm.a1 = cov + mean * mean.transpose();
    rm.a2 = mean * x;
    rm.a3(0, 0) = x * x;
    rm.a4(0) = x;
  } else {
    const Vec mean0 = twopoint_cond_mean(c, y_obs_vals, 0.0, r);
    const Vec mean1 = twopoint_cond_mean(c, y_obs_vals, scale, r);
    rm.a1 = cov + (1.0 - pi_tilde) * (mean0 * mean0.transpose()) +
            pi_tilde * (mean1 * mean1.transpose());
    rm.a2 = scale * pi_tilde * mean1;
    rm.a3(0, 0) = scale * scale * pi_tilde;
    rm.a4(0) = scale * pi_tilde;
  }
  return rm;
}

void check_psd(const Mat& m, const char* what) {
  const mk::SymEig e = mk::eig_sym(m);
  if (e.values.size() == 0) return;
  const double lmax = std::max(e.values(0), 0.0);
  if (e.values(e.values.size() - 1) < -1e-8 * std::max(lmax, 1.0)) {
    raise(ErrorCode::NotPSD, std::string(what) + " is not positive semi-definite");
  }
}

}  // namespace

NormalJointParams build_joint(const Mat& beta, const Mat& sigma, const Vec& mu_x,
                              const Mat& sigma_x) {
  const int r = static_cast<int>(beta.rows());
  const int p = static_cast<int>(beta.cols());
  if (sigma.rows() != r || sigma.cols() != r || sigma_x.rows() != p ||
      sigma_x.cols() != p || mu_x.size() != p) {
    raise(ErrorCode::ShapeMismatch, "build_joint parameter shapes disagree");
  }
  const Mat sigma_s = mk::symmetrize(sigma);
  const Mat sigma_x_s = mk::symmetrize(sigma_x);
  check_psd(sigma_s, "sigma");
  check_psd(sigma_x_s, "sigma_x");

  NormalJointParams jp;
  jp.p = p;
  jp.r = r;
  jp.mu_tilde = Vec(p + r);
  jp.mu_tilde.head(p) = mu_x;
  jp.mu_tilde.tail(r) = beta * mu_x;
  jp.sigma_tilde = Mat(p + r, p + r);
  jp.sigma_tilde.topLeftCorner(p, p) = sigma_x_s;
  jp.sigma_tilde.topRightCorner(p, r) = sigma_x_s * beta.transpose();
  jp.sigma_tilde.bottomLeftCorner(r, p) = beta * sigma_x_s;
  jp.sigma_tilde.bottomRightCorner(r, r) = sigma_s + beta * sigma_x_s * beta.transpose();
  jp.sigma_tilde = 0.5 * (jp.sigma_tilde + jp.sigma_tilde.transpose());
  return jp;
}

MomentAccumulators MomentAccumulators::zero(int p, int r) {
  MomentAccumulators acc;
  acc.a1 = Mat::Zero(r, r);
  acc.a2 = Mat::Zero(r, p);
  acc.a3 = Mat::Zero(p, p);
  acc.a4 = Vec::Zero(p);
  acc.n_eff = 0;
  return acc;
}

void MomentAccumulators::add(const MomentAccumulators& other) {
  a1 += other.a1;
  a2 += other.a2;
  a3 += other.a3;
  a4 += other.a4;
  n_eff += other.n_eff;
}

RowMoments cond_normal_moments(const ObservedDataset& ds, int row,
                               const MissPattern& pattern, const NormalJointParams& jp) {
  if (jp.p != ds.p() || jp.r != ds.r()) {
    raise(ErrorCode::ShapeMismatch, "joint parameters do not match dataset dimensions");
  }
  return row_moments_from_coeffs(ds, row, make_normal_coeffs(pattern, jp));
}

BernoulliPosterior bernoulli_posterior(const ObservedDataset& ds, int row,
                                       const MissPattern& pattern, const Mat& beta,
                                       const Mat& sigma, double pi, double scale) {
  const TwoPointPatternCoeffs c = make_twopoint_coeffs(pattern, beta, sigma, ds.p());
  BernoulliPosterior post;
  if (c.x_observed) {
    post.pi_tilde = ds.x()(row, 0) / scale;
    return post;
  }
  Vec y_obs_vals(c.y_obs.size());
  for (std::size_t i = 0; i < c.y_obs.size(); ++i) {
    y_obs_vals(i) = ds.y()(row, c.y_obs[i]);
  }
  post.pi_tilde = twopoint_posterior(c, y_obs_vals, pi, scale);
  return post;
}

RowMoments bernoulli_cond_moments(const ObservedDataset& ds, int row,
                                  const MissPattern& pattern, const Mat& beta,
                                  const Mat& sigma, const BernoulliPosterior& posterior,
                                  double scale) {
  const TwoPointPatternCoeffs c = make_twopoint_coeffs(pattern, beta, sigma, ds.p());
  return twopoint_row_moments(ds, row, c, posterior.pi_tilde, scale);
}

EStepResult e_step(const ObservedDataset& ds, const ModelParams& params,
                   const PatternTable& table) {
  EStepResult result;
  result.acc = MomentAccumulators::zero(ds.p(), ds.r());

  if (params.model.family == PredictorFamily::Normal) {
    const NormalJointParams jp =
        build_joint(params.beta, params.sigma, params.mu_x, params.sigma_x);
    for (const PatternGroup& group : table.groups) {
      const NormalPatternCoeffs coeffs = make_normal_coeffs(group.pattern, jp);
      for (int row : group.rows) {
        const RowMoments rm = row_moments_from_coeffs(ds, row, coeffs);
        result.acc.a1 += rm.a1;
        result.acc.a2 += rm.a2;
        result.acc.a3 += rm.a3;
        result.acc.a4 += rm.a4;
        ++result.acc.n_eff;
      }
    }
  } else {
    const double scale = params.model.scale;
    for (const PatternGroup& group : table.groups) {
      const TwoPointPatternCoeffs coeffs =
          make_twopoint_coeffs(group.pattern, params.beta, params.sigma, ds.p());
      for (int row : group.rows) {
        double pi_tilde;
        if (coeffs.x_observed) {
          pi_tilde = ds.x()(row, 0) / scale;
        } else {
          Vec y_obs_vals(coeffs.y_obs.size());
          for (std::size_t i = 0; i < coeffs.y_obs.size(); ++i) {
            y_obs_vals(i) = ds.y()(row, coeffs.y_obs[i]);
          }
          pi_tilde = twopoint_posterior(coeffs, y_obs_vals, params.pi, scale);
        }
        const RowMoments rm = twopoint_row_moments(ds, row, coeffs, pi_tilde, scale);
        result.acc.a1 += rm.a1;
        result.acc.a2 += rm.a2;
        result.acc.a3 += rm.a3;
        result.acc.a4 += rm.a4;
        ++result.acc.n_eff;
        result.sum_pi_tilde += pi_tilde;
      }
    }
  }
  result.acc.a1 = 0.5 * (result.acc.a1 + result.acc.a1.transpose());
  result.acc.a3 = 0.5 * (result.acc.a3 + result.acc.a3.transpose());
  return result;
}

MomentAccumulators accumulate(const ObservedDataset& ds, const ModelParams& params,
                              const PatternTable& table) {
  return e_step(ds, params, table).acc;
}

MomentAccumulators accumulate(const ObservedDataset& ds, const ModelParams& params) {
  return accumulate(ds, params, group_patterns(ds));
}

double observed_loglik_normal(const ObservedDataset& ds, const NormalJointParams& jp,
                              const PatternTable& table) {
  double loglik = 0.0;
  for (const PatternGroup& group : table.groups) {
    const std::vector<int>& obs = group.pattern.obs_idx;
    const int no = static_cast<int>(obs.size());
    const Vec mu_obs = gather(jp.mu_tilde, obs);
    const Mat sigma_oo = gather(jp.sigma_tilde, obs, obs);
    const Eigen::LLT<Mat> llt = factor_observed_block(sigma_oo);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    for (int row : group.rows) {
      Vec d_obs(no);
      for (int i = 0; i < no; ++i) d_obs(i) = ds.cell_value(row, obs[i]);
      const Vec centered = d_obs - mu_obs;
      const double quad = centered.dot(llt.solve(centered));
      loglik += -0.5 * (no * kLog2Pi + logdet + quad);
    }
  }
  return loglik;
}

double observed_loglik_normal(const ObservedDataset& ds, const NormalJointParams& jp) {
  return observed_loglik_normal(ds, jp, group_patterns(ds));
}

}  // namespace emenv
