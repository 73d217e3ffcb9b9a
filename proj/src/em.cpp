#include "emenv/em.hpp"

#include <cmath>
#include <limits>

namespace emenv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct State {
  Mat beta;
  Mat sigma;
  Vec mu_x;
  Mat sigma_x;
  double pi = 0.5;
};

State cold_start(int p, int r, const EmOptions& opts) {
  State s;
  s.beta = Mat::Zero(r, p);
  s.sigma = Mat::Identity(r, r);
  s.mu_x = Vec::Zero(p);
  s.sigma_x = Mat::Identity(p, p);
  s.pi = 0.5;
  if (opts.init.beta) s.beta = *opts.init.beta;
  if (opts.init.sigma) s.sigma = *opts.init.sigma;
  if (opts.init.mu_x) s.mu_x = *opts.init.mu_x;
  if (opts.init.sigma_x) s.sigma_x = *opts.init.sigma_x;
  if (opts.init.pi) s.pi = *opts.init.pi;
  return s;
}

// Complete-data cross products of a fully observed (x, y) block.
MomentAccumulators raw_accumulators(const Mat& x, const Mat& y) {
  MomentAccumulators acc;
  acc.a1 = y.transpose() * y;
  acc.a2 = y.transpose() * x;
  acc.a3 = x.transpose() * x;
  acc.a4 = x.colwise().sum().transpose();
  acc.n_eff = static_cast<int>(x.rows());
  acc.a1 = 0.5 * (acc.a1 + acc.a1.transpose());
  acc.a3 = 0.5 * (acc.a3 + acc.a3.transpose());
  return acc;
}

std::optional<State> warm_start(const ObservedDataset& ds, const EmOptions& opts) {
  std::vector<int> complete;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.row_complete(i)) complete.push_back(i);
  }
  const int nc = static_cast<int>(complete.size());
  if (nc < 10 || nc <= ds.p()) return std::nullopt;

  Mat x(nc, ds.p()), y(nc, ds.r());
  for (int i = 0; i < nc; ++i) {
    x.row(i) = ds.x().row(complete[i]);
    y.row(i) = ds.y().row(complete[i]);
  }
  const MomentAccumulators acc = raw_accumulators(x, y);
  Eigen::LLT<Mat> llt(acc.a3);
  if (llt.info() != Eigen::Success) return std::nullopt;

  State s;
  s.beta = llt.solve(acc.a2.transpose()).transpose();
  Mat res = (acc.a1 - s.beta * acc.a2.transpose()) / nc;
  s.sigma = 0.5 * (res + res.transpose());
  s.mu_x = acc.a4 / nc;
  Mat sx = acc.a3 / nc - s.mu_x * s.mu_x.transpose();
  s.sigma_x = 0.5 * (sx + sx.transpose());
  if (opts.model.family == PredictorFamily::TwoPoint) {
    s.pi = std::clamp(x.col(0).mean() / opts.model.scale, 0.01, 0.99);
  }
  // Keep the cold-start covariances if the warm ones are unusable.
  Eigen::LLT<Mat> check_sigma(s.sigma);
  if (check_sigma.info() != Eigen::Success) s.sigma = Mat::Identity(ds.r(), ds.r());
  Eigen::LLT<Mat> check_sx(s.sigma_x);
  if (check_sx.info() != Eigen::Success) s.sigma_x = Mat::Identity(ds.p(), ds.p());
  return s;
}

ModelParams to_model_params(const State& s, const EmOptions& opts) {
  ModelParams mp;
  mp.beta = s.beta;
  mp.sigma = s.sigma;
  mp.mu_x = s.mu_x;
  mp.sigma_x = s.sigma_x;
  mp.pi = s.pi;
  mp.model = opts.model;
  return mp;
}

double logdet_pd(const Mat& m) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

// Expected complete-data log-likelihood Q(phi|phi), constants included,
// from the E-step run at the same phi.
double q_value_at(const State& s, const EStepResult& es, const EmOptions& opts) {
  const int n = es.acc.n_eff;
  const int r = static_cast<int>(s.sigma.rows());
  const int p = static_cast<int>(s.beta.cols());

  const double logdet_sigma = logdet_pd(s.sigma);
  if (!std::isfinite(logdet_sigma)) return -std::numeric_limits<double>::infinity();
  Eigen::LLT<Mat> llt(s.sigma);
  const Mat cross = es.acc.a2 * s.beta.transpose();
  const Mat quad_mat =
      es.acc.a1 - cross - cross.transpose() + s.beta * es.acc.a3 * s.beta.transpose();
  const double response_part = -0.5 * n * (r * kLog2Pi + logdet_sigma) -
                               0.5 * llt.solve(quad_mat).trace();

  double predictor_part = 0.0;
  if (opts.model.family == PredictorFamily::Normal) {
    const double logdet_sx = logdet_pd(s.sigma_x);
    if (!std::isfinite(logdet_sx)) return -std::numeric_limits<double>::infinity();
    Eigen::LLT<Mat> llt_x(s.sigma_x);
    const Mat cx = es.acc.a4 * s.mu_x.transpose();
    const Mat qx =
        es.acc.a3 - cx - cx.transpose() + n * s.mu_x * s.mu_x.transpose();
    predictor_part =
        -0.5 * n * (p * kLog2Pi + logdet_sx) - 0.5 * llt_x.solve(qx).trace();
  } else {
    const double sum_pi = es.sum_pi_tilde;
    predictor_part = xlogy(sum_pi, s.pi) + xlogy(n - sum_pi, 1.0 - s.pi);
  }
  return response_part + predictor_part;
}

EnvelopeBasis identity_basis(int r) {
  EnvelopeBasis b;
  b.gamma = Mat::Identity(r, r);
  b.gamma0 = Mat(r, 0);
  return b;
}

EnvelopeFit run_em(const ObservedDataset& ds, const EmOptions& opts, bool envelope) {
  const int p = ds.p();
  const int r = ds.r();
  const int n = ds.n();
  const int u = envelope ? opts.u : r;
  if (u < 0 || u > r) {
    raise(ErrorCode::InvalidArgument, "envelope dimension u must lie in [0, r]");
  }
  if (opts.model.family == PredictorFamily::TwoPoint && p != 1) {
    raise(ErrorCode::InvalidArgument, "two-point predictor model requires p = 1");
  }
  if (opts.tol <= 0.0) raise(ErrorCode::InvalidArgument, "tol must be positive");
  if (opts.max_iter < 1) raise(ErrorCode::InvalidArgument, "max_iter must be at least 1");

  const PatternTable table = group_patterns(ds);
  const bool normal_model = opts.model.family == PredictorFamily::Normal;
  const bool full_rank = u == r;

  State state = cold_start(p, r, opts);
  if (opts.warm_start) {
    if (auto warm = warm_start(ds, opts)) state = *warm;
  }

  EnvelopeFit fit;
  fit.u = u;
  fit.n = n;
  fit.rho.family = opts.model.family;
  fit.rho.scale = opts.model.scale;

  std::optional<EnvelopeBasis> prev_basis;
  MStepResult ms;
  EnvelopeBasis basis = identity_basis(r);

  for (int t = 0; t < opts.max_iter; ++t) {
    const EStepResult es = e_step(ds, to_model_params(state, opts), table);

    if (full_rank) {
      basis = identity_basis(r);
    } else {
      basis = one_d_algorithm(es.acc, u);
      // Generalized-EM guard: never accept a basis whose profiled objective
      // is worse than the previous iterate's.
      if (prev_basis) {
        const double obj_new = envelope_objective(basis.gamma, es.acc);
        const double obj_prev = envelope_objective(prev_basis->gamma, es.acc);
        if (obj_prev < obj_new) basis = *prev_basis;
      }
      prev_basis = basis;
    }

    ms = mstep_given_gamma(basis, es.acc, n);

    State next = state;
    next.beta = ms.beta;
    next.sigma = ms.sigma;
    if (normal_model) {
      next.mu_x = es.acc.a4 / n;
      Mat sx = es.acc.a3 / n - next.mu_x * next.mu_x.transpose();
      next.sigma_x = 0.5 * (sx + sx.transpose());
    } else {
      next.pi = es.sum_pi_tilde / n;
    }

    const double delta = (next.beta - state.beta).cwiseAbs().sum();
    state = next;
    fit.beta_trace_norm.push_back(delta);
    if (opts.track_loglik && normal_model) {
      const NormalJointParams jp =
          build_joint(state.beta, state.sigma, state.mu_x, state.sigma_x);
      fit.loglik_trace.push_back(observed_loglik_normal(ds, jp, table));
    }
    fit.iterations = t + 1;
    if (delta <= opts.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.beta = state.beta;
  fit.sigma = state.sigma;
  fit.sigma1 = ms.sigma1;
  fit.sigma2 = ms.sigma2;
  fit.gamma = basis.gamma;
  fit.gamma0 = basis.gamma0;
  fit.eta = ms.eta;
  fit.omega = ms.omega;
  fit.omega0 = ms.omega0;
  fit.rho.mu_x = state.mu_x;
  fit.rho.sigma_x = state.sigma_x;
  fit.rho.pi = state.pi;

  const EStepResult final_es = e_step(ds, to_model_params(state, opts), table);
  fit.q_value = q_value_at(state, final_es, opts);
  return fit;
}

}  // namespace

EnvelopeFit em_envelope_fit(const ObservedDataset& ds, const EmOptions& opts) {
  return run_em(ds, opts, /*envelope=*/true);
}

EnvelopeFit em_standard_fit(const ObservedDataset& ds, const EmOptions& opts) {
  return run_em(ds, opts, /*envelope=*/false);
}

EnvelopeFit full_data_fit(const Mat& x, const Mat& y, int u, bool envelope,
                          const EmOptions& opts) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int r = static_cast<int>(y.cols());
  if (y.rows() != n) raise(ErrorCode::ShapeMismatch, "x and y row counts differ");
  if (!envelope) u = r;
  if (u < 0 || u > r) {
    raise(ErrorCode::InvalidArgument, "envelope dimension u must lie in [0, r]");
  }
  mk::require_finite(x, "x");
  mk::require_finite(y, "y");

  const MomentAccumulators acc = raw_accumulators(x, y);
  const EnvelopeBasis basis = envelope ? one_d_algorithm(acc, u) : identity_basis(r);
  const MStepResult ms = mstep_given_gamma(basis, acc, n);

  EnvelopeFit fit;
  fit.beta = ms.beta;
  fit.sigma = ms.sigma;
  fit.sigma1 = ms.sigma1;
  fit.sigma2 = ms.sigma2;
  fit.gamma = basis.gamma;
  fit.gamma0 = basis.gamma0;
  fit.eta = ms.eta;
  fit.omega = ms.omega;
  fit.omega0 = ms.omega0;
  fit.u = u;
  fit.n = n;
  fit.iterations = 1;
  fit.converged = true;

  fit.rho.family = opts.model.family;
  fit.rho.scale = opts.model.scale;
  fit.rho.mu_x = acc.a4 / n;
  Mat sx = acc.a3 / n - fit.rho.mu_x * fit.rho.mu_x.transpose();
  fit.rho.sigma_x = 0.5 * (sx + sx.transpose());
  if (opts.model.family == PredictorFamily::TwoPoint) {
    if (p != 1) raise(ErrorCode::InvalidArgument, "two-point predictor model requires p = 1");
    fit.rho.pi = x.col(0).mean() / opts.model.scale;
  }

  State s;
  s.beta = fit.beta;
  s.sigma = fit.sigma;
  s.mu_x = fit.rho.mu_x;
  s.sigma_x = fit.rho.sigma_x;
  s.pi = fit.rho.pi;
  EStepResult es;
  es.acc = acc;
  es.sum_pi_tilde =
      opts.model.family == PredictorFamily::TwoPoint ? acc.a4(0) / opts.model.scale : 0.0;
  fit.q_value = q_value_at(s, es, opts);
  return fit;
}

EnvelopeFit complete_case_fit(const ObservedDataset& ds, const EmOptions& opts,
                              bool envelope) {
  std::vector<int> complete;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.row_complete(i)) complete.push_back(i);
  }
  const int u = envelope ? opts.u : ds.r();
  const int needed = std::max(ds.p(), u) + 1;
  if (static_cast<int>(complete.size()) < needed) {
    raise(ErrorCode::TooFewCompleteRows,
          "complete-case fit needs at least " + std::to_string(needed) +
              " complete rows, found " + std::to_string(complete.size()));
  }
  Mat x(complete.size(), ds.p()), y(complete.size(), ds.r());
  for (std::size_t i = 0; i < complete.size(); ++i) {
    x.row(i) = ds.x().row(complete[i]);
    y.row(i) = ds.y().row(complete[i]);
  }
  return full_data_fit(x, y, u, envelope, opts);
}

}  // namespace emenv
