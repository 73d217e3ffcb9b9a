#include <doctest.h>

#include <cmath>

#include "emenv/em.hpp"
#include "emenv/simulate.hpp"
#include "support/test_helpers.hpp"

using namespace emenv;
using test::random_masked_dataset;
using test::random_matrix;
using test::random_orthonormal;
using test::random_spd;

TEST_CASE("complete data, u=r: EM lands on the one-shot MLE") {
  Rng rng = make_rng(71);
  const int n = 40, p = 2, r = 3;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = random_matrix(rng, n, r);
  const ObservedDataset ds(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                           ObservedDataset::BoolMat::Constant(n, r, true));
  EmOptions opts;
  opts.u = r;
  const EnvelopeFit fit = em_envelope_fit(ds, opts);
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);
  const Mat beta_mle =
      (x.transpose() * x).llt().solve(x.transpose() * y).transpose();
  CHECK((fit.beta - beta_mle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("u=r envelope fit equals the standard EM on masked data") {
  Rng rng = make_rng(72);
  for (int rep = 0; rep < 5; ++rep) {
    const auto ds = random_masked_dataset(rng, 60, 2, 3, 0.2);
    EmOptions opts;
    opts.u = ds.r();
    const EnvelopeFit env = em_envelope_fit(ds, opts);
    const EnvelopeFit std_fit = em_standard_fit(ds, opts);
    CHECK((env.beta - std_fit.beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((env.sigma - std_fit.sigma).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((env.rho.mu_x - std_fit.rho.mu_x).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((env.rho.sigma_x - std_fit.rho.sigma_x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("observed log-likelihood trace is non-decreasing") {
  Rng rng = make_rng(73);
  const auto small = random_masked_dataset(rng, 50, 1, 2, 0.25);
  EmOptions opts;
  opts.u = 1;
  const EnvelopeFit env = em_envelope_fit(small, opts);
  REQUIRE(env.loglik_trace.size() >= 2);
  for (std::size_t t = 1; t < env.loglik_trace.size(); ++t) {
    CHECK(env.loglik_trace[t] >= env.loglik_trace[t - 1] - 1e-8);
  }
  const EnvelopeFit std_fit = em_standard_fit(small, opts);
  for (std::size_t t = 1; t < std_fit.loglik_trace.size(); ++t) {
    CHECK(std_fit.loglik_trace[t] >= std_fit.loglik_trace[t - 1] - 1e-8);
  }
}

TEST_CASE("full-data fit: u=r is ordinary least squares") {
  Rng rng = make_rng(74);
  const int n = 35, p = 2, r = 3;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = random_matrix(rng, n, r);
  const EnvelopeFit fit = full_data_fit(x, y, r, false);
  const Mat beta_ols = (x.transpose() * x).llt().solve(x.transpose() * y).transpose();
  CHECK((fit.beta - beta_ols).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("full-data envelope recovers an exact low-rank signal") {
  Rng rng = make_rng(75);
  const int n = 60, p = 2, r = 5, u = 1;
  const Mat gamma = random_orthonormal(rng, r, u);
  const Mat eta = random_matrix(rng, u, p, -2.0, 2.0);
  const Mat beta = gamma * eta;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = x * beta.transpose();  // zero noise
  const EnvelopeFit fit = full_data_fit(x, y, u, true);
  CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("complete-case fit") {
  Rng rng = make_rng(76);
  const int n = 30, p = 2, r = 3;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = random_matrix(rng, n, r);
  const ObservedDataset complete(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                                 ObservedDataset::BoolMat::Constant(n, r, true));
  EmOptions opts;
  opts.u = 2;
  const EnvelopeFit cc = complete_case_fit(complete, opts, true);
  const EnvelopeFit full = full_data_fit(x, y, 2, true);
  CHECK((cc.beta - full.beta).cwiseAbs().maxCoeff() == 0.0);

  // every row incomplete -> TooFewCompleteRows (no column fully missing)
  ObservedDataset::BoolMat yo = ObservedDataset::BoolMat::Constant(n, r, true);
  for (int i = 0; i < n; ++i) yo(i, i % 2) = false;
  const ObservedDataset broken(x, y, ObservedDataset::BoolMat::Constant(n, p, true), yo);
  CHECK_THROWS_WITH_AS((void)complete_case_fit(broken, opts, true),
                       doctest::Contains("TooFewCompleteRows"), Error);
}

TEST_CASE("all four paths agree on complete data") {
  Rng rng = make_rng(77);
  const int n = 45, p = 2, r = 3, u = 2;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = random_matrix(rng, n, r);
  const ObservedDataset ds(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                           ObservedDataset::BoolMat::Constant(n, r, true));
  EmOptions opts;
  opts.u = u;
  const Mat b1 = em_envelope_fit(ds, opts).beta;
  const Mat b2 = complete_case_fit(ds, opts, true).beta;
  const Mat b3 = full_data_fit(x, y, u, true).beta;
  CHECK((b1 - b2).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((b2 - b3).cwiseAbs().maxCoeff() < 1e-8);

  EmOptions std_opts;
  std_opts.u = r;
  const Mat s1 = em_standard_fit(ds, std_opts).beta;
  const Mat s2 = complete_case_fit(ds, std_opts, false).beta;
  const Mat s3 = full_data_fit(x, y, r, false).beta;
  CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((s2 - s3).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fits are deterministic") {
  Rng rng = make_rng(78);
  const auto ds = random_masked_dataset(rng, 50, 2, 3, 0.2);
  EmOptions opts;
  opts.u = 2;
  const EnvelopeFit a = em_envelope_fit(ds, opts);
  const EnvelopeFit b = em_envelope_fit(ds, opts);
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.iterations == b.iterations);
  CHECK(a.q_value == b.q_value);
}

TEST_CASE("two-point predictor EM") {
  Rng rng = make_rng(79);
  const int n = 150, r = 3;
  const double c = 2.0;
  const double pi_true = 0.6;
  const Mat beta_true = random_matrix(rng, r, 1);
  const Mat chol = random_spd(rng, r, 0.2).llt().matrixL();

  Mat x(n, 1), y(n, r);
  ObservedDataset::BoolMat xo(n, 1), yo = ObservedDataset::BoolMat::Constant(n, r, true);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rbernoulli(rng, pi_true) ? c : 0.0;
    Vec eps(r);
    for (int k = 0; k < r; ++k) eps(k) = rnorm(rng);
    y.row(i) = (beta_true * x(i, 0) + chol * eps).transpose();
    xo(i, 0) = runif(rng) > 0.3;  // 30% of predictors missing
    if (i < 5) xo(i, 0) = true;
  }
  const ObservedDataset ds(x, y, xo, yo);

  EmOptions opts;
  opts.model.family = PredictorFamily::TwoPoint;
  opts.model.scale = c;
  opts.u = r;
  const EnvelopeFit fit = em_standard_fit(ds, opts);
  CHECK(fit.converged);
  CHECK(fit.rho.pi > 0.4);
  CHECK(fit.rho.pi < 0.8);
  CHECK((fit.beta - beta_true).cwiseAbs().maxCoeff() < 0.5);

  // envelope path runs too
  EmOptions env_opts = opts;
  env_opts.u = 1;
  const EnvelopeFit env = em_envelope_fit(ds, env_opts);
  CHECK(env.converged);
}

TEST_CASE("paper-scale single replicate shows the envelope gain") {
  // One replicate of the n=500, r=20, p=5, u=3 design with the strongly
  // separated spectrum; the envelope EM should beat the standard EM by well
  // over an order of magnitude on this draw.
  ScenarioSpec spec;
  spec.n = 500;
  spec.r = 20;
  spec.p = 5;
  spec.u = 3;
  spec.omega_scale = 0.1;
  spec.omega0_scale = 1000.0;
  spec.reps = 1;
  spec.seed = 20240501;

  const ScenarioParams params = gen_parameters(spec, spec.seed);
  const FullData data = gen_full_data(params, spec, derive_seed(spec.seed, 1));
  const MissingnessMask mask =
      gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 2));
  const ObservedDataset ds(data.x, data.y, mask.x_observed, mask.y_observed);

  EmOptions opts;
  opts.u = spec.u;
  opts.track_loglik = false;
  const double denom = spec.r * spec.p;
  const double mse_env =
      (em_envelope_fit(ds, opts).beta - params.beta).squaredNorm() / denom;
  const double mse_std =
      (em_standard_fit(ds, opts).beta - params.beta).squaredNorm() / denom;
  CHECK(mse_env < mse_std / 10.0);
  CHECK(mse_env < 1e-3);
}
