#include <doctest.h>

#include <cmath>

#include "emenv/selection.hpp"
#include "emenv/simulate.hpp"
#include "support/test_helpers.hpp"

using namespace emenv;
using test::random_matrix;
using test::random_orthonormal;

TEST_CASE("bic_q arithmetic") {
  EnvelopeFit fit;
  fit.q_value = -100.0;
  CHECK(bic_q(fit, 100, 2, 1) == doctest::Approx(200.0 + 2.0 * std::log(100.0)));
  CHECK(bic_q(fit, 100, 2, 0) == doctest::Approx(200.0));  // zero penalty at u = 0
}

TEST_CASE("penalty is increasing in u at fixed Q") {
  EnvelopeFit fit;
  fit.q_value = -50.0;
  double prev = bic_q(fit, 200, 3, 0);
  for (int u = 1; u <= 5; ++u) {
    const double cur = bic_q(fit, 200, 3, u);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("on complete data Q equals the full log-likelihood") {
  Rng rng = make_rng(81);
  const int n = 40, p = 2, r = 3;
  const Mat x = random_matrix(rng, n, p);
  const Mat y = random_matrix(rng, n, r);
  const ObservedDataset ds(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                           ObservedDataset::BoolMat::Constant(n, r, true));
  EmOptions opts;
  opts.u = r;
  const EnvelopeFit fit = em_standard_fit(ds, opts);
  const NormalJointParams jp =
      build_joint(fit.beta, fit.sigma, fit.rho.mu_x, fit.rho.sigma_x);
  CHECK(fit.q_value == doctest::Approx(observed_loglik_normal(ds, jp)).epsilon(1e-8));
}

TEST_CASE("BIC selects the exact dimension of a noiseless construction") {
  Rng rng = make_rng(82);
  const int n = 80, p = 2, r = 4, u_true = 2;
  const Mat gamma = random_orthonormal(rng, r, u_true);
  const Mat gamma0 = mk::orth_complete(gamma);
  const Mat eta = random_matrix(rng, u_true, p, -2.0, 2.0);
  const Mat beta = gamma * eta;

  Mat x(n, p), y(n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = runif(rng, -2.0, 2.0);
    Vec e1(u_true), e2(r - u_true);
    for (int k = 0; k < u_true; ++k) e1(k) = 0.05 * rnorm(rng);
    for (int k = 0; k < r - u_true; ++k) e2(k) = 8.0 * rnorm(rng);
    y.row(i) =
        (beta * x.row(i).transpose() + gamma * e1 + gamma0 * e2).transpose();
  }
  const ObservedDataset ds(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                           ObservedDataset::BoolMat::Constant(n, r, true));
  EmOptions opts;
  const SelectionReport report = select_u_bic(ds, opts);
  CHECK(report.chosen_u == u_true);
  CHECK(static_cast<int>(report.bic_values.size()) == r + 1);
}

TEST_CASE("bootstrap selection is deterministic and matches BIC on separated spectra") {
  ScenarioSpec spec;
  spec.n = 200;
  spec.r = 5;
  spec.p = 2;
  spec.u = 2;
  spec.omega_scale = 0.1;
  spec.omega0_scale = 1000.0;
  spec.seed = 99;
  const ScenarioParams params = gen_parameters(spec, spec.seed);
  const FullData data = gen_full_data(params, spec, derive_seed(spec.seed, 1));
  const MissingnessMask mask =
      gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 2));
  const ObservedDataset ds(data.x, data.y, mask.x_observed, mask.y_observed);

  EmOptions opts;
  const SelectionReport boot1 = select_u_bootstrap(ds, opts, 10, 0.95, 4242);
  const SelectionReport boot2 = select_u_bootstrap(ds, opts, 10, 0.95, 4242);
  CHECK(boot1.chosen_u == boot2.chosen_u);
  REQUIRE(boot1.mean_q2.size() == boot2.mean_q2.size());
  for (std::size_t i = 0; i < boot1.mean_q2.size(); ++i) {
    CHECK(boot1.mean_q2[i] == boot2.mean_q2[i]);
  }

  const SelectionReport bic = select_u_bic(ds, opts);
  CHECK(boot1.chosen_u == bic.chosen_u);
  CHECK(bic.chosen_u == spec.u);
}

TEST_CASE("bootstrap resample indices derive from the master seed") {
  const auto a = bootstrap_indices(50, 7, 3);
  const auto b = bootstrap_indices(50, 7, 3);
  const auto c = bootstrap_indices(50, 7, 4);
  CHECK(a == b);
  CHECK(a != c);
  for (int idx : a) {
    CHECK(idx >= 0);
    CHECK(idx < 50);
  }
}
