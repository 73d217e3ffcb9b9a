#include <doctest.h>

#include <cmath>

#include "emenv/inference.hpp"
#include "emenv/simulate.hpp"
#include "support/test_helpers.hpp"

using namespace emenv;
using test::random_matrix;
using test::random_orthonormal;
using test::random_spd;
using test::random_vector;

namespace {

// Finite-difference Jacobian of h(phi) = (vec beta, vech Sigma, vec rho)
// with central differences; gamma0 co-varies with gamma so that the pair
// stays orthonormal to first order.
Mat fd_jacobian(const Mat& eta, const Mat& gamma, const Mat& gamma0, const Mat& omega,
                const Mat& omega0, int dim_rho, double h = 1e-6) {
  const int r = static_cast<int>(gamma.rows());
  const int u = static_cast<int>(gamma.cols());
  const int p = static_cast<int>(eta.cols());
  const int rows = r * p + r * (r + 1) / 2 + dim_rho;
  const int cols = u * p + r * u + u * (u + 1) / 2 + (r - u) * (r - u + 1) / 2 + dim_rho;

  auto h_of = [&](const Mat& eta_v, const Mat& gamma_v, const Mat& gamma0_v,
                  const Mat& omega_v, const Mat& omega0_v) {
    const Mat beta = gamma_v * eta_v;
    Mat sigma = gamma_v * omega_v * gamma_v.transpose();
    if (gamma0_v.cols() > 0) sigma += gamma0_v * omega0_v * gamma0_v.transpose();
    Vec out(rows);
    out.head(r * p) = mk::vec(beta);
    out.segment(r * p, r * (r + 1) / 2) = mk::vech(0.5 * (sigma + sigma.transpose()));
    out.tail(dim_rho).setZero();  // rho block handled analytically
    return out;
  };

  Mat jac = Mat::Zero(rows, cols);
  int col = 0;
  // eta entries
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < u; ++i) {
      Mat ep = eta, em = eta;
      ep(i, j) += h;
      em(i, j) -= h;
      jac.col(col++) = (h_of(ep, gamma, gamma0, omega, omega0) -
                        h_of(em, gamma, gamma0, omega, omega0)) /
                       (2.0 * h);
    }
  }
  // gamma entries, with the first-order completion update
  for (int j = 0; j < u; ++j) {
    for (int i = 0; i < r; ++i) {
      Mat dg = Mat::Zero(r, u);
      dg(i, j) = h;
      const Mat gp = gamma + dg;
      const Mat gm = gamma - dg;
      const Mat g0p = gamma0 - gamma * dg.transpose() * gamma0;
      const Mat g0m = gamma0 + gamma * dg.transpose() * gamma0;
      jac.col(col++) =
          (h_of(eta, gp, g0p, omega, omega0) - h_of(eta, gm, g0m, omega, omega0)) /
          (2.0 * h);
    }
  }
  // vech(omega)
  for (int j = 0; j < u; ++j) {
    for (int i = j; i < u; ++i) {
      Mat op = omega, om = omega;
      op(i, j) += h;
      op(j, i) = op(i, j);
      om(i, j) -= h;
      om(j, i) = om(i, j);
      jac.col(col++) = (h_of(eta, gamma, gamma0, op, omega0) -
                        h_of(eta, gamma, gamma0, om, omega0)) /
                       (2.0 * h);
    }
  }
  // vech(omega0)
  const int r0 = r - u;
  for (int j = 0; j < r0; ++j) {
    for (int i = j; i < r0; ++i) {
      Mat op = omega0, om = omega0;
      op(i, j) += h;
      op(j, i) = op(i, j);
      om(i, j) -= h;
      om(j, i) = om(i, j);
      jac.col(col++) = (h_of(eta, gamma, gamma0, omega, op) -
                        h_of(eta, gamma, gamma0, omega, om)) /
                       (2.0 * h);
    }
  }
  // rho block is the identity
  for (int k = 0; k < dim_rho; ++k) {
    jac(r * p + r * (r + 1) / 2 + k, col++) = 1.0;
  }
  return jac;
}

}  // namespace

TEST_CASE("construct_g block structure at u = r") {
  Rng rng = make_rng(91);
  const int r = 3, p = 2;
  const Mat gamma = random_orthonormal(rng, r, r);
  const Mat gamma0 = Mat(r, 0);
  const Mat eta = random_matrix(rng, r, p);
  const Mat omega = random_spd(rng, r);
  const Mat omega0 = Mat(0, 0);
  const GradientMatrixG g = construct_g(eta, gamma, gamma0, omega, omega0, 2);

  const Mat block11 = g.g.topLeftCorner(r * p, r * p);
  CHECK((block11 - mk::kron(Mat::Identity(p, p), gamma)).cwiseAbs().maxCoeff() < 1e-12);
  // no omega0 columns
  CHECK(g.g.cols() == r * p + r * r + r * (r + 1) / 2 + 0 + 2);
}

TEST_CASE("construct_g: eta = 0 zeroes the beta-gamma block") {
  Rng rng = make_rng(92);
  const int r = 3, u = 1, p = 2;
  const Mat gamma = random_orthonormal(rng, r, u);
  const Mat gamma0 = mk::orth_complete(gamma);
  const GradientMatrixG g = construct_g(Mat::Zero(u, p), gamma, gamma0,
                                        random_spd(rng, u), random_spd(rng, r - u), 1);
  const Mat block12 = g.g.block(0, u * p, r * p, r * u);
  CHECK(block12.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("construct_g matches the finite-difference Jacobian") {
  Rng rng = make_rng(93);
  struct Case {
    int r, u, p, dim_rho;
  };
  for (const Case c : {Case{2, 1, 1, 1}, Case{3, 1, 2, 2}, Case{4, 2, 2, 3}}) {
    const Mat gamma = random_orthonormal(rng, c.r, c.u);
    const Mat gamma0 = mk::orth_complete(gamma);
    const Mat eta = random_matrix(rng, c.u, c.p);
    const Mat omega = random_spd(rng, c.u);
    const Mat omega0 = random_spd(rng, c.r - c.u);

    const GradientMatrixG g = construct_g(eta, gamma, gamma0, omega, omega0, c.dim_rho);
    const Mat jac = fd_jacobian(eta, gamma, gamma0, omega, omega0, c.dim_rho);
    REQUIRE(g.g.rows() == jac.rows());
    REQUIRE(g.g.cols() == jac.cols());
    CHECK((g.g - jac).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("project_covariance") {
  Rng rng = make_rng(94);

  // square invertible G: projection is the identity map
  {
    GradientMatrixG g;
    g.g = random_spd(rng, 4);
    const Mat v = random_spd(rng, 4);
    CHECK((project_covariance(g, v) - v).cwiseAbs().maxCoeff() <
          1e-8 * v.cwiseAbs().maxCoeff());
  }

  // single column: rank-1 result
  {
    GradientMatrixG g;
    g.g = random_matrix(rng, 4, 1);
    const Mat v = random_spd(rng, 4);
    const Mat env = project_covariance(g, v);
    const mk::SymEig e = mk::eig_sym(env);
    CHECK(e.values(0) > 1e-10);
    for (int i = 1; i < 4; ++i) CHECK(std::abs(e.values(i)) < 1e-8 * e.values(0));
  }

  // efficiency gain: V_std - V_env is PSD
  for (int rep = 0; rep < 25; ++rep) {
    GradientMatrixG g;
    g.g = random_matrix(rng, 5, 3);
    const Mat v = random_spd(rng, 5);
    const Mat env = project_covariance(g, v);
    const mk::SymEig diff = mk::eig_sym(v - env);
    CHECK(diff.values(diff.values.size() - 1) > -1e-8 * diff.values(0));
  }

  // depends only on span(G)
  {
    GradientMatrixG g1, g2;
    g1.g = random_matrix(rng, 5, 2);
    g2.g = g1.g * random_spd(rng, 2);
    const Mat v = random_spd(rng, 5);
    CHECK((project_covariance(g1, v) - project_covariance(g2, v)).cwiseAbs().maxCoeff() <
          1e-7 * v.cwiseAbs().maxCoeff());
  }

  // not PD input
  {
    GradientMatrixG g;
    g.g = random_matrix(rng, 3, 2);
    CHECK_THROWS_WITH_AS((void)project_covariance(g, Mat(-Mat::Identity(3, 3))),
                         doctest::Contains("NotPD"), Error);
  }
}

TEST_CASE("bootstrap standard errors") {
  Rng rng = make_rng(95);

  // exact linear relation, no noise: all SEs are ~0
  {
    const int n = 40, p = 1, r = 2;
    const Mat x = random_matrix(rng, n, p, 0.5, 2.0);
    Mat beta(r, p);
    beta << 1.5, -0.5;
    const Mat y = x * beta.transpose();
    const ObservedDataset ds(x, y, ObservedDataset::BoolMat::Constant(n, p, true),
                             ObservedDataset::BoolMat::Constant(n, r, true));
    EmOptions opts;
    opts.u = r;
    const BootstrapResult res =
        bootstrap_se(ds, opts, EstimatorKind::EmStandard, 30, 5);
    CHECK(res.se.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(res.failures == 0);
  }

  // determinism
  {
    Rng data_rng = make_rng(96);
    const auto ds = test::random_masked_dataset(data_rng, 60, 1, 2, 0.15);
    EmOptions opts;
    opts.u = 1;
    const BootstrapResult a = bootstrap_se(ds, opts, EstimatorKind::EmEnvelope, 20, 11);
    const BootstrapResult b = bootstrap_se(ds, opts, EstimatorKind::EmEnvelope, 20, 11);
    CHECK((a.se - b.se).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.ci_lower - b.ci_lower).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("bootstrap SE tracks the Monte-Carlo sampling distribution") {
  // Fresh-dataset Monte-Carlo SD is the oracle; the bootstrap SE of one
  // dataset should land within 30% of it entrywise-averaged.
  ScenarioSpec spec;
  spec.n = 150;
  spec.r = 3;
  spec.p = 1;
  spec.u = 1;
  spec.omega_scale = 0.5;
  spec.omega0_scale = 20.0;
  spec.seed = 31;

  const ScenarioParams params = gen_parameters(spec, spec.seed);
  EmOptions opts;
  opts.u = spec.u;
  opts.track_loglik = false;

  const int mc = 200;
  std::vector<Mat> betas;
  for (int k = 0; k < mc; ++k) {
    const FullData data = gen_full_data(params, spec, derive_seed(spec.seed, 2 * k + 1));
    const MissingnessMask mask =
        gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 2 * k + 2));
    const ObservedDataset ds(data.x, data.y, mask.x_observed, mask.y_observed);
    betas.push_back(em_envelope_fit(ds, opts).beta);
  }
  Mat mean = Mat::Zero(spec.r, spec.p);
  for (const Mat& b : betas) mean += b;
  mean /= mc;
  Mat mc_sd = Mat::Zero(spec.r, spec.p);
  for (const Mat& b : betas) mc_sd += (b - mean).cwiseProduct(b - mean);
  mc_sd = (mc_sd / (mc - 1)).cwiseSqrt();

  const FullData data = gen_full_data(params, spec, derive_seed(spec.seed, 777));
  const MissingnessMask mask =
      gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 778));
  const ObservedDataset ds(data.x, data.y, mask.x_observed, mask.y_observed);
  const BootstrapResult res =
      bootstrap_se(ds, opts, EstimatorKind::EmEnvelope, 200, 2024);

  const double ratio = res.se.sum() / mc_sd.sum();
  CHECK(ratio > 0.7);
  CHECK(ratio < 1.3);
}

TEST_CASE("envelope bootstrap SE beats the standard EM SE under strong immaterial noise") {
  ScenarioSpec spec;
  spec.n = 150;
  spec.r = 2;
  spec.p = 1;
  spec.u = 1;
  spec.omega_scale = 0.05;
  spec.omega0_scale = 50.0;
  spec.seed = 57;
  const ScenarioParams params = gen_parameters(spec, spec.seed);
  const FullData data = gen_full_data(params, spec, derive_seed(spec.seed, 1));
  const MissingnessMask mask =
      gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 2));
  const ObservedDataset ds(data.x, data.y, mask.x_observed, mask.y_observed);

  EmOptions opts;
  opts.u = spec.u;
  opts.track_loglik = false;
  const BootstrapResult env = bootstrap_se(ds, opts, EstimatorKind::EmEnvelope, 100, 3);
  const BootstrapResult std_res =
      bootstrap_se(ds, opts, EstimatorKind::EmStandard, 100, 3);
  CHECK(env.se.sum() < std_res.se.sum());
}
