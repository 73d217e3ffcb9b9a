#include "emenv/envelope.hpp"

#include <cmath>
#include <limits>

namespace emenv {

namespace {

// A2 A3^{-1} A2^T with a solvability check on A3.
Mat regression_part(const MomentAccumulators& acc) {
  Eigen::LLT<Mat> llt(mk::symmetrize(acc.a3, 1e-6 * (1.0 + acc.a3.cwiseAbs().maxCoeff())));
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::SingularA3, "predictor second-moment matrix is singular");
  }
  return acc.a2 * llt.solve(acc.a2.transpose());
}

Mat residual_part(const MomentAccumulators& acc) {
  Mat m = acc.a1 - regression_part(acc);
  return 0.5 * (m + m.transpose());
}

// Quadratic forms smaller than this fraction of the problem scale are
// roundoff zeros of a PSD matrix; clamping keeps their log comparable so
// that the second objective term decides between them.
double quad_floor(const Mat& m, const Mat& n_inv) {
  return 1e-14 * (m.cwiseAbs().maxCoeff() + n_inv.cwiseAbs().maxCoeff()) + 1e-300;
}

double stepwise_objective(const Vec& w, const Mat& m, const Mat& n_inv, double floor) {
  const double qm = w.dot(m * w);
  const double qn = w.dot(n_inv * w);
  return std::log(std::max(qm, floor)) + std::log(std::max(qn, floor));
}

// Projected gradient descent on the unit sphere with backtracking.
Vec refine_direction(Vec w, const Mat& m, const Mat& n_inv) {
  constexpr int kMaxIter = 200;
  constexpr double kDecreaseTol = 1e-10;
  const double floor = quad_floor(m, n_inv);
  double value = stepwise_objective(w, m, n_inv, floor);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const double qm = std::max(w.dot(m * w), floor);
    const double qn = std::max(w.dot(n_inv * w), floor);
    Vec grad = 2.0 * (m * w) / qm + 2.0 * (n_inv * w) / qn;
    Vec pg = grad - w.dot(grad) * w;
    const double pg_norm2 = pg.squaredNorm();
    if (pg_norm2 <= 1e-24) break;

    double step = 1.0 / (1.0 + std::sqrt(pg_norm2));
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      Vec cand = (w - step * pg).normalized();
      const double cand_value = stepwise_objective(cand, m, n_inv, floor);
      if (cand_value < value - 1e-4 * step * pg_norm2) {
        if (value - cand_value < kDecreaseTol) {
          return cand;
        }
        w = cand;
        value = cand_value;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return w;
}

Vec solve_direction(const Mat& m, const Mat& mu_sum) {
  const int d = static_cast<int>(m.rows());
  if (d == 1) return Vec::Ones(1);

  Eigen::LLT<Mat> llt(mu_sum);
  if (llt.info() != Eigen::Success) {
    // one-shot ridge, mirroring the observed-block policy
    Mat repaired = mu_sum;
    repaired.diagonal().array() += 1e-10 * std::max(mu_sum.trace() / d, 1e-100);
    llt.compute(repaired);
    if (llt.info() != Eigen::Success) {
      raise(ErrorCode::SingularMkPlusUk, "M_k + U_k is singular in the 1-D step");
    }
  }
  const Mat n_inv = llt.solve(Mat::Identity(d, d));

  const mk::SymEig em = mk::eig_sym(m);
  const mk::SymEig en = mk::eig_sym(0.5 * (n_inv + n_inv.transpose()));

  Vec best;
  const double floor = quad_floor(m, n_inv);
  double best_value = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec& cand) {
    const double value = stepwise_objective(cand, m, n_inv, floor);
    if (value < best_value) {
      best_value = value;
      best = cand;
    }
  };
  for (int j = 0; j < d; ++j) consider(em.vectors.col(j));
  for (int j = 0; j < d; ++j) consider(en.vectors.col(j));

  return refine_direction(best, m, n_inv);
}

}  // namespace

double envelope_objective(const Mat& gamma, const MomentAccumulators& acc) {
  const int r = static_cast<int>(acc.a1.rows());
  if (gamma.rows() != r) {
    raise(ErrorCode::ShapeMismatch, "gamma row count does not match accumulators");
  }
  const Mat p = gamma.cols() > 0 ? Mat(gamma * gamma.transpose()) : Mat(Mat::Zero(r, r));
  const Mat q = Mat::Identity(r, r) - p;
  const Mat inner = p * residual_part(acc) * p + q * acc.a1 * q;
  return mk::logdet0(0.5 * (inner + inner.transpose()));
}

EnvelopeBasis one_d_algorithm(const MomentAccumulators& acc, int u) {
  const int r = static_cast<int>(acc.a1.rows());
  if (u < 0 || u > r) {
    raise(ErrorCode::InvalidArgument, "envelope dimension u must lie in [0, r]");
  }

  EnvelopeBasis basis;
  if (u == 0) {
    basis.gamma = Mat(r, 0);
    basis.gamma0 = Mat::Identity(r, r);
    return basis;
  }

  const Mat m_res = residual_part(acc);
  const Mat reg = 0.5 * ((acc.a1 - m_res) + (acc.a1 - m_res).transpose());

  Mat g(r, 0);
  for (int k = 0; k < u; ++k) {
    const Mat g0 = mk::orth_complete(g);
    const Mat mk_mat = g0.transpose() * m_res * g0;
    const Mat uk_mat = g0.transpose() * reg * g0;
    const Vec w = solve_direction(0.5 * (mk_mat + mk_mat.transpose()),
                                  0.5 * ((mk_mat + uk_mat) + (mk_mat + uk_mat).transpose()));
    Mat grown(r, k + 1);
    if (k > 0) grown.leftCols(k) = g;
    grown.col(k) = g0 * w;
    g = mk::qr_orthonormalize(grown);
  }

  basis.gamma = mk::qr_orthonormalize(g);
  basis.gamma0 = mk::orth_complete(basis.gamma);
  return basis;
}

MStepResult mstep_given_gamma(const EnvelopeBasis& basis, const MomentAccumulators& acc,
                              int n) {
  const int r = basis.r();
  const int u = basis.u();
  if (acc.a1.rows() != r) {
    raise(ErrorCode::ShapeMismatch, "basis and accumulators disagree on r");
  }
  if (n <= 0) raise(ErrorCode::InvalidArgument, "mstep requires n > 0");

  const Mat m_res = residual_part(acc);
  const Mat p = u > 0 ? Mat(basis.gamma * basis.gamma.transpose()) : Mat(Mat::Zero(r, r));
  const Mat q = Mat::Identity(r, r) - p;

  MStepResult ms;
  ms.sigma1 = p * m_res * p / n;
  ms.sigma1 = 0.5 * (ms.sigma1 + ms.sigma1.transpose());
  ms.sigma2 = q * acc.a1 * q / n;
  ms.sigma2 = 0.5 * (ms.sigma2 + ms.sigma2.transpose());
  ms.sigma = ms.sigma1 + ms.sigma2;

  // beta = P_{sigma1} bhat_std; span(sigma1) = span(gamma) when sigma1 has
  // rank u, and is contained in it always, so Q_gamma beta = 0 holds.
  Eigen::LLT<Mat> llt(mk::symmetrize(acc.a3, 1e-6 * (1.0 + acc.a3.cwiseAbs().maxCoeff())));
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::SingularA3, "predictor second-moment matrix is singular");
  }
  // span(sigma1) = span(gamma) whenever sigma1 has full rank u; projecting
  // onto span(gamma) keeps that case identical and still recovers beta when
  // the residual part degenerates to zero (exact low-rank data).
  const Mat beta_std = (llt.solve(acc.a2.transpose())).transpose();
  if (u == 0) {
    ms.beta = Mat::Zero(r, acc.a3.rows());
  } else if (u == r) {
    ms.beta = beta_std;
  } else {
    ms.beta = basis.gamma * (basis.gamma.transpose() * beta_std);
  }

  ms.eta = basis.gamma.transpose() * ms.beta;
  ms.omega = basis.gamma.transpose() * ms.sigma1 * basis.gamma;
  ms.omega = 0.5 * (ms.omega + ms.omega.transpose());
  ms.omega0 = basis.gamma0.transpose() * ms.sigma2 * basis.gamma0;
  ms.omega0 = 0.5 * (ms.omega0 + ms.omega0.transpose());
  return ms;
}

}  // namespace emenv
