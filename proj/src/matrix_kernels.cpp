#include "emenv/matrix_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace emenv::mk {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    raise(ErrorCode::InvalidArgument, std::string(what) + " contains non-finite entries");
  }
}

bool is_symmetric(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

Mat symmetrize(const Mat& m, double tol) {
  if (m.rows() != m.cols()) {
    raise(ErrorCode::NotSymmetric, "matrix is not square");
  }
  if (!is_symmetric(m, tol)) {
    raise(ErrorCode::NotSymmetric, "asymmetry exceeds tolerance");
  }
  return 0.5 * (m + m.transpose());
}

Vec vec(const Mat& m) {
  Vec out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out(k++) = m(i, j);
    }
  }
  return out;
}

Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    raise(ErrorCode::ShapeMismatch, "unvec length does not match target shape");
  }
  Mat out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      out(i, j) = v(k++);
    }
  }
  return out;
}

Vec vech(const Mat& m) {
  const Mat s = symmetrize(m);
  const Eigen::Index r = s.rows();
  Vec out(r * (r + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j; i < r; ++i) {
      out(k++) = s(i, j);
    }
  }
  return out;
}

Mat contraction_matrix(int r) {
  if (r < 1) raise(ErrorCode::InvalidArgument, "contraction_matrix requires r >= 1");
  Mat c = Mat::Zero(r * (r + 1) / 2, r * r);
  Eigen::Index k = 0;
  for (int j = 0; j < r; ++j) {
    for (int i = j; i < r; ++i) {
      if (i == j) {
        c(k, j * r + i) = 1.0;
      } else {
        c(k, j * r + i) = 0.5;
        c(k, i * r + j) = 0.5;
      }
      ++k;
    }
  }
  return c;
}

Mat expansion_matrix(int r) {
  if (r < 1) raise(ErrorCode::InvalidArgument, "expansion_matrix requires r >= 1");
  Mat e = Mat::Zero(r * r, r * (r + 1) / 2);
  Eigen::Index k = 0;
  for (int j = 0; j < r; ++j) {
    for (int i = j; i < r; ++i) {
      e(j * r + i, k) = 1.0;
      e(i * r + j, k) = 1.0;
      ++k;
    }
  }
  return e;
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

SymEig eig_sym(const Mat& m) {
  const Mat s = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Mat> solver(s);
  if (solver.info() != Eigen::Success) {
    raise(ErrorCode::InvalidArgument, "symmetric eigendecomposition failed");
  }
  const Eigen::Index r = s.rows();
  SymEig out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  // Deterministic eigenvector signs: largest-magnitude entry positive.
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index imax = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, j) < 0.0) out.vectors.col(j) = -out.vectors.col(j);
  }
  return out;
}

double logdet0(const Mat& m, double rel_tol) {
  const SymEig e = eig_sym(m);
  if (e.values.size() == 0) return 0.0;
  const double lmax = e.values(0);
  if (lmax <= 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) > rel_tol * lmax) acc += std::log(e.values(i));
  }
  return acc;
}

double det0(const Mat& m, double rel_tol) {
  const SymEig e = eig_sym(m);
  if (e.values.size() == 0) return 1.0;
  const double lmax = e.values(0);
  if (lmax <= 0.0) return 1.0;
  double prod = 1.0;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) > rel_tol * lmax) prod *= e.values(i);
  }
  return prod;
}

Mat pinv(const Mat& m) {
  if (m.size() == 0) return Mat(m.cols(), m.rows());
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff =
      sv.size() > 0 ? sv(0) * std::max(m.rows(), m.cols()) * 1e-14 : 0.0;
  Vec inv = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

// Thin orthonormal factor of a full-column-rank matrix (no sign fix).
Mat thin_q(const Mat& m) {
  const Eigen::Index r = m.rows();
  const Eigen::Index k = m.cols();
  if (k == 0) return Mat(r, 0);
  Eigen::ColPivHouseholderQR<Mat> rank_check(m);
  rank_check.setThreshold(1e-12);
  if (rank_check.rank() < k) {
    raise(ErrorCode::RankDeficient, "matrix does not have full column rank");
  }
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(r, k);
  // Undo Householder sign flips so columns track the input columns.
  const Mat rfac = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (rfac(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

void fix_column_signs(Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double scale = m.col(j).cwiseAbs().maxCoeff();
    if (scale <= 0.0) continue;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) > 1e-12 * scale) {
        if (m(i, j) < 0.0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

}  // namespace

Mat proj(const Mat& basis) {
  require_finite(basis, "projection basis");
  const Mat q = thin_q(basis);
  if (q.cols() == 0) return Mat::Zero(basis.rows(), basis.rows());
  return q * q.transpose();
}

Mat proj_complement(const Mat& basis) {
  return Mat::Identity(basis.rows(), basis.rows()) - proj(basis);
}

Mat orth_complete(const Mat& gamma) {
  const Eigen::Index r = gamma.rows();
  const Eigen::Index u = gamma.cols();
  if (u > r) raise(ErrorCode::ShapeMismatch, "gamma has more columns than rows");
  if (u > 0) {
    const Mat gtg = gamma.transpose() * gamma;
    if ((gtg - Mat::Identity(u, u)).cwiseAbs().maxCoeff() > 1e-8) {
      raise(ErrorCode::NotOrthonormal, "gamma is not semi-orthonormal");
    }
  }
  if (u == r) return Mat(r, 0);
  if (u == 0) return Mat::Identity(r, r);
  Eigen::HouseholderQR<Mat> qr(gamma);
  Mat qfull = qr.householderQ();
  Mat gamma0 = qfull.rightCols(r - u);
  // Project out residual overlap from roundoff, then re-orthonormalize.
  gamma0 = gamma0 - gamma * (gamma.transpose() * gamma0);
  gamma0 = qr_orthonormalize(gamma0);
  return gamma0;
}

Mat qr_orthonormalize(const Mat& m) {
  require_finite(m, "qr_orthonormalize input");
  Mat q = thin_q(m);
  fix_column_signs(q);
  return q;
}

double q2_corr(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    raise(ErrorCode::ShapeMismatch, "q2_corr arguments differ in shape");
  }
  const Eigen::Index u = a.cols();
  if (u == 0) return 1.0;
  const Mat ii = Mat::Identity(u, u);
  if ((a.transpose() * a - ii).cwiseAbs().maxCoeff() > 1e-8 ||
      (b.transpose() * b - ii).cwiseAbs().maxCoeff() > 1e-8) {
    raise(ErrorCode::NotOrthonormal, "q2_corr arguments must be semi-orthonormal");
  }
  const Mat bta = b.transpose() * a;
  const double q2 = (bta * bta.transpose()).determinant();
  return std::clamp(q2, 0.0, 1.0);
}

}  // namespace emenv::mk
