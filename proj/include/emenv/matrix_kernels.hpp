#pragma once

#include <Eigen/Dense>

#include "emenv/errors.hpp"

namespace emenv {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace mk {

// Absolute entrywise tolerance for symmetry checks; inputs within it are
// symmetrized as (A + A^T)/2 before decomposition.
inline constexpr double kSymTol = 1e-10;

// Relative eigenvalue threshold separating "zero" from "nonzero".
inline constexpr double kRankRelTol = 1e-10;

void require_finite(const Mat& m, const char* what);

bool is_symmetric(const Mat& m, double tol = kSymTol);

// Returns (A + A^T)/2; raises NotSymmetric if the asymmetry exceeds `tol`.
Mat symmetrize(const Mat& m, double tol = kSymTol);

// Column-stacking vectorization and its inverse.
Vec vec(const Mat& m);
Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols);

// Stacks the on-or-below-diagonal entries of a symmetric matrix by column.
Vec vech(const Mat& m);

// C_r (r(r+1)/2 x r^2) and E_r (r^2 x r(r+1)/2) with vech(A) = C_r vec(A)
// and vec(A) = E_r vech(A) for symmetric A.  C_r is the Moore-Penrose
// inverse of E_r (off-diagonal rows average the two mirrored entries), so
// C_r K_{rr} = C_r, which the covariance gradient algebra relies on.
Mat contraction_matrix(int r);
Mat expansion_matrix(int r);

Mat kron(const Mat& a, const Mat& b);

// Eigendecomposition of a (near-)symmetric matrix, eigenvalues descending.
struct SymEig {
  Vec values;
  Mat vectors;
};
SymEig eig_sym(const Mat& m);

// Product of eigenvalues exceeding rel_tol * lambda_max; 1 for an empty
// product.  Defined for symmetric PSD input.
double det0(const Mat& m, double rel_tol = kRankRelTol);
double logdet0(const Mat& m, double rel_tol = kRankRelTol);

// Moore-Penrose inverse via SVD.
Mat pinv(const Mat& m);

// Orthogonal projection onto span(basis) and its complement I - P.
// `basis` must have full column rank (zero columns allowed: P = 0).
Mat proj(const Mat& basis);
Mat proj_complement(const Mat& basis);

// Given semi-orthonormal gamma (r x u), returns gamma0 (r x (r-u)) with
// (gamma, gamma0) jointly orthonormal, sign-normalized.
Mat orth_complete(const Mat& gamma);

// Orthonormal basis of span(m) with column correspondence preserved.
// Sign convention: the first nonzero entry of each column is positive.
Mat qr_orthonormalize(const Mat& m);

// Vector correlation q^2(A, B) = det(B^T A A^T B) for semi-orthonormal
// A, B of equal shape, clamped to [0, 1].  Empty bases give 1.
double q2_corr(const Mat& a, const Mat& b);

}  // namespace mk
}  // namespace emenv
