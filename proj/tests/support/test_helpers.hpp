#pragma once

#include <vector>

#include "emenv/dataset.hpp"
#include "emenv/matrix_kernels.hpp"
#include "emenv/rng.hpp"

namespace emenv::test {

inline Mat random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = runif(rng, lo, hi);
  }
  return m;
}

inline Vec random_vector(Rng& rng, int dim, double lo = -1.0, double hi = 1.0) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = runif(rng, lo, hi);
  return v;
}

inline Mat random_spd(Rng& rng, int dim, double ridge = 0.5) {
  const Mat g = random_matrix(rng, dim, dim);
  return g * g.transpose() + ridge * Mat::Identity(dim, dim);
}

inline Mat random_orthonormal(Rng& rng, int rows, int cols) {
  return mk::qr_orthonormalize(random_matrix(rng, rows, cols));
}

// MCAR-masked gaussian dataset guarded against empty rows/columns.
inline ObservedDataset random_masked_dataset(Rng& rng, int n, int p, int r,
                                             double miss_rate = 0.15) {
  const Mat beta = random_matrix(rng, r, p, -2.0, 2.0);
  const Mat chol = random_spd(rng, r).llt().matrixL();
  Mat x(n, p), y(n, r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = runif(rng, -2.0, 2.0);
    Vec eps(r);
    for (int k = 0; k < r; ++k) eps(k) = rnorm(rng);
    y.row(i) = (beta * x.row(i).transpose() + chol * eps).transpose();
  }
  ObservedDataset::BoolMat xo = ObservedDataset::BoolMat::Constant(n, p, true);
  ObservedDataset::BoolMat yo = ObservedDataset::BoolMat::Constant(n, r, true);
  for (int i = 0; i < n; ++i) {
    int missing = 0;
    const int cap = p + r - 1;  // keep at least one observed cell per row
    for (int j = 0; j < p && missing < cap; ++j) {
      if (runif(rng) < miss_rate) {
        xo(i, j) = false;
        ++missing;
      }
    }
    for (int k = 0; k < r && missing < cap; ++k) {
      if (runif(rng) < miss_rate) {
        yo(i, k) = false;
        ++missing;
      }
    }
  }
  // guarantee at least one observed cell per column (first row wins)
  for (int j = 0; j < p; ++j) xo(0, j) = true;
  for (int k = 0; k < r; ++k) yo(0, k) = true;
  return ObservedDataset(std::move(x), std::move(y), std::move(xo), std::move(yo));
}

// Determinant by recursive cofactor expansion; the independent oracle for
// small determinants.
inline double cofactor_det(const Mat& m) {
  const int d = static_cast<int>(m.rows());
  if (d == 0) return 1.0;
  if (d == 1) return m(0, 0);
  double acc = 0.0;
  for (int j = 0; j < d; ++j) {
    Mat minor(d - 1, d - 1);
    for (int i = 1; i < d; ++i) {
      int cc = 0;
      for (int c = 0; c < d; ++c) {
        if (c == j) continue;
        minor(i - 1, cc++) = m(i, c);
      }
    }
    acc += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * cofactor_det(minor);
  }
  return acc;
}

}  // namespace emenv::test
