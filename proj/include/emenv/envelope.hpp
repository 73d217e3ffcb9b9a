#pragma once

#include "emenv/matrix_kernels.hpp"
#include "emenv/moments.hpp"

namespace emenv {

// Jointly orthonormal (gamma, gamma0) spanning the material/immaterial
// response directions; only span(gamma) is identified, so bases follow the
// deterministic sign convention of the matrix kernels.
struct EnvelopeBasis {
  Mat gamma;   // r x u
  Mat gamma0;  // r x (r - u)

  int r() const { return static_cast<int>(gamma.rows()); }
  int u() const { return static_cast<int>(gamma.cols()); }
};

// Closed-form parameter updates given a basis:
//   sigma1 = P (A1 - A2 A3^{-1} A2^T) P / n,  sigma2 = Q A1 Q / n,
//   beta   = P_{sigma1} A2 A3^{-1},
//   eta = gamma^T beta, omega = gamma^T sigma1 gamma,
//   omega0 = gamma0^T sigma2 gamma0, sigma = sigma1 + sigma2.
struct MStepResult {
  Mat beta;
  Mat sigma;
  Mat sigma1;
  Mat sigma2;
  Mat eta;
  Mat omega;
  Mat omega0;
};

// log det0 { P_G (A1 - A2 A3^{-1} A2^T) P_G + Q_G A1 Q_G }, the quantity the
// M-step minimizes over span(G).  A function of span(gamma) only.
double envelope_objective(const Mat& gamma, const MomentAccumulators& acc);

// Greedy one-direction-at-a-time estimate of the u-dimensional envelope:
// at step k, with G_{0k} an orthonormal complement of the accepted
// directions, minimize
//   D_k(w) = log(w^T M_k w) + log{w^T (M_k + U_k)^{-1} w},   |w| = 1,
// where M_k = G_{0k}^T (A1 - A2 A3^{-1} A2^T) G_{0k} and
// U_k = G_{0k}^T A2 A3^{-1} A2^T G_{0k}.  The inner problem starts from the
// best of the eigenvectors of M_k and (M_k + U_k)^{-1} and is refined by
// projected gradient descent on the unit sphere.
EnvelopeBasis one_d_algorithm(const MomentAccumulators& acc, int u);

MStepResult mstep_given_gamma(const EnvelopeBasis& basis, const MomentAccumulators& acc,
                              int n);

}  // namespace emenv
