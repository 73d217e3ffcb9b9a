#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace emenv {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates derived stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seed for replicate/stream `k` derived from a master seed. Replicate results
// therefore do not depend on execution order or thread count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ mix64(stream + 1));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0) {
  return Rng(derive_seed(master, stream));
}

inline double runif(Rng& rng, double lo = 0.0, double hi = 1.0) {
  // 53-bit mantissa in [0,1); avoids distribution-object state.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline double rnorm(Rng& rng) {
  // Marsaglia polar method, one value per call for a reproducible stream.
  for (;;) {
    const double a = 2.0 * runif(rng) - 1.0;
    const double b = 2.0 * runif(rng) - 1.0;
    const double s = a * a + b * b;
    if (s > 0.0 && s < 1.0) {
      return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

// Sum of `df` squared standard normals via the gamma representation.
inline double rchisq(Rng& rng, double df) {
  std::gamma_distribution<double> gamma(df / 2.0, 2.0);
  return gamma(rng);
}

inline double rlaplace(Rng& rng, double scale) {
  for (;;) {
    const double u = runif(rng) - 0.5;
    const double t = 1.0 - 2.0 * std::abs(u);
    if (t <= 0.0) continue;
    return (u < 0.0 ? scale : -scale) * std::log(t);
  }
}

inline bool rbernoulli(Rng& rng, double p) { return runif(rng) < p; }

}  // namespace emenv
