#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "pfgpf/numerics.hpp"

namespace pfgpf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a path of indices.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master);
  for (auto index : path) h = mix64(h ^ mix64(index + 0x632be59bd9b4e019ULL));
  return h;
}

inline Vector standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

/// Column-per-sample draws from N(mean, L Lᵀ).
inline Matrix sample_gaussian(const Vector& mean, const Matrix& lower, Eigen::Index count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix white(mean.size(), count);
  for (Eigen::Index j = 0; j < count; ++j) {
    for (Eigen::Index i = 0; i < mean.size(); ++i) white(i, j) = normal(rng);
  }
  Matrix out = lower.triangularView<Eigen::Lower>() * white;
  out.colwise() += mean;
  return out;
}

inline Matrix sample_gaussian(const GaussianBelief& belief, Eigen::Index count, Rng& rng) {
  return sample_gaussian(belief.mean, cholesky_with_jitter(belief.cov).lower, count, rng);
}

}  // namespace pfgpf
