#pragma once

#include <cstdint>
#include <random>

#include "wmqd/linalg.h"

namespace wmqd {

/// Seeded source of standard normal draws. One instance per trial; never
/// shared across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for trial `index` of an experiment seeded with
  /// `seed`. Streams depend only on (seed, index), never on scheduling.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  double normal() { return normal_(engine_); }
  Vector normal(Eigen::Index n);
  double uniform() { return uniform_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

/// Draws from N(0, covariance) through a PSD square root, so singular
/// covariances are supported. Always consumes `dim()` normals per sample.
class GaussianSampler {
 public:
  GaussianSampler() = default;
  explicit GaussianSampler(const Matrix& covariance);

  Vector sample(Rng& rng) const;
  Eigen::Index dim() const { return root_.rows(); }
  const Matrix& root() const { return root_; }

 private:
  Matrix root_;
};

}  // namespace wmqd
