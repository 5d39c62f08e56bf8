#include "wmqd/random.h"

namespace wmqd {

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint64_t words[2];
  seq.generate(reinterpret_cast<std::uint32_t*>(words),
               reinterpret_cast<std::uint32_t*>(words) + 4);
  return Rng(words[0] ^ (words[1] << 1));
}

Vector Rng::normal(Eigen::Index n) {
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = normal_(engine_);
  return out;
}

GaussianSampler::GaussianSampler(const Matrix& covariance)
    : root_(linalg::psd_sqrt(covariance)) {}

Vector GaussianSampler::sample(Rng& rng) const {
  return root_ * rng.normal(root_.cols());
}

}  // namespace wmqd
