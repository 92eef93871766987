#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "fqln/error.hpp"

namespace fqln {

// splitmix64 output stage.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Folds integer keys into a base seed. Used to split one run seed into
// independent per-image / per-epoch / per-view streams without any shared
// state, so parallel consumers stay bitwise reproducible.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

// Counter-based deterministic stream: splitmix64 over an incrementing state.
// Identical seeds give identical draw sequences on every platform.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  int next_index(int n);

  // One standard Gaussian draw; always consumes exactly two uniforms.
  double next_gaussian();

  // Poisson by inverse transform; consumes exactly one uniform.
  int next_poisson(double mean);

  // Gamma(alpha, 1), alpha > 0.
  double next_gamma(double alpha);

  // Beta(a, b) via two gammas.
  double next_beta(double a, double b);

  // Symmetric Dirichlet of dimension k with concentration alpha.
  std::vector<double> next_dirichlet(double alpha, int k);

private:
  std::uint64_t state_;
};

// n uniform floats in [lo, hi).
std::vector<float> rng_uniform(RngStream& stream, std::size_t n, float lo, float hi);

// n Gaussian floats, Box-Muller, exactly two uniforms per pair of outputs.
std::vector<float> rng_gaussian(RngStream& stream, std::size_t n, float mean, float stddev);

}  // namespace fqln
