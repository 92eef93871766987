#include "fqln/rng.hpp"

#include <cmath>

namespace fqln {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = mix64(base + kGolden);
  for (std::uint64_t k : keys) s = mix64(s ^ (k + kGolden + (s << 6) + (s >> 2)));
  return s;
}

int RngStream::next_index(int n) {
  if (n <= 0) throw InvalidParameter("next_index: n must be positive");
  int v = static_cast<int>(next_uniform() * n);
  return v < n ? v : n - 1;
}

double RngStream::next_gaussian() {
  double u1 = next_uniform();
  double u2 = next_uniform();
  double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(kTwoPi * u2);
}

int RngStream::next_poisson(double mean) {
  if (mean < 0.0) throw InvalidParameter("next_poisson: mean must be non-negative");
  if (mean == 0.0) {
    next_uniform();  // keep consumption constant
    return 0;
  }
  double u = next_uniform();
  double p = std::exp(-mean);
  double cum = p;
  int k = 0;
  const int cap = static_cast<int>(mean * 12.0) + 64;  // far tail, keeps the loop finite
  while (u > cum && k < cap) {
    ++k;
    p *= mean / k;
    cum += p;
  }
  return k;
}

double RngStream::next_gamma(double alpha) {
  if (alpha <= 0.0) throw InvalidParameter("next_gamma: alpha must be positive");
  if (alpha < 1.0) {
    double g = next_gamma(alpha + 1.0);
    double u = next_uniform();
    return g * std::pow(1.0 - u, 1.0 / alpha);
  }
  if (alpha == 1.0) return -std::log1p(-next_uniform());
  // Marsaglia-Tsang squeeze
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_gaussian();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = next_uniform();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::next_beta(double a, double b) {
  double ga = next_gamma(a);
  double gb = next_gamma(b);
  double s = ga + gb;
  if (s == 0.0) return 0.5;  // both gammas underflowed; split evenly
  return ga / s;
}

std::vector<double> RngStream::next_dirichlet(double alpha, int k) {
  if (k <= 0) throw InvalidParameter("next_dirichlet: k must be positive");
  std::vector<double> g(static_cast<size_t>(k));
  double sum = 0.0;
  for (auto& v : g) {
    v = next_gamma(alpha);
    sum += v;
  }
  if (sum == 0.0) {
    for (auto& v : g) v = 1.0 / k;
    return g;
  }
  for (auto& v : g) v /= sum;
  return g;
}

std::vector<float> rng_uniform(RngStream& stream, std::size_t n, float lo, float hi) {
  if (!(lo <= hi)) throw InvalidParameter("rng_uniform: lo must not exceed hi");
  std::vector<float> out(n);
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (auto& v : out) v = static_cast<float>(lo + span * stream.next_uniform());
  return out;
}

std::vector<float> rng_gaussian(RngStream& stream, std::size_t n, float mean, float stddev) {
  if (stddev < 0.0f) throw InvalidParameter("rng_gaussian: stddev must be non-negative");
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; i += 2) {
    double u1 = stream.next_uniform();
    double u2 = stream.next_uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = kTwoPi * u2;
    out[i] = static_cast<float>(mean + stddev * r * std::cos(a));
    if (i + 1 < n) out[i + 1] = static_cast<float>(mean + stddev * r * std::sin(a));
  }
  return out;
}

}  // namespace fqln
