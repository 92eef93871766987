#include "fqln/corruptions.hpp"

#include <algorithm>
#include <cmath>

namespace fqln {

namespace {

// Fixed severity tables. Severity s uses entry s-1.
constexpr double kNoiseSigma[5] = {0.04, 0.06, 0.08, 0.10, 0.14};
constexpr double kShotLambda[5] = {60.0, 30.0, 15.0, 8.0, 4.0};
constexpr double kImpulseFraction[5] = {0.01, 0.02, 0.04, 0.06, 0.10};
constexpr double kBlurSigma[5] = {0.5, 0.75, 1.0, 1.5, 2.0};
constexpr double kContrastScale[5] = {0.75, 0.60, 0.45, 0.30, 0.20};
constexpr double kBrightnessShift[5] = {0.05, 0.10, 0.15, 0.20, 0.30};
constexpr double kFogBlend[5] = {0.15, 0.25, 0.35, 0.45, 0.60};
constexpr double kPixelateFactor[5] = {1.25, 1.5, 2.0, 3.0, 4.0};
constexpr int kBlurKernel = 3;

const double* severity_table(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return kNoiseSigma;
    case CorruptionKind::ShotNoise: return kShotLambda;
    case CorruptionKind::ImpulseNoise: return kImpulseFraction;
    case CorruptionKind::GaussianBlur: return kBlurSigma;
    case CorruptionKind::Contrast: return kContrastScale;
    case CorruptionKind::Brightness: return kBrightnessShift;
    case CorruptionKind::Fog: return kFogBlend;
    case CorruptionKind::Pixelate: return kPixelateFactor;
  }
  throw InvalidParameter("unknown corruption kind");
}

const char* param_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return "sigma";
    case CorruptionKind::ShotNoise: return "lambda";
    case CorruptionKind::ImpulseNoise: return "fraction";
    case CorruptionKind::GaussianBlur: return "sigma";
    case CorruptionKind::Contrast: return "scale";
    case CorruptionKind::Brightness: return "shift";
    case CorruptionKind::Fog: return "blend";
    case CorruptionKind::Pixelate: return "factor";
  }
  throw InvalidParameter("unknown corruption kind");
}

void check_severity(int severity) {
  if (severity < 1 || severity > kNumSeverities)
    throw InvalidParameter("severity must be in [1, 5], got " + std::to_string(severity));
}

}  // namespace

const std::array<CorruptionKind, kNumCorruptionKinds>& all_corruption_kinds() {
  static const std::array<CorruptionKind, kNumCorruptionKinds> kinds = {
      CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
      CorruptionKind::ImpulseNoise,  CorruptionKind::GaussianBlur,
      CorruptionKind::Contrast,      CorruptionKind::Brightness,
      CorruptionKind::Fog,           CorruptionKind::Pixelate};
  return kinds;
}

const char* corruption_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::GaussianBlur: return "gaussian_blur";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Fog: return "fog";
    case CorruptionKind::Pixelate: return "pixelate";
  }
  throw InvalidParameter("unknown corruption kind");
}

CorruptionKind parse_corruption(const std::string& name) {
  for (CorruptionKind k : all_corruption_kinds())
    if (name == corruption_name(k)) return k;
  throw InvalidParameter("unknown corruption kind: " + name);
}

const std::vector<CorruptionKind>& high_frequency_kinds() {
  static const std::vector<CorruptionKind> kinds = {
      CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
      CorruptionKind::ImpulseNoise, CorruptionKind::GaussianBlur};
  return kinds;
}

const std::vector<CorruptionKind>& low_frequency_kinds() {
  static const std::vector<CorruptionKind> kinds = {
      CorruptionKind::Contrast, CorruptionKind::Brightness, CorruptionKind::Fog};
  return kinds;
}

std::vector<CorruptionParam> corruption_param_table() {
  std::vector<CorruptionParam> rows;
  for (CorruptionKind k : all_corruption_kinds()) {
    const double* tab = severity_table(k);
    for (int s = 1; s <= kNumSeverities; ++s)
      rows.push_back({k, s, param_name(k), tab[s - 1]});
  }
  return rows;
}

double corruption_param(CorruptionKind kind, int severity) {
  check_severity(severity);
  return severity_table(kind)[severity - 1];
}

std::vector<float> gaussian_kernel(int k, double sigma) {
  if (k <= 0 || k % 2 == 0) throw InvalidParameter("gaussian_kernel: k must be odd and positive");
  if (!(sigma > 0.0)) throw InvalidParameter("gaussian_kernel: sigma must be positive");
  std::vector<float> w(static_cast<size_t>(k) * k);
  const int r = k / 2;
  double sum = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      double dy = y - r, dx = x - r;
      double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(y) * k + x] = static_cast<float>(v);
      sum += v;
    }
  for (auto& v : w) v = static_cast<float>(v / sum);
  return w;
}

namespace {

// reflect-101 index: mirrors across the border without repeating the edge.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Image convolve_reflect(const Image& img, const std::vector<float>& kernel, int k) {
  const int r = k / 2;
  Image out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float acc = 0.0f;
        for (int ky = 0; ky < k; ++ky) {
          const int sy = reflect(y + ky - r, img.h);
          for (int kx = 0; kx < k; ++kx) {
            const int sx = reflect(x + kx - r, img.w);
            acc += kernel[static_cast<size_t>(ky) * k + kx] * img.at(ch, sy, sx);
          }
        }
        out.at(ch, y, x) = clamp01(acc);
      }
  return out;
}

Image gaussian_noise_c(const Image& img, double sigma, RngStream& stream) {
  auto noise = rng_gaussian(stream, static_cast<size_t>(img.numel()), 0.0f,
                            static_cast<float>(sigma));
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = clamp01(img.data[i] + noise[i]);
  return out;
}

Image shot_noise_c(const Image& img, double lambda, RngStream& stream) {
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < out.data.size(); ++i) {
    int k = stream.next_poisson(static_cast<double>(img.data[i]) * lambda);
    out.data[i] = clamp01(static_cast<float>(k / lambda));
  }
  return out;
}

Image impulse_noise_c(const Image& img, double fraction, RngStream& stream) {
  Image out = img;
  // Two draws per pixel regardless of the hit, so consumption is constant.
  const int hw = img.h * img.w;
  for (int p = 0; p < hw; ++p) {
    double u1 = stream.next_uniform();
    double u2 = stream.next_uniform();
    if (u1 < fraction) {
      float v = u2 < 0.5 ? 0.0f : 1.0f;
      for (int ch = 0; ch < img.c; ++ch) out.data[static_cast<size_t>(ch) * hw + p] = v;
    }
  }
  return out;
}

Image contrast_c(const Image& img, double scale) {
  if (scale == 1.0) return img;
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = clamp01(static_cast<float>(mean + scale * (img.data[i] - mean)));
  return out;
}

Image brightness_c(const Image& img, double shift) {
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = clamp01(static_cast<float>(img.data[i] + shift));
  return out;
}

// Plasma fractal on a (2^m + 1)^2 lattice, normalised to [0, 1].
struct Plasma {
  int g = 0;
  std::vector<double> grid;
};

Plasma diamond_square(int need, RngStream& stream) {
  int side = 1;
  while (side < need - 1) side *= 2;
  const int g = side + 1;
  std::vector<double> grid(static_cast<size_t>(g) * g, 0.0);
  auto at = [&](int y, int x) -> double& { return grid[static_cast<size_t>(y) * g + x]; };
  at(0, 0) = stream.next_uniform();
  at(0, g - 1) = stream.next_uniform();
  at(g - 1, 0) = stream.next_uniform();
  at(g - 1, g - 1) = stream.next_uniform();
  double amp = 0.5;
  for (int step = side; step > 1; step /= 2) {
    const int half = step / 2;
    for (int y = half; y < g; y += step)
      for (int x = half; x < g; x += step) {
        double avg = (at(y - half, x - half) + at(y - half, x + half) +
                      at(y + half, x - half) + at(y + half, x + half)) * 0.25;
        at(y, x) = avg + (stream.next_uniform() * 2.0 - 1.0) * amp;
      }
    for (int y = 0; y < g; y += half)
      for (int x = ((y / half) % 2 == 0) ? half : 0; x < g; x += step) {
        double sum = 0.0;
        int cnt = 0;
        if (y - half >= 0) { sum += at(y - half, x); ++cnt; }
        if (y + half < g) { sum += at(y + half, x); ++cnt; }
        if (x - half >= 0) { sum += at(y, x - half); ++cnt; }
        if (x + half < g) { sum += at(y, x + half); ++cnt; }
        at(y, x) = sum / cnt + (stream.next_uniform() * 2.0 - 1.0) * amp;
      }
    amp *= 0.5;
  }
  double lo = grid[0], hi = grid[0];
  for (double v : grid) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo)
    for (auto& v : grid) v = (v - lo) / (hi - lo);
  else
    for (auto& v : grid) v = 0.5;
  // callers crop the top-left window they need
  return Plasma{g, std::move(grid)};
}

Image fog_c(const Image& img, double blend, RngStream& stream) {
  const int need = std::max(img.h, img.w);
  const Plasma plasma = diamond_square(need == 1 ? 2 : need, stream);
  const int g = plasma.g;
  Image out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double p = plasma.grid[static_cast<size_t>(y) * g + x];
        double v = (img.at(ch, y, x) + blend * p) / (1.0 + blend);
        out.at(ch, y, x) = clamp01(static_cast<float>(v));
      }
  return out;
}

Image pixelate_c(const Image& img, double factor) {
  const int h2 = std::max(1, static_cast<int>(std::lround(img.h / factor)));
  const int w2 = std::max(1, static_cast<int>(std::lround(img.w / factor)));
  if (h2 >= img.h && w2 >= img.w) return img;
  const double sy = static_cast<double>(img.h) / h2;
  const double sx = static_cast<double>(img.w) / w2;
  std::vector<float> small(static_cast<size_t>(img.c) * h2 * w2);
  for (int ch = 0; ch < img.c; ++ch)
    for (int ty = 0; ty < h2; ++ty) {
      const double y0 = ty * sy, y1 = (ty + 1) * sy;
      for (int tx = 0; tx < w2; ++tx) {
        const double x0 = tx * sx, x1 = (tx + 1) * sx;
        double acc = 0.0;
        for (int iy = static_cast<int>(y0); iy < img.h && iy < y1; ++iy) {
          const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
          for (int ix = static_cast<int>(x0); ix < img.w && ix < x1; ++ix) {
            const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
            acc += wy * wx * img.at(ch, iy, ix);
          }
        }
        small[(static_cast<size_t>(ch) * h2 + ty) * w2 + tx] =
            static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
      }
    }
  Image out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y) {
      const int ty = std::min(h2 - 1, static_cast<int>(y / sy));
      for (int x = 0; x < img.w; ++x) {
        const int tx = std::min(w2 - 1, static_cast<int>(x / sx));
        out.at(ch, y, x) = small[(static_cast<size_t>(ch) * h2 + ty) * w2 + tx];
      }
    }
  return out;
}

}  // namespace

Image gaussian_blur_3x3(const Image& img, double sigma) {
  return convolve_reflect(img, gaussian_kernel(kBlurKernel, sigma), kBlurKernel);
}

Image apply_corruption(const Image& img, const CorruptionSpec& spec, RngStream& stream) {
  check_severity(spec.severity);
  const double p = corruption_param(spec.kind, spec.severity);
  switch (spec.kind) {
    case CorruptionKind::GaussianNoise: return gaussian_noise_c(img, p, stream);
    case CorruptionKind::ShotNoise: return shot_noise_c(img, p, stream);
    case CorruptionKind::ImpulseNoise: return impulse_noise_c(img, p, stream);
    case CorruptionKind::GaussianBlur: return gaussian_blur_3x3(img, p);
    case CorruptionKind::Contrast: return contrast_c(img, p);
    case CorruptionKind::Brightness: return brightness_c(img, p);
    case CorruptionKind::Fog: return fog_c(img, p, stream);
    case CorruptionKind::Pixelate: return pixelate_c(img, p);
  }
  throw InvalidParameter("unknown corruption kind");
}

RngStream eval_corruption_stream(std::uint64_t eval_seed, CorruptionKind kind, int severity,
                                 std::uint64_t image_index) {
  return RngStream(derive_seed(eval_seed, {0xE7A1ull, static_cast<std::uint64_t>(kind),
                                           static_cast<std::uint64_t>(severity), image_index}));
}

}  // namespace fqln
