#pragma once

#include <array>
#include <string>
#include <vector>

#include "fqln/rng.hpp"
#include "fqln/tensor.hpp"

namespace fqln {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  GaussianBlur,
  Contrast,
  Brightness,
  Fog,
  Pixelate,
};

inline constexpr int kNumCorruptionKinds = 8;
inline constexpr int kNumSeverities = 5;

const std::array<CorruptionKind, kNumCorruptionKinds>& all_corruption_kinds();
const char* corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption(const std::string& name);

// High-frequency vs low-frequency corruption groups used by the Fourier
// ordering checks.
const std::vector<CorruptionKind>& high_frequency_kinds();
const std::vector<CorruptionKind>& low_frequency_kinds();

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 1;  // 1..5
};

struct CorruptionParam {
  CorruptionKind kind;
  int severity;
  std::string param;
  double value;
};

// The full fixed severity table, one row per (kind, severity).
std::vector<CorruptionParam> corruption_param_table();
double corruption_param(CorruptionKind kind, int severity);

// Normalised k x k Gaussian kernel; k odd, sigma > 0, weights sum to one.
std::vector<float> gaussian_kernel(int k, double sigma);

// 3x3 Gaussian smoothing with reflect padding; shared by the blur corruption
// and the blur augmentation op.
Image gaussian_blur_3x3(const Image& img, double sigma);

// Applies one corruption to a [0,1] CHW image. Stochastic kinds draw from
// `stream`; deterministic kinds leave it untouched. Output stays in [0,1].
Image apply_corruption(const Image& img, const CorruptionSpec& spec, RngStream& stream);

// Per-image stream for evaluation-time corruption: depends only on the
// evaluation seed and the (kind, severity, index) triple so every model sees
// the identical corrupted pixels.
RngStream eval_corruption_stream(std::uint64_t eval_seed, CorruptionKind kind, int severity,
                                 std::uint64_t image_index);

}  // namespace fqln
