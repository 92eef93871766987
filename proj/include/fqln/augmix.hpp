#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fqln/rng.hpp"
#include "fqln/tensor.hpp"

namespace fqln {

enum class AugKind {
  Autocontrast,
  Equalize,
  Posterize,
  Rotate,
  Solarize,
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  GaussianNoiseOp,
  GaussianBlurOp,
  ContrastOp,
};

// One augmentation primitive. `magnitude` bounds the sampled strength:
//   rotate: degrees in [-m, m]            shear: factor in [-m, m]
//   translate: shift in [-m*W, m*W] px    solarize: threshold in [1-m, 1]
//   posterize: bit drop in [0, m]         contrast: scale in [m, 2-m]
//   gaussian_noise: sigma = m exactly     gaussian_blur: sigma = m (3x3)
//   autocontrast / equalize: parameterless
// Magnitude 0 (or contrast magnitude 1) is an exact identity.
struct AugOp {
  AugKind kind = AugKind::Autocontrast;
  double magnitude = 0.0;
};

const char* aug_name(AugKind kind);
AugOp parse_aug_op(const std::string& text);  // "name" or "name:magnitude"

// Default chain op pool (geometric + histogram ops, no corruption overlaps).
std::vector<AugOp> default_op_list();
// High-frequency bias pool used for expert fine-tuning.
std::vector<AugOp> hf_op_list();
// Low-frequency bias pool used for expert fine-tuning.
std::vector<AugOp> lf_op_list();
// Union pool: default + both bias pools, for same-bias control ensembles.
std::vector<AugOp> all_op_list();

struct AugMixConfig {
  int chains = 3;
  int max_depth = 3;
  double alpha = 1.0;
  std::vector<AugOp> op_list = default_op_list();

  // Test hooks: pin the stochastic choices without touching the stream
  // consumption of the ops themselves.
  std::optional<double> force_mix_weight;               // m in [0, 1]
  std::optional<std::vector<double>> force_chain_weights;
  std::optional<int> force_depth;
};

// Applies a single op with strength sampled from `stream`.
Image apply_aug(const Image& img, const AugOp& op, RngStream& stream);

// Mixes `chains` augmentation chains with Dirichlet weights, then blends the
// result with the clean image using a Beta(alpha, alpha) weight:
//   out = m * img + (1 - m) * sum_i w_i * chain_i(img)
Image augmix_compose(const Image& img, const AugMixConfig& cfg, RngStream& stream);

}  // namespace fqln
