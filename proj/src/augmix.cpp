#include "fqln/augmix.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fqln/corruptions.hpp"

namespace fqln {

const char* aug_name(AugKind kind) {
  switch (kind) {
    case AugKind::Autocontrast: return "autocontrast";
    case AugKind::Equalize: return "equalize";
    case AugKind::Posterize: return "posterize";
    case AugKind::Rotate: return "rotate";
    case AugKind::Solarize: return "solarize";
    case AugKind::ShearX: return "shear_x";
    case AugKind::ShearY: return "shear_y";
    case AugKind::TranslateX: return "translate_x";
    case AugKind::TranslateY: return "translate_y";
    case AugKind::GaussianNoiseOp: return "gaussian_noise";
    case AugKind::GaussianBlurOp: return "gaussian_blur";
    case AugKind::ContrastOp: return "contrast";
  }
  throw InvalidParameter("unknown augmentation kind");
}

AugOp parse_aug_op(const std::string& text) {
  std::string name = text;
  double mag = 0.0;
  bool has_mag = false;
  if (auto pos = text.find(':'); pos != std::string::npos) {
    name = text.substr(0, pos);
    try {
      mag = std::stod(text.substr(pos + 1));
    } catch (const std::exception&) {
      throw InvalidParameter("bad augmentation magnitude in: " + text);
    }
    has_mag = true;
  }
  static const std::array<AugKind, 12> kKinds = {
      AugKind::Autocontrast, AugKind::Equalize,  AugKind::Posterize,
      AugKind::Rotate,       AugKind::Solarize,  AugKind::ShearX,
      AugKind::ShearY,       AugKind::TranslateX, AugKind::TranslateY,
      AugKind::GaussianNoiseOp, AugKind::GaussianBlurOp, AugKind::ContrastOp};
  for (AugKind k : kKinds)
    if (name == aug_name(k)) {
      if (!has_mag) {
        for (const AugOp& d : all_op_list())
          if (d.kind == k) mag = d.magnitude;
      }
      return AugOp{k, mag};
    }
  throw InvalidParameter("unknown augmentation op: " + name);
}

std::vector<AugOp> default_op_list() {
  return {
      {AugKind::Autocontrast, 0.0}, {AugKind::Equalize, 0.0},
      {AugKind::Posterize, 4.0},    {AugKind::Rotate, 30.0},
      {AugKind::Solarize, 0.75},    {AugKind::ShearX, 0.3},
      {AugKind::ShearY, 0.3},       {AugKind::TranslateX, 1.0 / 3.0},
      {AugKind::TranslateY, 1.0 / 3.0},
  };
}

std::vector<AugOp> hf_op_list() {
  return {{AugKind::GaussianNoiseOp, 0.08}, {AugKind::GaussianBlurOp, 1.0}};
}

std::vector<AugOp> lf_op_list() { return {{AugKind::ContrastOp, 0.25}}; }

std::vector<AugOp> all_op_list() {
  auto ops = default_op_list();
  for (const AugOp& op : hf_op_list()) ops.push_back(op);
  for (const AugOp& op : lf_op_list()) ops.push_back(op);
  return ops;
}

namespace {

constexpr double kFill = 0.5;  // mid-grey for samples pulled from outside the frame
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

double bilinear(const Image& img, int ch, double sx, double sy) {
  const int ix = static_cast<int>(std::floor(sx));
  const int iy = static_cast<int>(std::floor(sy));
  const double fx = sx - ix, fy = sy - iy;
  auto tap = [&](int x, int y) -> double {
    if (x < 0 || x >= img.w || y < 0 || y >= img.h) return kFill;
    return img.at(ch, y, x);
  };
  const double top = tap(ix, iy) * (1.0 - fx) + tap(ix + 1, iy) * fx;
  const double bot = tap(ix, iy + 1) * (1.0 - fx) + tap(ix + 1, iy + 1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

// Inverse-map affine resample: src = M * (p - c) + c + t.
Image affine(const Image& img, double m00, double m01, double m10, double m11, double tx,
             double ty) {
  const double cx = (img.w - 1) * 0.5, cy = (img.h - 1) * 0.5;
  Image out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double sx = m00 * dx + m01 * dy + cx + tx;
        const double sy = m10 * dx + m11 * dy + cy + ty;
        out.at(ch, y, x) = static_cast<float>(std::clamp(bilinear(img, ch, sx, sy), 0.0, 1.0));
      }
  return out;
}

Image autocontrast_op(const Image& img) {
  Image out = img;
  const int hw = img.h * img.w;
  for (int ch = 0; ch < img.c; ++ch) {
    const float* p = img.plane(ch);
    float lo = p[0], hi = p[0];
    for (int i = 1; i < hw; ++i) {
      lo = std::min(lo, p[i]);
      hi = std::max(hi, p[i]);
    }
    if (hi - lo < 1e-6f) continue;
    float* q = out.plane(ch);
    const float scale = 1.0f / (hi - lo);
    for (int i = 0; i < hw; ++i) q[i] = clamp01((p[i] - lo) * scale);
  }
  return out;
}

Image equalize_op(const Image& img) {
  Image out = img;
  const int hw = img.h * img.w;
  for (int ch = 0; ch < img.c; ++ch) {
    const float* p = img.plane(ch);
    std::array<int, 256> hist{};
    auto bin = [](float v) { return std::min(255, static_cast<int>(clamp01(v) * 256.0f)); };
    for (int i = 0; i < hw; ++i) ++hist[static_cast<size_t>(bin(p[i]))];
    std::array<int, 256> cdf{};
    int run = 0;
    for (int v = 0; v < 256; ++v) {
      run += hist[static_cast<size_t>(v)];
      cdf[static_cast<size_t>(v)] = run;
    }
    int cdf_min = 0;
    for (int v = 0; v < 256; ++v)
      if (hist[static_cast<size_t>(v)] > 0) {
        cdf_min = cdf[static_cast<size_t>(v)];
        break;
      }
    if (cdf_min == hw) continue;  // single-valued plane
    float* q = out.plane(ch);
    std::array<float, 256> lut{};
    for (int v = 0; v < 256; ++v)
      lut[static_cast<size_t>(v)] = static_cast<float>(
          std::lround(255.0 * (cdf[static_cast<size_t>(v)] - cdf_min) / (hw - cdf_min)) / 255.0);
    for (int i = 0; i < hw; ++i) q[i] = lut[static_cast<size_t>(bin(p[i]))];
  }
  return out;
}

Image posterize_op(const Image& img, int bits) {
  if (bits >= 8) return img;
  Image out(img.c, img.h, img.w);
  const int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
  for (size_t i = 0; i < img.data.size(); ++i) {
    int v = static_cast<int>(clamp01(img.data[i]) * 255.0f + 0.5f);
    out.data[i] = static_cast<float>(v & mask) / 255.0f;
  }
  return out;
}

Image solarize_op(const Image& img, double threshold) {
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    out.data[i] = v >= threshold ? 1.0f - v : v;
  }
  return out;
}

Image contrast_op(const Image& img, double scale) {
  if (scale == 1.0) return img;
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  Image out(img.c, img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = clamp01(static_cast<float>(mean + scale * (img.data[i] - mean)));
  return out;
}

}  // namespace

Image apply_aug(const Image& img, const AugOp& op, RngStream& stream) {
  switch (op.kind) {
    case AugKind::Autocontrast:
      return autocontrast_op(img);
    case AugKind::Equalize:
      return equalize_op(img);
    case AugKind::Posterize: {
      const double drop = stream.next_uniform() * op.magnitude;
      const int bits = std::clamp(8 - static_cast<int>(std::lround(drop)), 1, 8);
      return posterize_op(img, bits);
    }
    case AugKind::Rotate: {
      const double deg = (stream.next_uniform() * 2.0 - 1.0) * op.magnitude;
      if (deg == 0.0) return img;
      const double a = deg * kDegToRad;
      const double c = std::cos(a), s = std::sin(a);
      return affine(img, c, s, -s, c, 0.0, 0.0);
    }
    case AugKind::Solarize: {
      const double t = 1.0 - stream.next_uniform() * op.magnitude;
      return solarize_op(img, t);
    }
    case AugKind::ShearX: {
      const double f = (stream.next_uniform() * 2.0 - 1.0) * op.magnitude;
      if (f == 0.0) return img;
      return affine(img, 1.0, -f, 0.0, 1.0, 0.0, 0.0);
    }
    case AugKind::ShearY: {
      const double f = (stream.next_uniform() * 2.0 - 1.0) * op.magnitude;
      if (f == 0.0) return img;
      return affine(img, 1.0, 0.0, -f, 1.0, 0.0, 0.0);
    }
    case AugKind::TranslateX: {
      const double d = (stream.next_uniform() * 2.0 - 1.0) * op.magnitude * img.w;
      if (d == 0.0) return img;
      return affine(img, 1.0, 0.0, 0.0, 1.0, -d, 0.0);
    }
    case AugKind::TranslateY: {
      const double d = (stream.next_uniform() * 2.0 - 1.0) * op.magnitude * img.h;
      if (d == 0.0) return img;
      return affine(img, 1.0, 0.0, 0.0, 1.0, 0.0, -d);
    }
    case AugKind::GaussianNoiseOp: {
      auto noise =
          rng_gaussian(stream, static_cast<size_t>(img.numel()), 0.0f,
                       static_cast<float>(op.magnitude));
      Image out(img.c, img.h, img.w);
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = clamp01(img.data[i] + noise[i]);
      return out;
    }
    case AugKind::GaussianBlurOp:
      if (!(op.magnitude > 0.0))
        throw InvalidParameter("gaussian_blur op needs a positive magnitude");
      return gaussian_blur_3x3(img, op.magnitude);
    case AugKind::ContrastOp: {
      const double scale = op.magnitude + stream.next_uniform() * (2.0 - 2.0 * op.magnitude);
      return contrast_op(img, scale);
    }
  }
  throw InvalidParameter("unknown augmentation kind");
}

Image augmix_compose(const Image& img, const AugMixConfig& cfg, RngStream& stream) {
  if (cfg.op_list.empty()) throw InvalidParameter("augmix: op list must not be empty");
  if (cfg.chains < 1) throw InvalidParameter("augmix: chains must be positive");
  if (cfg.max_depth < 1) throw InvalidParameter("augmix: max_depth must be positive");
  if (!(cfg.alpha > 0.0)) throw InvalidParameter("augmix: alpha must be positive");

  std::vector<double> w;
  if (cfg.force_chain_weights) {
    w = *cfg.force_chain_weights;
    if (static_cast<int>(w.size()) != cfg.chains)
      throw InvalidParameter("augmix: forced chain weights size mismatch");
  } else {
    w = stream.next_dirichlet(cfg.alpha, cfg.chains);
  }
  const double m =
      cfg.force_mix_weight ? *cfg.force_mix_weight : stream.next_beta(cfg.alpha, cfg.alpha);
  if (m < 0.0 || m > 1.0) throw InvalidParameter("augmix: mix weight must be in [0, 1]");

  std::vector<double> acc(img.data.size(), 0.0);
  for (int i = 0; i < cfg.chains; ++i) {
    const int depth = cfg.force_depth ? *cfg.force_depth : 1 + stream.next_index(cfg.max_depth);
    Image chain = img;
    for (int d = 0; d < depth; ++d) {
      const AugOp& op = cfg.op_list[static_cast<size_t>(stream.next_index(
          static_cast<int>(cfg.op_list.size())))];
      chain = apply_aug(chain, op, stream);
    }
    for (size_t p = 0; p < acc.size(); ++p) acc[p] += w[static_cast<size_t>(i)] * chain.data[p];
  }
  Image out(img.c, img.h, img.w);
  for (size_t p = 0; p < out.data.size(); ++p)
    out.data[p] = clamp01(static_cast<float>(m * img.data[p] + (1.0 - m) * acc[p]));
  return out;
}

}  // namespace fqln
