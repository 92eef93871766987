#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fqln/error.hpp"

namespace fqln {

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense NCHW float32 tensor. Row-major, w fastest.
class Tensor {
public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w);
  explicit Tensor(Shape4 s);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& at(int n, int c, int y, int x) { return data_[idx(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[idx(n, c, y, x)]; }

  // Pointer to the (n, c) plane of h*w contiguous floats.
  float* plane(int n, int c) { return data_.data() + idx(n, c, 0, 0); }
  const float* plane(int n, int c) const { return data_.data() + idx(n, c, 0, 0); }

  void fill(float v);
  void zero() { fill(0.0f); }

private:
  std::int64_t idx(int n, int c, int y, int x) const {
    return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  Shape4 shape_;
  std::vector<float> data_;
};

// Single CHW image with values nominally in [0, 1].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w) : c(c), h(h), w(w), data(static_cast<size_t>(c) * h * w, 0.0f) {}

  std::int64_t numel() const { return static_cast<std::int64_t>(c) * h * w; }
  float& at(int ch, int y, int x) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
  float* plane(int ch) { return data.data() + static_cast<size_t>(ch) * h * w; }
  const float* plane(int ch) const { return data.data() + static_cast<size_t>(ch) * h * w; }
};

void require_shape(const Tensor& t, const Shape4& want, const char* what);

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

}  // namespace fqln
