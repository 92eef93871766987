#include "fqln/tensor.hpp"

#include <algorithm>

namespace fqln {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor::Tensor(int n, int c, int h, int w) : Tensor(Shape4{n, c, h, w}) {}

Tensor::Tensor(Shape4 s) : shape_(s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
    throw ShapeError("negative tensor dimension " + s.str());
  data_.assign(static_cast<size_t>(s.numel()), 0.0f);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void require_shape(const Tensor& t, const Shape4& want, const char* what) {
  if (!(t.shape() == want))
    throw ShapeError(std::string(what) + ": expected " + want.str() + ", got " + t.shape().str());
}

}  // namespace fqln
