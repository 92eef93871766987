#include "fqln/tv.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace fqln {

double tv_norm(const float* plane, int h, int w) {
  double acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = plane[static_cast<size_t>(y) * w + x];
      if (x + 1 < w) acc += std::fabs(plane[static_cast<size_t>(y) * w + x + 1] - v);
      if (y + 1 < h) acc += std::fabs(plane[(static_cast<size_t>(y) + 1) * w + x] - v);
    }
  return acc;
}

double tv_norm(const Image& img) {
  double acc = 0.0;
  for (int ch = 0; ch < img.c; ++ch) acc += tv_norm(img.plane(ch), img.h, img.w);
  return acc;
}

void tv_grad(const float* plane, int h, int w, float* grad) {
  std::memset(grad, 0, sizeof(float) * static_cast<size_t>(h) * w);
  auto sign = [](float d) -> float { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (x + 1 < w) {
        const float s = sign(plane[i + 1] - plane[i]);
        grad[i] -= s;
        grad[i + 1] += s;
      }
      if (y + 1 < h) {
        const float s = sign(plane[i + static_cast<size_t>(w)] - plane[i]);
        grad[i] -= s;
        grad[i + static_cast<size_t>(w)] += s;
      }
    }
}

double tv_loss_batch(const Tensor& maps, double lambda, Tensor& grad) {
  require_shape(grad, maps.shape(), "tv grad");
  const int N = maps.shape().n, C = maps.shape().c, H = maps.shape().h, W = maps.shape().w;
  if (N == 0) return 0.0;
  std::vector<double> per_plane(static_cast<size_t>(N) * C, 0.0);
  const float scale = static_cast<float>(lambda / N);

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      const float* p = maps.plane(in, ic);
      float* g = grad.plane(in, ic);
      per_plane[static_cast<size_t>(in) * C + ic] = tv_norm(p, H, W);
      tv_grad(p, H, W, g);
      for (long i = 0; i < static_cast<long>(H) * W; ++i) g[i] *= scale;
    }
  double total = 0.0;
  for (double v : per_plane) total += v;  // index order, thread-count independent
  return lambda * total / N;
}

}  // namespace fqln
