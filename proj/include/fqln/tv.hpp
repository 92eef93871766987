#pragma once

#include "fqln/tensor.hpp"

namespace fqln {

// Anisotropic total variation: L1 norm of horizontal and vertical forward
// differences. The subgradient uses sign(0) = 0.

double tv_norm(const float* plane, int h, int w);
double tv_norm(const Image& img);  // sums channel planes

// Subgradient of tv_norm into grad (overwritten, same layout as plane).
void tv_grad(const float* plane, int h, int w, float* grad);

// Smoothness penalty over a feature-map batch (N,C,H,W):
//   loss = lambda * (1/N) * sum_n sum_c tv(map[n,c])
// grad receives dloss/dmap. Returns the loss.
double tv_loss_batch(const Tensor& maps, double lambda, Tensor& grad);

}  // namespace fqln
