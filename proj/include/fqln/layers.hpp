#pragma once

#include <vector>

#include "fqln/tensor.hpp"

namespace fqln {

// Threaded kernels. Every accumulation runs in a fixed order owned by exactly
// one thread, so results are bitwise identical for any thread count and match
// the serial reference kernels up to float rounding.

// x (N,CI,H,W), w (CO,CI,KH,KW), bias size CO, y (N,CO,OH,OW).
void conv2d_forward(const Tensor& x, const Tensor& w, const std::vector<float>& bias, int stride,
                    int pad, Tensor& y);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride, int pad,
                     Tensor& dx, Tensor& dw, std::vector<float>& db);

Shape4 conv2d_out_shape(const Shape4& x, const Shape4& w, int stride, int pad);

struct BnCache {
  std::vector<float> mean, invstd;
  Tensor xhat;
};

// Training forward: biased batch variance; running stats updated as
//   running = (1 - momentum) * running + momentum * batch.
// Needs at least two samples per channel.
void batchnorm_forward_train(const Tensor& x, const std::vector<float>& gamma,
                             const std::vector<float>& beta, float eps, float momentum,
                             std::vector<float>& running_mean, std::vector<float>& running_var,
                             Tensor& y, BnCache& cache);
void batchnorm_forward_eval(const Tensor& x, const std::vector<float>& gamma,
                            const std::vector<float>& beta, float eps,
                            const std::vector<float>& running_mean,
                            const std::vector<float>& running_var, Tensor& y);
void batchnorm_backward(const Tensor& dy, const BnCache& cache, const std::vector<float>& gamma,
                        Tensor& dx, std::vector<float>& dgamma, std::vector<float>& dbeta);

void relu_forward(const Tensor& x, Tensor& y);
void relu_backward(const Tensor& x, const Tensor& dy, Tensor& dx);

// 2x2 / stride 2, floor semantics, first-maximum tie break.
void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<int>& argmax);
void maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax, Tensor& dx);

void gap_forward(const Tensor& x, Tensor& y);
void gap_backward(const Tensor& dy, Tensor& dx);

// x (N,IN,1,1), w (F,IN,1,1), y (N,F,1,1).
void linear_forward(const Tensor& x, const Tensor& w, const std::vector<float>& bias, Tensor& y);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                     std::vector<float>& db);

struct SoftmaxCE {
  double loss = 0.0;
  Tensor probs;    // (N,K,1,1)
  Tensor dlogits;  // (N,K,1,1), gradient of the batch-mean loss
};

SoftmaxCE softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_rows(const Tensor& logits);

}  // namespace fqln
