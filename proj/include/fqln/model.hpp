#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fqln/layers.hpp"
#include "fqln/rng.hpp"
#include "fqln/tensor.hpp"

namespace fqln {

enum class LayerKind { Conv2d, BatchNorm, Relu, MaxPool2, GlobalAvgPool, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  int channels = 0;  // conv: output channels; linear: output features
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

struct ModelConfig {
  std::string arch = "tiny_cnn";
  int in_c = 1, in_h = 32, in_w = 32;
  int num_classes = 10;
  std::vector<LayerSpec> layers;
  // Index of the conv layer whose output feeds the smoothness penalty.
  int tv_tap = 0;
};

// conv(3x3, 16) -> bn -> relu -> pool -> conv(3x3, 32) -> bn -> relu -> pool
// -> gap -> linear(num_classes); tap picks which conv output is penalised
// (0 = first conv, 1 = second conv).
ModelConfig tiny_cnn_config(int in_c, int in_h, int in_w, int num_classes, int tap = 0);

struct Layer {
  LayerSpec spec;
  std::string name;  // parameterised layers only: conv1, bn1, ..., fc1
  Shape4 in_shape, out_shape;

  Tensor w, dw;
  std::vector<float> b, db;
  std::vector<float> gamma, beta, dgamma, dbeta;
  std::vector<float> running_mean, running_var;
  float bn_eps = 1e-5f;
  float bn_momentum = 0.1f;
};

struct Model {
  ModelConfig config;
  std::vector<Layer> layers;

  int tap_layer_index() const;  // index into layers of the tapped conv
};

// Builds the layer chain, validates shapes, assigns parameter names. Weights
// start at zero; call init_model for a trainable start.
Model build_model(const ModelConfig& cfg);

// Kaiming-normal fan-in init for conv/linear weights, zero biases, identity
// batch norm. Draws come from `stream` in declaration order.
void init_model(Model& model, RngStream& stream);

struct LayerCache {
  Tensor input;  // stored for layers whose backward needs it
  BnCache bn;
  std::vector<int> argmax;
};

struct ForwardTrace {
  std::vector<LayerCache> layers;
  Tensor logits;
  Tensor tap_output;  // tapped conv output, kept for the smoothness penalty
  bool train_mode = false;
  Shape4 input_shape;
};

// mode: train updates BN running stats and fills the trace for backward;
// eval uses running stats and needs no trace.
Tensor model_forward(Model& model, const Tensor& x, bool train, ForwardTrace* trace);

// Convenience eval-mode forward of layers [0, upto). upto = -1 runs all.
Tensor forward_prefix_eval(const Model& model, const Tensor& x, int upto);

// Eval-mode feature maps at the tapped conv output.
Tensor model_tap_features(const Model& model, const Tensor& x);

// Backpropagates dlogits through the trace, overwriting layer gradients.
// When tap_extra_grad is given it is added to the upstream gradient of the
// tapped conv output (the smoothness penalty path).
void model_backward(Model& model, const ForwardTrace& trace, const Tensor& dlogits,
                    const Tensor* tap_extra_grad = nullptr);

// Flat views over all trainable parameters in declaration order.
struct ParamRef {
  float* value = nullptr;
  float* grad = nullptr;
  std::size_t size = 0;
  std::string name;
};
std::vector<ParamRef> model_params(Model& model);

std::int64_t model_param_count(const Model& model);

}  // namespace fqln
