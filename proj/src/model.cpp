#include "fqln/model.hpp"

#include <cmath>

namespace fqln {

ModelConfig tiny_cnn_config(int in_c, int in_h, int in_w, int num_classes, int tap) {
  ModelConfig cfg;
  cfg.arch = "tiny_cnn";
  cfg.in_c = in_c;
  cfg.in_h = in_h;
  cfg.in_w = in_w;
  cfg.num_classes = num_classes;
  cfg.tv_tap = tap;
  cfg.layers = {
      {LayerKind::Conv2d, 16, 3, 1, 1}, {LayerKind::BatchNorm}, {LayerKind::Relu},
      {LayerKind::MaxPool2},            {LayerKind::Conv2d, 32, 3, 1, 1},
      {LayerKind::BatchNorm},           {LayerKind::Relu},
      {LayerKind::MaxPool2},            {LayerKind::GlobalAvgPool},
      {LayerKind::Linear, num_classes},
  };
  return cfg;
}

int Model::tap_layer_index() const {
  int conv_seen = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.kind == LayerKind::Conv2d) {
      if (conv_seen == config.tv_tap) return static_cast<int>(i);
      ++conv_seen;
    }
  }
  throw InvalidParameter("tv_tap " + std::to_string(config.tv_tap) +
                         " does not name a conv layer");
}

Model build_model(const ModelConfig& cfg) {
  if (cfg.layers.empty()) throw InvalidParameter("model config has no layers");
  if (cfg.num_classes < 2) throw InvalidParameter("model needs at least 2 classes");
  Model m;
  m.config = cfg;
  Shape4 cur{1, cfg.in_c, cfg.in_h, cfg.in_w};
  int conv_n = 0, bn_n = 0, fc_n = 0;
  for (const LayerSpec& spec : cfg.layers) {
    Layer layer;
    layer.spec = spec;
    layer.in_shape = cur;
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        if (spec.channels <= 0) throw InvalidParameter("conv layer needs output channels");
        layer.name = "conv" + std::to_string(++conv_n);
        layer.w = Tensor(spec.channels, cur.c, spec.kernel, spec.kernel);
        layer.dw = Tensor(layer.w.shape());
        layer.b.assign(static_cast<size_t>(spec.channels), 0.0f);
        layer.db.assign(static_cast<size_t>(spec.channels), 0.0f);
        cur = conv2d_out_shape(cur, layer.w.shape(), spec.stride, spec.pad);
        break;
      }
      case LayerKind::BatchNorm: {
        layer.name = "bn" + std::to_string(++bn_n);
        const size_t c = static_cast<size_t>(cur.c);
        layer.gamma.assign(c, 1.0f);
        layer.beta.assign(c, 0.0f);
        layer.dgamma.assign(c, 0.0f);
        layer.dbeta.assign(c, 0.0f);
        layer.running_mean.assign(c, 0.0f);
        layer.running_var.assign(c, 1.0f);
        break;
      }
      case LayerKind::Relu:
        break;
      case LayerKind::MaxPool2:
        if (cur.h < 2 || cur.w < 2) throw ShapeError("maxpool2: input too small");
        cur = Shape4{cur.n, cur.c, cur.h / 2, cur.w / 2};
        break;
      case LayerKind::GlobalAvgPool:
        cur = Shape4{cur.n, cur.c, 1, 1};
        break;
      case LayerKind::Linear: {
        if (spec.channels <= 0) throw InvalidParameter("linear layer needs output features");
        if (cur.h != 1 || cur.w != 1)
          throw ShapeError("linear layer expects (N,C,1,1) input, got " + cur.str());
        layer.name = "fc" + std::to_string(++fc_n);
        layer.w = Tensor(spec.channels, cur.c, 1, 1);
        layer.dw = Tensor(layer.w.shape());
        layer.b.assign(static_cast<size_t>(spec.channels), 0.0f);
        layer.db.assign(static_cast<size_t>(spec.channels), 0.0f);
        cur = Shape4{cur.n, spec.channels, 1, 1};
        break;
      }
    }
    layer.out_shape = cur;
    m.layers.push_back(std::move(layer));
  }
  if (cur.c != cfg.num_classes || cur.h != 1 || cur.w != 1)
    throw ShapeError("model output " + cur.str() + " does not produce " +
                     std::to_string(cfg.num_classes) + " class logits");
  m.tap_layer_index();  // validates the tap
  return m;
}

void init_model(Model& model, RngStream& stream) {
  for (Layer& layer : model.layers) {
    if (layer.spec.kind == LayerKind::Conv2d || layer.spec.kind == LayerKind::Linear) {
      const Shape4 ws = layer.w.shape();
      const long fan_in = static_cast<long>(ws.c) * ws.h * ws.w;
      const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
      auto draws = rng_gaussian(stream, static_cast<size_t>(layer.w.numel()), 0.0f, std);
      std::copy(draws.begin(), draws.end(), layer.w.data());
      std::fill(layer.b.begin(), layer.b.end(), 0.0f);
    }
  }
}

namespace {

Shape4 with_batch(Shape4 s, int n) {
  s.n = n;
  return s;
}

}  // namespace

Tensor model_forward(Model& model, const Tensor& x, bool train, ForwardTrace* trace) {
  const int N = x.shape().n;
  require_shape(x, with_batch(Shape4{0, model.config.in_c, model.config.in_h, model.config.in_w}, N),
                "model input");
  if (train && !trace) throw InvalidParameter("training forward needs a trace");
  const size_t tap = static_cast<size_t>(model.tap_layer_index());
  if (trace) {
    trace->layers.assign(model.layers.size(), LayerCache{});
    trace->train_mode = train;
    trace->input_shape = x.shape();
  }

  Tensor cur = x;
  for (size_t li = 0; li < model.layers.size(); ++li) {
    Layer& layer = model.layers[li];
    Tensor out(with_batch(layer.out_shape, N));
    switch (layer.spec.kind) {
      case LayerKind::Conv2d:
        conv2d_forward(cur, layer.w, layer.b, layer.spec.stride, layer.spec.pad, out);
        if (trace) trace->layers[li].input = cur;
        break;
      case LayerKind::BatchNorm:
        if (train) {
          batchnorm_forward_train(cur, layer.gamma, layer.beta, layer.bn_eps, layer.bn_momentum,
                                  layer.running_mean, layer.running_var, out,
                                  trace->layers[li].bn);
        } else {
          batchnorm_forward_eval(cur, layer.gamma, layer.beta, layer.bn_eps, layer.running_mean,
                                 layer.running_var, out);
        }
        break;
      case LayerKind::Relu:
        relu_forward(cur, out);
        if (trace) trace->layers[li].input = cur;
        break;
      case LayerKind::MaxPool2: {
        std::vector<int> argmax;
        maxpool2_forward(cur, out, argmax);
        if (trace) trace->layers[li].argmax = std::move(argmax);
        break;
      }
      case LayerKind::GlobalAvgPool:
        gap_forward(cur, out);
        break;
      case LayerKind::Linear:
        linear_forward(cur, layer.w, layer.b, out);
        if (trace) trace->layers[li].input = cur;
        break;
    }
    if (trace && li == tap) trace->tap_output = out;
    cur = std::move(out);
  }
  if (trace) trace->logits = cur;
  return cur;
}

Tensor forward_prefix_eval(const Model& model, const Tensor& x, int upto) {
  Model& m = const_cast<Model&>(model);  // eval forward leaves the model untouched
  const int N = x.shape().n;
  const size_t stop = upto < 0 ? m.layers.size() : static_cast<size_t>(upto);
  if (stop > m.layers.size()) throw InvalidParameter("forward_prefix_eval: upto out of range");
  Tensor cur = x;
  for (size_t li = 0; li < stop; ++li) {
    Layer& layer = m.layers[li];
    Tensor out(with_batch(layer.out_shape, N));
    switch (layer.spec.kind) {
      case LayerKind::Conv2d:
        conv2d_forward(cur, layer.w, layer.b, layer.spec.stride, layer.spec.pad, out);
        break;
      case LayerKind::BatchNorm:
        batchnorm_forward_eval(cur, layer.gamma, layer.beta, layer.bn_eps, layer.running_mean,
                               layer.running_var, out);
        break;
      case LayerKind::Relu:
        relu_forward(cur, out);
        break;
      case LayerKind::MaxPool2: {
        std::vector<int> argmax;
        maxpool2_forward(cur, out, argmax);
        break;
      }
      case LayerKind::GlobalAvgPool:
        gap_forward(cur, out);
        break;
      case LayerKind::Linear:
        linear_forward(cur, layer.w, layer.b, out);
        break;
    }
    cur = std::move(out);
  }
  return cur;
}

Tensor model_tap_features(const Model& model, const Tensor& x) {
  return forward_prefix_eval(model, x, model.tap_layer_index() + 1);
}

void model_backward(Model& model, const ForwardTrace& trace, const Tensor& dlogits,
                    const Tensor* tap_extra_grad) {
  if (!trace.train_mode) throw InvalidParameter("model_backward needs a training trace");
  if (trace.layers.size() != model.layers.size())
    throw ConsistencyError("trace does not match model layer count");
  const int N = trace.input_shape.n;
  const int tap = model.tap_layer_index();

  Tensor dy = dlogits;
  for (int li = static_cast<int>(model.layers.size()) - 1; li >= 0; --li) {
    Layer& layer = model.layers[static_cast<size_t>(li)];
    const LayerCache& cache = trace.layers[static_cast<size_t>(li)];
    if (li == tap && tap_extra_grad) {
      require_shape(*tap_extra_grad, dy.shape(), "tap gradient");
      float* d = dy.data();
      const float* e = tap_extra_grad->data();
      const long n = dy.numel();
      for (long i = 0; i < n; ++i) d[i] += e[i];
    }
    Tensor dx(with_batch(layer.in_shape, N));
    switch (layer.spec.kind) {
      case LayerKind::Conv2d:
        conv2d_backward(cache.input, layer.w, dy, layer.spec.stride, layer.spec.pad, dx, layer.dw,
                        layer.db);
        break;
      case LayerKind::BatchNorm:
        batchnorm_backward(dy, cache.bn, layer.gamma, dx, layer.dgamma, layer.dbeta);
        break;
      case LayerKind::Relu:
        relu_backward(cache.input, dy, dx);
        break;
      case LayerKind::MaxPool2:
        maxpool2_backward(dy, cache.argmax, dx);
        break;
      case LayerKind::GlobalAvgPool:
        gap_backward(dy, dx);
        break;
      case LayerKind::Linear:
        linear_backward(cache.input, layer.w, dy, dx, layer.dw, layer.db);
        break;
    }
    dy = std::move(dx);
  }
}

std::vector<ParamRef> model_params(Model& model) {
  std::vector<ParamRef> refs;
  for (Layer& layer : model.layers) {
    switch (layer.spec.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Linear:
        refs.push_back({layer.w.data(), layer.dw.data(), static_cast<size_t>(layer.w.numel()),
                        layer.name + ".weight"});
        refs.push_back({layer.b.data(), layer.db.data(), layer.b.size(), layer.name + ".bias"});
        break;
      case LayerKind::BatchNorm:
        refs.push_back({layer.gamma.data(), layer.dgamma.data(), layer.gamma.size(),
                        layer.name + ".gamma"});
        refs.push_back({layer.beta.data(), layer.dbeta.data(), layer.beta.size(),
                        layer.name + ".beta"});
        break;
      default:
        break;
    }
  }
  return refs;
}

std::int64_t model_param_count(const Model& model) {
  std::int64_t n = 0;
  for (const Layer& layer : model.layers) {
    n += layer.w.numel();
    n += static_cast<std::int64_t>(layer.b.size());
    n += static_cast<std::int64_t>(layer.gamma.size());
    n += static_cast<std::int64_t>(layer.beta.size());
  }
  return n;
}

}  // namespace fqln
