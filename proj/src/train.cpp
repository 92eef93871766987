#include "fqln/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fqln/eval.hpp"
#include "fqln/kv.hpp"
#include "fqln/layers.hpp"
#include "fqln/tv.hpp"
#include "fqln/version.hpp"

namespace fqln {

namespace {

constexpr std::uint64_t kInitTag = 0x1217ull;
constexpr std::uint64_t kShuffleTag = 0x5F0Full;
constexpr std::uint64_t kAugTag = 0xA06ull;
constexpr float kProbFloor = 1e-7f;

std::vector<float> snapshot_params(Model& model) {
  std::vector<float> flat;
  for (const ParamRef& p : model_params(model))
    flat.insert(flat.end(), p.value, p.value + p.size);
  return flat;
}

void restore_params(Model& model, const std::vector<float>& flat) {
  size_t off = 0;
  for (const ParamRef& p : model_params(model)) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + p.size), p.value);
    off += p.size;
  }
}

Tensor slice_rows(const Tensor& t, int r0, int r1) {
  const Shape4 s = t.shape();
  Tensor out(r1 - r0, s.c, s.h, s.w);
  const long row = static_cast<long>(s.c) * s.h * s.w;
  std::copy(t.data() + static_cast<long>(r0) * row, t.data() + static_cast<long>(r1) * row,
            out.data());
  return out;
}

void place_rows(Tensor& dst, const Tensor& src, int dst_row0, float scale, bool add) {
  const long row = static_cast<long>(dst.shape().c) * dst.shape().h * dst.shape().w;
  float* d = dst.data() + static_cast<long>(dst_row0) * row;
  const float* s = src.data();
  const long n = src.numel();
  for (long i = 0; i < n; ++i) d[i] = (add ? d[i] : 0.0f) + scale * s[i];
}

}  // namespace

void sgd_step(Model& model, double lr, double momentum, Velocity& vel) {
  auto params = model_params(model);
  if (vel.v.empty()) {
    vel.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) vel.v[i].assign(params[i].size, 0.0f);
  }
  if (vel.v.size() != params.size())
    throw ConsistencyError("sgd_step: velocity does not match parameter layout");
  // validate first so a throw leaves the parameters untouched
  for (const ParamRef& p : params)
    for (size_t i = 0; i < p.size; ++i)
      if (!std::isfinite(p.grad[i]))
        throw TrainingDiverged("non-finite gradient in " + p.name);
  const float flr = static_cast<float>(lr), fmu = static_cast<float>(momentum);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamRef& p = params[pi];
    float* v = vel.v[pi].data();
    for (size_t i = 0; i < p.size; ++i) {
      v[i] = fmu * v[i] - flr * p.grad[i];
      p.value[i] += v[i];
    }
  }
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  if (epoch > cfg.epochs / 2) lr *= 0.1;
  if (epoch > (cfg.epochs * 3) / 4) lr *= 0.1;
  return lr;
}

float jsd_prob_floor() { return kProbFloor; }

JsdResult jsd_consistency(const Tensor& logits_clean, const Tensor& logits_aug1,
                          const Tensor& logits_aug2) {
  const Shape4 s = logits_clean.shape();
  require_shape(logits_aug1, s, "jsd logits");
  require_shape(logits_aug2, s, "jsd logits");
  if (s.h != 1 || s.w != 1) throw ShapeError("jsd_consistency: expects (N,K,1,1) logits");
  const int N = s.n, K = s.c;

  const Tensor p0 = softmax_rows(logits_clean);
  const Tensor p1 = softmax_rows(logits_aug1);
  const Tensor p2 = softmax_rows(logits_aug2);

  JsdResult out;
  out.dlogits_clean = Tensor(s);
  out.dlogits_aug1 = Tensor(s);
  out.dlogits_aug2 = Tensor(s);
  std::vector<double> row_loss(static_cast<size_t>(N), 0.0);

  const Tensor* probs[3] = {&p0, &p1, &p2};
  Tensor* grads[3] = {&out.dlogits_clean, &out.dlogits_aug1, &out.dlogits_aug2};

#pragma omp parallel for schedule(static)
  for (int r = 0; r < N; ++r) {
    const float* pr[3];
    for (int v = 0; v < 3; ++v) pr[v] = probs[v]->data() + static_cast<size_t>(r) * K;
    std::vector<double> gp(static_cast<size_t>(K));
    for (int v = 0; v < 3; ++v) {
      double dot = 0.0;
      for (int j = 0; j < K; ++j) {
        const double m = std::max(
            (static_cast<double>(pr[0][j]) + pr[1][j] + pr[2][j]) / 3.0,
            static_cast<double>(kProbFloor));
        const double p = std::max(static_cast<double>(pr[v][j]),
                                  static_cast<double>(kProbFloor));
        const double diff = std::log(p) - std::log(m);
        gp[static_cast<size_t>(j)] = diff / (3.0 * N);
        dot += gp[static_cast<size_t>(j)] * pr[v][j];
        row_loss[static_cast<size_t>(r)] += p * diff / 3.0;
      }
      float* g = grads[v]->data() + static_cast<size_t>(r) * K;
      for (int j = 0; j < K; ++j)
        g[j] = static_cast<float>(pr[v][j] * (gp[static_cast<size_t>(j)] - dot));
    }
  }
  double total = 0.0;
  for (double v : row_loss) total += v;
  out.loss = total / N;
  return out;
}

namespace {

struct BatchTensors {
  Tensor x;                 // (rows, C, H, W): clean block then aug blocks
  std::vector<int> labels;  // size b (clean block only)
  int b = 0;                // images in the batch
};

BatchTensors assemble_batch(const Dataset& ds, const std::vector<int>& order, int start, int b,
                            const TrainConfig& cfg, int epoch) {
  const Image& first = ds.images[0];
  const int rows = cfg.augmix ? 3 * b : b;
  BatchTensors out;
  out.b = b;
  out.x = Tensor(rows, first.c, first.h, first.w);
  out.labels.resize(static_cast<size_t>(b));
  const long img_len = first.numel();

#pragma omp parallel for schedule(static)
  for (int i = 0; i < b; ++i) {
    const int idx = order[static_cast<size_t>(start + i)];
    const Image& img = ds.images[static_cast<size_t>(idx)];
    std::copy(img.data.begin(), img.data.end(), out.x.data() + static_cast<long>(i) * img_len);
    out.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(idx)];
    if (cfg.augmix) {
      for (int view = 0; view < 2; ++view) {
        RngStream st(derive_seed(cfg.seed, {kAugTag, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(idx),
                                            static_cast<std::uint64_t>(view)}));
        Image aug = augmix_compose(img, cfg.augmix_cfg, st);
        std::copy(aug.data.begin(), aug.data.end(),
                  out.x.data() + (static_cast<long>(view + 1) * b + i) * img_len);
      }
    }
  }
  return out;
}

TrainResult run_training(Model model, const Dataset& tr, const Dataset& val,
                         const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw InvalidParameter("train: epochs must be non-negative");
  if (cfg.batch_size < 1) throw InvalidParameter("train: batch size must be positive");
  if (!(cfg.lr > 0.0)) throw InvalidParameter("train: lr must be positive");
  if (tr.images.empty()) throw InvalidParameter("train: empty training set");
  for (const Image& img : tr.images)
    if (img.c != model.config.in_c || img.h != model.config.in_h || img.w != model.config.in_w)
      throw ShapeError("train: image does not match model input dimensions");
  for (int label : tr.labels)
    if (label < 0 || label >= model.config.num_classes)
      throw InvalidParameter("train: label out of range");

  TrainResult res;
  Velocity vel;
  const int n = static_cast<int>(tr.images.size());
  std::vector<float> last_good = snapshot_params(model);
  res.best_model = model;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr_e = scheduled_lr(cfg, epoch);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_stream(derive_seed(cfg.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_stream.next_index(i + 1))]);

    double sum_loss = 0.0, sum_ce = 0.0, sum_jsd = 0.0, sum_tv = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      const int rows = cfg.augmix ? 3 * b : b;
      if (rows < 2) continue;  // batch norm needs at least two samples

      BatchTensors batch = assemble_batch(tr, order, start, b, cfg, epoch);
      ForwardTrace trace;
      Tensor logits = model_forward(model, batch.x, true, &trace);

      double ce_loss = 0.0, jsd_loss = 0.0, tv_loss = 0.0;
      Tensor dlogits(logits.shape());
      if (cfg.augmix) {
        const Tensor lc = slice_rows(logits, 0, b);
        const Tensor l1 = slice_rows(logits, b, 2 * b);
        const Tensor l2 = slice_rows(logits, 2 * b, 3 * b);
        SoftmaxCE ce = softmax_cross_entropy(lc, batch.labels);
        JsdResult jsd = jsd_consistency(lc, l1, l2);
        ce_loss = ce.loss;
        jsd_loss = jsd.loss;
        const float w = static_cast<float>(cfg.jsd_weight);
        place_rows(dlogits, ce.dlogits, 0, 1.0f, false);
        place_rows(dlogits, jsd.dlogits_clean, 0, w, true);
        place_rows(dlogits, jsd.dlogits_aug1, b, w, false);
        place_rows(dlogits, jsd.dlogits_aug2, 2 * b, w, false);
      } else {
        SoftmaxCE ce = softmax_cross_entropy(logits, batch.labels);
        ce_loss = ce.loss;
        dlogits = ce.dlogits;
      }

      Tensor tap_grad;
      const Tensor* tap_grad_ptr = nullptr;
      if (cfg.tv_lambda > 0.0) {
        const Tensor tap_clean = cfg.augmix ? slice_rows(trace.tap_output, 0, b)
                                            : trace.tap_output;
        Tensor g(tap_clean.shape());
        tv_loss = tv_loss_batch(tap_clean, cfg.tv_lambda, g);
        tap_grad = Tensor(trace.tap_output.shape());
        place_rows(tap_grad, g, 0, 1.0f, false);
        tap_grad_ptr = &tap_grad;
      }

      const double total = ce_loss + cfg.jsd_weight * jsd_loss + tv_loss;
      if (!std::isfinite(total)) {
        restore_params(model, last_good);
        res.final_model = model;
        res.diverged = true;
        res.diverged_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches);
        return res;
      }

      model_backward(model, trace, dlogits, tap_grad_ptr);
      try {
        sgd_step(model, lr_e, cfg.momentum, vel);
      } catch (const TrainingDiverged& e) {
        restore_params(model, last_good);
        res.final_model = model;
        res.diverged = true;
        res.diverged_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        return res;
      }
      last_good = snapshot_params(model);
      sum_loss += total;
      sum_ce += ce_loss;
      sum_jsd += jsd_loss;
      sum_tv += tv_loss;
      ++batches;
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.lr = lr_e;
    if (batches > 0) {
      row.loss = sum_loss / batches;
      row.ce = sum_ce / batches;
      row.jsd = sum_jsd / batches;
      row.tv = sum_tv / batches;
    }
    row.val_error = val.images.empty() ? 100.0 : clean_error(model, val);
    res.log.push_back(row);
    if (row.val_error < res.best_val_error) {
      res.best_val_error = row.val_error;
      res.best_epoch = epoch;
      res.best_model = model;
    }
  }
  res.final_model = std::move(model);
  if (res.log.empty()) {
    res.best_model = res.final_model;
    res.best_val_error =
        val.images.empty() ? 100.0 : clean_error(res.final_model, val);
  }
  return res;
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& arch,
                  const TrainConfig& cfg) {
  Model model = build_model(arch);
  RngStream init_stream(derive_seed(cfg.seed, {kInitTag}));
  init_model(model, init_stream);
  return run_training(std::move(model), train_set, val_set, cfg);
}

FinetuneBias parse_bias(const std::string& name) {
  if (name == "hf") return FinetuneBias::HighFrequency;
  if (name == "lf") return FinetuneBias::LowFrequency;
  if (name == "all") return FinetuneBias::All;
  throw InvalidParameter("unknown bias: " + name + " (expected hf, lf, or all)");
}

const char* bias_name(FinetuneBias bias) {
  switch (bias) {
    case FinetuneBias::HighFrequency: return "hf";
    case FinetuneBias::LowFrequency: return "lf";
    case FinetuneBias::All: return "all";
  }
  throw InvalidParameter("unknown bias");
}

TrainResult finetune(const Model& base, const std::map<std::string, std::string>& base_extras,
                     const Dataset& train_set, const Dataset& val_set,
                     const FinetuneSpec& spec) {
  if (spec.epochs < 0) throw InvalidParameter("finetune: epochs must be non-negative");
  if (spec.epochs == 0) {
    TrainResult res;
    res.final_model = base;
    res.best_model = base;
    res.best_val_error = 0.0;
    return res;
  }
  TrainConfig cfg;
  cfg.epochs = spec.epochs;
  cfg.batch_size = spec.batch_size;
  cfg.lr = spec.lr;
  cfg.seed = spec.seed;
  cfg.augmix = true;
  switch (spec.bias) {
    case FinetuneBias::HighFrequency: cfg.augmix_cfg.op_list = hf_op_list(); break;
    case FinetuneBias::LowFrequency: cfg.augmix_cfg.op_list = lf_op_list(); break;
    case FinetuneBias::All: cfg.augmix_cfg.op_list = all_op_list(); break;
  }
  // The smoothness penalty carries over exactly when the base was trained
  // with it.
  if (auto it = base_extras.find("tv_lambda"); it != base_extras.end()) {
    try {
      cfg.tv_lambda = std::stod(it->second);
    } catch (const std::exception&) {
      throw FormatError("base checkpoint has a malformed tv_lambda: " + it->second);
    }
  }
  return run_training(base, train_set, val_set, cfg);
}

Model adapt_bn(const Model& model, const std::vector<Image>& samples, int batch_size) {
  if (samples.empty()) throw InvalidParameter("adapt_bn: no samples");
  if (batch_size < 1) throw InvalidParameter("adapt_bn: batch size must be positive");
  for (const Image& img : samples)
    if (img.c != model.config.in_c || img.h != model.config.in_h || img.w != model.config.in_w)
      throw ShapeError("adapt_bn: sample does not match model input dimensions");

  Model out = model;
  const int n = static_cast<int>(samples.size());
  for (size_t li = 0; li < out.layers.size(); ++li) {
    Layer& layer = out.layers[li];
    if (layer.spec.kind != LayerKind::BatchNorm) continue;
    const int C = static_cast<int>(layer.gamma.size());
    std::vector<double> sum(static_cast<size_t>(C), 0.0), sumsq(static_cast<size_t>(C), 0.0);
    const long hw = static_cast<long>(layer.in_shape.h) * layer.in_shape.w;
    for (int start = 0; start < n; start += batch_size) {
      const int b = std::min(batch_size, n - start);
      Tensor x(b, model.config.in_c, model.config.in_h, model.config.in_w);
      const long img_len = samples[0].numel();
      for (int i = 0; i < b; ++i)
        std::copy(samples[static_cast<size_t>(start + i)].data.begin(),
                  samples[static_cast<size_t>(start + i)].data.end(),
                  x.data() + static_cast<long>(i) * img_len);
      Tensor f = forward_prefix_eval(out, x, static_cast<int>(li));
#pragma omp parallel for schedule(static)
      for (int ic = 0; ic < C; ++ic) {
        double s = 0.0, sq = 0.0;
        for (int in = 0; in < b; ++in) {
          const float* p = f.plane(in, ic);
          for (long q = 0; q < hw; ++q) {
            s += p[q];
            sq += static_cast<double>(p[q]) * p[q];
          }
        }
        sum[static_cast<size_t>(ic)] += s;
        sumsq[static_cast<size_t>(ic)] += sq;
      }
    }
    const double m = static_cast<double>(n) * hw;
    for (int ic = 0; ic < C; ++ic) {
      const double mean = sum[static_cast<size_t>(ic)] / m;
      const double var = std::max(0.0, sumsq[static_cast<size_t>(ic)] / m - mean * mean);
      layer.running_mean[static_cast<size_t>(ic)] = static_cast<float>(mean);
      layer.running_var[static_cast<size_t>(ic)] = static_cast<float>(var);
    }
  }
  return out;
}

std::map<std::string, std::string> train_extras(const TrainConfig& cfg) {
  std::map<std::string, std::string> extras;
  extras["tool_version"] = kToolVersion;
  extras["rng_algorithm"] = kRngAlgorithm;
  extras["seed"] = std::to_string(cfg.seed);
  extras["epochs"] = std::to_string(cfg.epochs);
  extras["batch_size"] = std::to_string(cfg.batch_size);
  extras["lr"] = fmt_f64(cfg.lr);
  extras["momentum"] = fmt_f64(cfg.momentum);
  extras["augmix"] = cfg.augmix ? "1" : "0";
  extras["jsd_weight"] = fmt_f64(cfg.jsd_weight);
  if (cfg.tv_lambda > 0.0) extras["tv_lambda"] = fmt_f64(cfg.tv_lambda);
  return extras;
}

std::map<std::string, std::string> finetune_extras(const FinetuneSpec& spec,
                                                   double inherited_tv_lambda) {
  std::map<std::string, std::string> extras;
  extras["tool_version"] = kToolVersion;
  extras["rng_algorithm"] = kRngAlgorithm;
  extras["bias"] = bias_name(spec.bias);
  extras["epochs"] = std::to_string(spec.epochs);
  extras["batch_size"] = std::to_string(spec.batch_size);
  extras["lr"] = fmt_f64(spec.lr);
  extras["seed"] = std::to_string(spec.seed);
  if (inherited_tv_lambda > 0.0) extras["tv_lambda"] = fmt_f64(inherited_tv_lambda);
  return extras;
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "epoch,lr,loss,ce,jsd,tv,val_error\n";
  for (const TrainLogRow& r : log)
    out << r.epoch << "," << fmt_f64(r.lr) << "," << fmt_f64(r.loss) << "," << fmt_f64(r.ce)
        << "," << fmt_f64(r.jsd) << "," << fmt_f64(r.tv) << "," << fmt_f64(r.val_error) << "\n";
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace fqln
