#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fqln/augmix.hpp"
#include "fqln/dataset.hpp"
#include "fqln/model.hpp"

namespace fqln {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool augmix = true;
  AugMixConfig augmix_cfg;
  double jsd_weight = 12.0;
  double tv_lambda = 0.0;  // 0 disables the smoothness penalty
};

struct TrainLogRow {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0, ce = 0.0, jsd = 0.0, tv = 0.0;
  double val_error = 100.0;
};

struct TrainResult {
  Model final_model;
  Model best_model;
  int best_epoch = 0;
  double best_val_error = 101.0;
  std::vector<TrainLogRow> log;
  bool diverged = false;
  std::string diverged_reason;  // set when optimisation hit non-finite values
};

// Per-parameter momentum buffers, created on first use.
struct Velocity {
  std::vector<std::vector<float>> v;
};

// Classical momentum: v = momentum * v - lr * grad; param += v.
// Throws TrainingDiverged on a non-finite gradient, leaving params untouched.
void sgd_step(Model& model, double lr, double momentum, Velocity& vel);

// Step decay: x0.1 after 50% of the epochs, x0.1 again after 75%.
double scheduled_lr(const TrainConfig& cfg, int epoch);

struct JsdResult {
  double loss = 0.0;
  Tensor dlogits_clean, dlogits_aug1, dlogits_aug2;
};

// Jensen-Shannon consistency across the three posteriors,
//   L = (1/3N) sum_rows sum_views KL(p_view || M),  M = mean of the views,
// with probabilities clamped at jsd_prob_floor() inside every log. Gradients
// are with respect to the logits.
JsdResult jsd_consistency(const Tensor& logits_clean, const Tensor& logits_aug1,
                          const Tensor& logits_aug2);

float jsd_prob_floor();

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& arch,
                  const TrainConfig& cfg);

enum class FinetuneBias { HighFrequency, LowFrequency, All };
FinetuneBias parse_bias(const std::string& name);
const char* bias_name(FinetuneBias bias);

struct FinetuneSpec {
  FinetuneBias bias = FinetuneBias::HighFrequency;
  int epochs = 15;
  double lr = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

// Continues training the base model with the augmentation pool swapped for
// the bias pool. The smoothness penalty stays on exactly when the base was
// trained with it (meta.tv_lambda in `base_extras`). epochs = 0 hands back
// the base model unchanged.
TrainResult finetune(const Model& base, const std::map<std::string, std::string>& base_extras,
                     const Dataset& train_set, const Dataset& val_set, const FinetuneSpec& spec);

// Re-estimates every BN layer's running statistics from unlabeled samples,
// in eval mode, adapting earlier layers before measuring later ones. The
// returned model differs from the input only in BN running stats.
Model adapt_bn(const Model& model, const std::vector<Image>& samples, int batch_size = 256);

// Provenance entries recorded into checkpoints saved after training.
std::map<std::string, std::string> train_extras(const TrainConfig& cfg);
std::map<std::string, std::string> finetune_extras(const FinetuneSpec& spec,
                                                   double inherited_tv_lambda);

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace fqln
