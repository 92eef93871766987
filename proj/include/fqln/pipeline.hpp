#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fqln/eval.hpp"

namespace fqln {

// One `repro` run: train the model family, fine-tune the frequency experts,
// evaluate everything on the corruption suite, and write checkpoints,
// reports, and a summary under out_dir. Every byte written (apart from
// timings) is a pure function of this config.
struct ReproConfig {
  std::string out_dir;

  // data: synthetic by default, or an IDX pair when idx_images is set
  int train_n = 10000;
  int val_n = 2000;
  int image_size = 32;
  int classes = 10;
  std::uint64_t data_seed = 42;
  std::string idx_images, idx_labels;

  // model family
  std::vector<std::uint64_t> seeds = {101, 102, 103};
  int epochs = 3;
  int ft_epochs = 1;
  double lr = 0.05;
  double ft_lr = 1e-3;
  int batch_size = 64;
  double tv_lambda = 1e-5;
  double jsd_weight = 12.0;

  std::uint64_t eval_seed = 777;
  int eval_batch = 256;

  // reuse checkpoints and reports already present in out_dir when their
  // recorded config matches; off by default so runs start cold
  bool reuse = false;
};

struct SeedCheck {
  std::uint64_t seed = 0;
  bool pass = false;
  std::string detail;
};

struct PatternCheck {
  int id = 0;          // numbering follows the summary table
  std::string name;
  bool pass = false;
  std::string detail;  // the numbers the verdict was computed from
  std::vector<SeedCheck> per_seed;
};

struct ReproSummary {
  std::vector<PatternCheck> checks;
  // wall-clock of the base-vs-TV segment and of the whole run; carried over
  // from the last cold run when reuse kicked in, -1 when unknown
  double base_vs_tv_seconds = -1.0;
  double total_seconds = -1.0;
  bool cold = true;  // false when any cached artifact was reused

  const PatternCheck* find(const std::string& name) const;
};

ReproSummary run_repro(const ReproConfig& cfg, std::ostream* log);

// Serialized forms written into out_dir (summary.json / summary.txt).
std::string summary_json(const ReproSummary& summary, const ReproConfig& cfg);
std::string summary_text(const ReproSummary& summary);

}  // namespace fqln
