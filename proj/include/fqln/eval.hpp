#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fqln/corruptions.hpp"
#include "fqln/dataset.hpp"
#include "fqln/model.hpp"

namespace fqln {

// Row-major per-image class probabilities.
struct ProbMatrix {
  int n = 0, k = 0;
  std::vector<float> p;

  const float* row(int r) const { return p.data() + static_cast<size_t>(r) * k; }
  float* row(int r) { return p.data() + static_cast<size_t>(r) * k; }
};

// An ensemble is a list of member models; predictions average the members'
// softmax outputs. A single model is a one-member ensemble.
using ModelList = std::vector<const Model*>;

std::vector<Image> corrupted_images(const Dataset& ds, CorruptionKind kind, int severity,
                                    std::uint64_t eval_seed);

ProbMatrix predict_probs(const Model& model, const std::vector<Image>& images, int batch = 256);

ProbMatrix mean_probs(const std::vector<const ProbMatrix*>& members);

// Top-1 error in percent; argmax ties resolve to the lowest class index.
double error_from_probs(const ProbMatrix& probs, const std::vector<int>& labels);

double clean_error(const Model& model, const Dataset& ds, int batch = 256);

struct CorruptionError {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  std::array<double, 5> severity_error{};
  double uce = 0.0;  // mean over the five severities, percent
};

struct EvalReport {
  std::string label;
  std::string dataset;
  int num_images = 0;
  int members = 1;
  std::uint64_t eval_seed = 0;
  double clean_err = 0.0;
  std::vector<CorruptionError> kinds;  // sorted by kind name
  double mce = 0.0;
  bool normalized = false;
  std::string reference_label;
};

// Optional memo: (member, kind, severity) -> probabilities, severity 0 keyed
// as the clean pass. Lets a pipeline evaluate each member once per corrupted
// set and reuse the rows across ensembles. Results are identical with or
// without the cache.
struct ProbCache {
  std::map<std::tuple<const Model*, int, int>, ProbMatrix> probs;
};

// Full evaluation: clean error, per-kind severity sweep with uCE, and mCE.
// With `reference`, mCE is normalised: mean over kinds of
// 100 * uCE / uCE_reference(kind); the reference must cover every kind with a
// non-zero uCE. Without it, mCE is the plain mean of uCEs.
EvalReport evaluate(const ModelList& members, const Dataset& ds,
                    const std::vector<CorruptionKind>& kinds, std::uint64_t eval_seed,
                    const std::string& label, const EvalReport* reference = nullptr,
                    int batch = 256, ProbCache* cache = nullptr);

std::string report_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string report_text(const EvalReport& report);

// Largest absolute difference across all numeric fields of two reports;
// throws ConsistencyError when the reports cover different kinds.
double report_diff_max(const EvalReport& a, const EvalReport& b);

// Mean Frobenius distance between tapped feature maps of clean and corrupted
// inputs.
double feature_distance(const Model& model, const Dataset& ds, const CorruptionSpec& spec,
                        std::uint64_t eval_seed, int batch = 256);

}  // namespace fqln
