#include "fqln/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fqln/layers.hpp"
#include "fqln/version.hpp"

namespace fqln {

namespace {

Tensor pack_images(const std::vector<Image>& images, int start, int b) {
  const Image& first = images[static_cast<size_t>(start)];
  Tensor x(b, first.c, first.h, first.w);
  const long img_len = first.numel();
  for (int i = 0; i < b; ++i) {
    const Image& img = images[static_cast<size_t>(start + i)];
    if (img.c != first.c || img.h != first.h || img.w != first.w)
      throw ShapeError("predict_probs: images disagree in shape");
    std::copy(img.data.begin(), img.data.end(), x.data() + static_cast<long>(i) * img_len);
  }
  return x;
}

}  // namespace

std::vector<Image> corrupted_images(const Dataset& ds, CorruptionKind kind, int severity,
                                    std::uint64_t eval_seed) {
  corruption_param(kind, severity);  // validates severity before the parallel region
  std::vector<Image> out(ds.images.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(ds.images.size()); ++i) {
    RngStream stream = eval_corruption_stream(eval_seed, kind, severity, i);
    out[static_cast<size_t>(i)] =
        apply_corruption(ds.images[static_cast<size_t>(i)], {kind, severity}, stream);
  }
  return out;
}

ProbMatrix predict_probs(const Model& model, const std::vector<Image>& images, int batch) {
  if (images.empty()) throw InvalidParameter("predict_probs: no images");
  if (batch < 1) throw InvalidParameter("predict_probs: batch size must be positive");
  const int n = static_cast<int>(images.size());
  ProbMatrix out;
  out.n = n;
  out.k = model.config.num_classes;
  out.p.assign(static_cast<size_t>(n) * out.k, 0.0f);
  Model& m = const_cast<Model&>(model);  // eval forward leaves the model untouched
  for (int start = 0; start < n; start += batch) {
    const int b = std::min(batch, n - start);
    Tensor x = pack_images(images, start, b);
    Tensor logits = model_forward(m, x, false, nullptr);
    Tensor probs = softmax_rows(logits);
    std::copy(probs.data(), probs.data() + static_cast<long>(b) * out.k,
              out.p.data() + static_cast<size_t>(start) * out.k);
  }
  return out;
}

ProbMatrix mean_probs(const std::vector<const ProbMatrix*>& members) {
  if (members.empty()) throw InvalidParameter("mean_probs: no members");
  const ProbMatrix& first = *members[0];
  for (const ProbMatrix* m : members)
    if (m->n != first.n || m->k != first.k)
      throw ShapeError("mean_probs: member shapes disagree");
  ProbMatrix out;
  out.n = first.n;
  out.k = first.k;
  out.p.resize(first.p.size());
  const double inv = 1.0 / static_cast<double>(members.size());
  for (size_t i = 0; i < out.p.size(); ++i) {
    double acc = 0.0;
    for (const ProbMatrix* m : members) acc += m->p[i];
    out.p[i] = static_cast<float>(acc * inv);
  }
  return out;
}

double error_from_probs(const ProbMatrix& probs, const std::vector<int>& labels) {
  if (probs.n != static_cast<int>(labels.size()))
    throw ShapeError("error_from_probs: row count does not match label count");
  if (probs.n == 0) throw InvalidParameter("error_from_probs: empty probabilities");
  long wrong = 0;
  for (int r = 0; r < probs.n; ++r) {
    const float* row = probs.row(r);
    int best = 0;
    for (int j = 1; j < probs.k; ++j)
      if (row[j] > row[best]) best = j;
    if (best != labels[static_cast<size_t>(r)]) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / probs.n;
}

double clean_error(const Model& model, const Dataset& ds, int batch) {
  return error_from_probs(predict_probs(model, ds.images, batch), ds.labels);
}

namespace {

const ProbMatrix& cached_probs(const Model& model, const std::vector<Image>& images,
                               CorruptionKind kind, int severity, int batch, ProbCache* cache,
                               ProbMatrix& scratch) {
  if (!cache) {
    scratch = predict_probs(model, images, batch);
    return scratch;
  }
  const auto key = std::make_tuple(static_cast<const Model*>(&model),
                                   severity == 0 ? -1 : static_cast<int>(kind), severity);
  auto it = cache->probs.find(key);
  if (it == cache->probs.end())
    it = cache->probs.emplace(key, predict_probs(model, images, batch)).first;
  return it->second;
}

ProbMatrix ensemble_probs(const ModelList& members, const std::vector<Image>& images,
                          CorruptionKind kind, int severity, int batch, ProbCache* cache) {
  std::vector<ProbMatrix> scratch(members.size());
  std::vector<const ProbMatrix*> rows;
  rows.reserve(members.size());
  for (size_t i = 0; i < members.size(); ++i)
    rows.push_back(&cached_probs(*members[i], images, kind, severity, batch, cache,
                                 scratch[i]));
  return mean_probs(rows);
}

}  // namespace

EvalReport evaluate(const ModelList& members, const Dataset& ds,
                    const std::vector<CorruptionKind>& kinds, std::uint64_t eval_seed,
                    const std::string& label, const EvalReport* reference, int batch,
                    ProbCache* cache) {
  if (members.empty()) throw InvalidParameter("evaluate: no models");
  for (const Model* m : members)
    if (!m) throw InvalidParameter("evaluate: null model");
  if (ds.images.empty()) throw InvalidParameter("evaluate: empty dataset");

  EvalReport rep;
  rep.label = label;
  rep.dataset = ds.name;
  rep.num_images = static_cast<int>(ds.images.size());
  rep.members = static_cast<int>(members.size());
  rep.eval_seed = eval_seed;

  rep.clean_err = error_from_probs(
      ensemble_probs(members, ds.images, CorruptionKind::GaussianNoise, 0, batch, cache),
      ds.labels);

  std::vector<CorruptionKind> sorted_kinds = kinds;
  std::sort(sorted_kinds.begin(), sorted_kinds.end(),
            [](CorruptionKind a, CorruptionKind b) {
              return std::string(corruption_name(a)) < corruption_name(b);
            });
  for (CorruptionKind kind : sorted_kinds) {
    CorruptionError ce;
    ce.kind = kind;
    double acc = 0.0;
    for (int severity = 1; severity <= kNumSeverities; ++severity) {
      const std::vector<Image> images = corrupted_images(ds, kind, severity, eval_seed);
      const double err = error_from_probs(
          ensemble_probs(members, images, kind, severity, batch, cache), ds.labels);
      ce.severity_error[static_cast<size_t>(severity - 1)] = err;
      acc += err;
    }
    ce.uce = acc / kNumSeverities;
    rep.kinds.push_back(ce);
  }

  if (reference) {
    rep.normalized = true;
    rep.reference_label = reference->label;
    double acc = 0.0;
    for (const CorruptionError& ce : rep.kinds) {
      const CorruptionError* ref = nullptr;
      for (const CorruptionError& rc : reference->kinds)
        if (rc.kind == ce.kind) ref = &rc;
      if (!ref)
        throw NormalizationError(std::string("reference report lacks ") +
                                 corruption_name(ce.kind));
      if (ref->uce <= 0.0)
        throw NormalizationError(std::string("reference uCE is zero for ") +
                                 corruption_name(ce.kind));
      acc += 100.0 * ce.uce / ref->uce;
    }
    rep.mce = rep.kinds.empty() ? 0.0 : acc / rep.kinds.size();
  } else {
    double acc = 0.0;
    for (const CorruptionError& ce : rep.kinds) acc += ce.uce;
    rep.mce = rep.kinds.empty() ? 0.0 : acc / rep.kinds.size();
  }
  return rep;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["tool_version"] = kToolVersion;
  j["rng_algorithm"] = kRngAlgorithm;
  j["label"] = report.label;
  j["dataset"] = report.dataset;
  j["num_images"] = report.num_images;
  j["members"] = report.members;
  j["eval_seed"] = report.eval_seed;
  j["clean_error"] = report.clean_err;
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (const CorruptionError& ce : report.kinds) {
    nlohmann::ordered_json k;
    k["severity_error"] = ce.severity_error;
    k["uce"] = ce.uce;
    kinds[corruption_name(ce.kind)] = k;
  }
  j["corruptions"] = kinds;
  j["mce"] = report.mce;
  j["normalized"] = report.normalized;
  if (report.normalized) j["reference_label"] = report.reference_label;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != kReportSchema)
      throw FormatError("unsupported report schema: " + j["schema"].dump());
    EvalReport rep;
    rep.label = j.at("label").get<std::string>();
    rep.dataset = j.at("dataset").get<std::string>();
    rep.num_images = j.at("num_images").get<int>();
    rep.members = j.at("members").get<int>();
    rep.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    rep.clean_err = j.at("clean_error").get<double>();
    for (const auto& [name, body] : j.at("corruptions").items()) {
      CorruptionError ce;
      ce.kind = parse_corruption(name);
      const auto& sev = body.at("severity_error");
      if (sev.size() != ce.severity_error.size())
        throw FormatError("severity_error must list " +
                          std::to_string(ce.severity_error.size()) + " entries");
      for (size_t i = 0; i < ce.severity_error.size(); ++i)
        ce.severity_error[i] = sev[i].get<double>();
      ce.uce = body.at("uce").get<double>();
      rep.kinds.push_back(ce);
    }
    std::sort(rep.kinds.begin(), rep.kinds.end(),
              [](const CorruptionError& a, const CorruptionError& b) {
                return std::string(corruption_name(a.kind)) < corruption_name(b.kind);
              });
    rep.mce = j.at("mce").get<double>();
    rep.normalized = j.at("normalized").get<bool>();
    if (rep.normalized) rep.reference_label = j.at("reference_label").get<std::string>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string report_text(const EvalReport& report) {
  std::ostringstream out;
  char line[256];
  out << "model: " << report.label << "  dataset: " << report.dataset << " ("
      << report.num_images << " images, " << report.members
      << (report.members == 1 ? " member)\n" : " members)\n");
  std::snprintf(line, sizeof line, "clean error: %.2f%%\n", report.clean_err);
  out << line;
  out << "corruption        s1     s2     s3     s4     s5    uCE\n";
  for (const CorruptionError& ce : report.kinds) {
    std::snprintf(line, sizeof line, "%-14s", corruption_name(ce.kind));
    out << line;
    for (double e : ce.severity_error) {
      std::snprintf(line, sizeof line, " %6.2f", e);
      out << line;
    }
    std::snprintf(line, sizeof line, " %6.2f\n", ce.uce);
    out << line;
  }
  if (report.normalized)
    std::snprintf(line, sizeof line, "mCE (vs %s): %.2f\n", report.reference_label.c_str(),
                  report.mce);
  else
    std::snprintf(line, sizeof line, "mCE: %.2f\n", report.mce);
  out << line;
  return out.str();
}

double report_diff_max(const EvalReport& a, const EvalReport& b) {
  if (a.kinds.size() != b.kinds.size())
    throw ConsistencyError("report_diff_max: reports cover different corruption sets");
  double d = std::fabs(a.clean_err - b.clean_err);
  d = std::max(d, std::fabs(a.mce - b.mce));
  for (size_t i = 0; i < a.kinds.size(); ++i) {
    if (a.kinds[i].kind != b.kinds[i].kind)
      throw ConsistencyError("report_diff_max: reports cover different corruption sets");
    d = std::max(d, std::fabs(a.kinds[i].uce - b.kinds[i].uce));
    for (size_t s = 0; s < a.kinds[i].severity_error.size(); ++s)
      d = std::max(d, std::fabs(a.kinds[i].severity_error[s] - b.kinds[i].severity_error[s]));
  }
  return d;
}

double feature_distance(const Model& model, const Dataset& ds, const CorruptionSpec& spec,
                        std::uint64_t eval_seed, int batch) {
  if (ds.images.empty()) throw InvalidParameter("feature_distance: empty dataset");
  if (batch < 1) throw InvalidParameter("feature_distance: batch size must be positive");
  const std::vector<Image> corrupted =
      corrupted_images(ds, spec.kind, spec.severity, eval_seed);
  const int n = static_cast<int>(ds.images.size());
  double acc = 0.0;
  for (int start = 0; start < n; start += batch) {
    const int b = std::min(batch, n - start);
    const Tensor clean_f = model_tap_features(model, pack_images(ds.images, start, b));
    const Tensor corr_f = model_tap_features(model, pack_images(corrupted, start, b));
    const long plane = clean_f.numel() / b;
    for (int i = 0; i < b; ++i) {
      double sq = 0.0;
      const float* pc = clean_f.data() + static_cast<long>(i) * plane;
      const float* pk = corr_f.data() + static_cast<long>(i) * plane;
      for (long q = 0; q < plane; ++q) {
        const double diff = static_cast<double>(pc[q]) - pk[q];
        sq += diff * diff;
      }
      acc += std::sqrt(sq);
    }
  }
  return acc / n;
}

}  // namespace fqln
