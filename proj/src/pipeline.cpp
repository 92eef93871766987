#include "fqln/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fqln/checkpoint.hpp"
#include "fqln/kv.hpp"
#include "fqln/train.hpp"
#include "fqln/version.hpp"

namespace fqln {

namespace {

namespace fs = std::filesystem;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw FormatError("cannot write " + path.string());
}

double uce_of(const EvalReport& rep, CorruptionKind kind) {
  for (const CorruptionError& ce : rep.kinds)
    if (ce.kind == kind) return ce.uce;
  throw ConsistencyError(rep.label + " report lacks " + corruption_name(kind));
}

std::map<std::string, std::string> with_label(std::map<std::string, std::string> extras,
                                              const std::string& label) {
  extras["label"] = label;
  return extras;
}

// Trains (or, under cfg.reuse, reloads) every checkpoint of the run.
struct Zoo {
  const ReproConfig& cfg;
  std::ostream* log;
  fs::path ckpt_dir, log_dir;
  bool any_cache_hit = false;

  template <class Fn>
  Model obtain(const std::string& label, const ModelConfig& arch,
               const std::map<std::string, std::string>& extras, Fn trainer) {
    const fs::path path = ckpt_dir / (label + ".fqln");
    const std::string want = model_config_text(arch, extras);
    if (cfg.reuse && fs::exists(path)) {
      try {
        LoadedCheckpoint loaded = load_checkpoint(path.string());
        if (model_config_text(loaded.model.config, loaded.extras) == want) {
          any_cache_hit = true;
          if (log) *log << "[zoo] " << label << ": reused " << path.string() << "\n";
          return std::move(loaded.model);
        }
      } catch (const Error&) {
        // stale or unreadable checkpoint: fall through and retrain
      }
    }
    if (log) *log << "[zoo] " << label << ": training" << std::endl;
    TrainResult res = trainer();
    if (res.diverged) throw TrainingDiverged(label + ": " + res.diverged_reason);
    save_checkpoint(path.string(), res.final_model, extras);
    write_train_log((log_dir / (label + ".csv")).string(), res.log);
    if (log && !res.log.empty())
      *log << "[zoo] " << label << ": val error " << num(res.log.back().val_error) << "%"
           << std::endl;
    return std::move(res.final_model);
  }
};

const char* kTimingsFile = "timings.cfg";

}  // namespace

const PatternCheck* ReproSummary::find(const std::string& name) const {
  for (const PatternCheck& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ReproSummary run_repro(const ReproConfig& cfg, std::ostream* log) {
  if (cfg.out_dir.empty()) throw InvalidParameter("repro: out_dir is required");
  if (cfg.seeds.empty()) throw InvalidParameter("repro: at least one seed is required");
  if (cfg.epochs < 1) throw InvalidParameter("repro: epochs must be at least 1");
  if (cfg.ft_epochs < 0) throw InvalidParameter("repro: ft_epochs must be non-negative");
  if (cfg.val_n < 1) throw InvalidParameter("repro: val_n must be positive");

  Timer total_timer;
  const fs::path out(cfg.out_dir);
  const fs::path ckpt_dir = out / "ckpt", report_dir = out / "reports", log_dir = out / "logs";
  fs::create_directories(ckpt_dir);
  fs::create_directories(report_dir);
  fs::create_directories(log_dir);

  Dataset all = cfg.idx_images.empty()
                    ? synth_shapes(cfg.data_seed, cfg.train_n + cfg.val_n, cfg.image_size,
                                   cfg.classes)
                    : load_idx(cfg.idx_images, cfg.idx_labels);
  Dataset train_set, val_set;
  split_dataset(all, cfg.val_n, train_set, val_set);
  const Image& probe = val_set.images.at(0);
  const int classes = all.num_classes;
  if (log)
    *log << "[data] " << all.name << ": " << train_set.images.size() << " train / "
         << val_set.images.size() << " val, " << probe.c << "x" << probe.h << "x" << probe.w
         << ", " << classes << " classes" << std::endl;

  const ModelConfig arch_tap1 = tiny_cnn_config(probe.c, probe.h, probe.w, classes, 0);
  const ModelConfig arch_tap2 = tiny_cnn_config(probe.c, probe.h, probe.w, classes, 1);

  Zoo zoo{cfg, log, ckpt_dir, log_dir};
  std::map<std::string, Model> models;
  std::map<std::string, std::map<std::string, std::string>> extras_of;
  double base_vs_tv = 0.0;

  auto train_one = [&](const std::string& label, const ModelConfig& arch, bool augmix,
                       double tv_lambda, std::uint64_t seed, double* segment) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.seed = seed;
    tc.augmix = augmix;
    tc.jsd_weight = cfg.jsd_weight;
    tc.tv_lambda = tv_lambda;
    auto extras = with_label(train_extras(tc), label);
    Timer t;
    models.emplace(label, zoo.obtain(label, arch, extras,
                                     [&] { return train(train_set, val_set, arch, tc); }));
    if (segment) *segment += t.elapsed();
    extras_of[label] = std::move(extras);
  };

  auto finetune_one = [&](const std::string& label, const std::string& base_label,
                          FinetuneBias bias, std::uint64_t seed) {
    FinetuneSpec spec;
    spec.bias = bias;
    spec.epochs = cfg.ft_epochs;
    spec.lr = cfg.ft_lr;
    spec.batch_size = cfg.batch_size;
    spec.seed = derive_seed(seed, {0xF7ull});
    const auto& base_extras = extras_of.at(base_label);
    double inherited = 0.0;
    if (auto it = base_extras.find("tv_lambda"); it != base_extras.end())
      inherited = std::stod(it->second);
    auto extras = finetune_extras(spec, inherited);
    extras["label"] = label;
    extras["base"] = base_label;
    const Model& base = models.at(base_label);
    models.emplace(label, zoo.obtain(label, base.config, extras, [&] {
      return finetune(base, base_extras, train_set, val_set, spec);
    }));
    extras_of[label] = std::move(extras);
  };

  train_one("std", arch_tap1, false, 0.0, cfg.seeds[0], nullptr);
  for (std::uint64_t seed : cfg.seeds) {
    const std::string s = "_s" + std::to_string(seed);
    train_one("am" + s, arch_tap1, true, 0.0, seed, &base_vs_tv);
    train_one("amtv1" + s, arch_tap1, true, cfg.tv_lambda, seed, &base_vs_tv);
    train_one("amtv2" + s, arch_tap2, true, cfg.tv_lambda, seed, nullptr);
  }
  for (std::uint64_t seed : cfg.seeds) {
    const std::string s = "_s" + std::to_string(seed);
    finetune_one("hf" + s, "amtv1" + s, FinetuneBias::HighFrequency, seed);
    finetune_one("lf" + s, "am" + s, FinetuneBias::LowFrequency, seed);
  }

  // evaluation; member probabilities are shared across ensembles via the cache
  ProbCache cache;
  std::map<std::string, EvalReport> reports;
  const std::vector<CorruptionKind> suite(all_corruption_kinds().begin(),
                                          all_corruption_kinds().end());
  const std::vector<CorruptionKind> hf_pair{CorruptionKind::GaussianNoise,
                                            CorruptionKind::GaussianBlur};
  const std::vector<CorruptionKind> lf_trio{CorruptionKind::Contrast,
                                            CorruptionKind::Brightness, CorruptionKind::Fog};
  std::vector<CorruptionKind> base_kinds = hf_pair;
  base_kinds.insert(base_kinds.end(), lf_trio.begin(), lf_trio.end());

  auto eval_one = [&](const std::string& label, const ModelList& members,
                      const std::vector<CorruptionKind>& kinds, double* segment) {
    Timer t;
    EvalReport rep =
        evaluate(members, val_set, kinds, cfg.eval_seed, label, nullptr, cfg.eval_batch, &cache);
    if (segment) *segment += t.elapsed();
    write_text_file(report_dir / (label + ".json"), report_json(rep));
    if (log)
      *log << "[eval] " << label << ": clean " << num(rep.clean_err) << "%, mCE "
           << num(rep.mce) << std::endl;
    reports.emplace(label, std::move(rep));
  };

  eval_one("std", {&models.at("std")}, suite, nullptr);
  for (std::uint64_t seed : cfg.seeds) {
    const std::string s = "_s" + std::to_string(seed);
    eval_one("am" + s, {&models.at("am" + s)}, base_kinds, &base_vs_tv);
    eval_one("amtv1" + s, {&models.at("amtv1" + s)}, hf_pair, &base_vs_tv);
    eval_one("amtv2" + s, {&models.at("amtv2" + s)}, {CorruptionKind::GaussianNoise}, nullptr);
    eval_one("hf" + s, {&models.at("hf" + s)}, suite, nullptr);
    eval_one("lf" + s, {&models.at("lf" + s)}, suite, nullptr);
  }
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    const std::string s = "_s" + std::to_string(cfg.seeds[i]);
    const std::string partner = "_s" + std::to_string(cfg.seeds[(i + 1) % cfg.seeds.size()]);
    eval_one("rohl" + s, {&models.at("hf" + s), &models.at("lf" + s)}, suite, nullptr);
    eval_one("enshf" + s, {&models.at("hf" + s), &models.at("hf" + partner)}, suite, nullptr);
  }

  ReproSummary summary;

  // 1: feature-map smoothing translates into corruption gains over the
  // identically seeded base model
  {
    PatternCheck c{1, "tv_corruption_gain", false, "", {}};
    int passed = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string s = "_s" + std::to_string(seed);
      const EvalReport &base = reports.at("am" + s), &tv = reports.at("amtv1" + s);
      const double bn = uce_of(base, CorruptionKind::GaussianNoise);
      const double bb = uce_of(base, CorruptionKind::GaussianBlur);
      const double tn = uce_of(tv, CorruptionKind::GaussianNoise);
      const double tb = uce_of(tv, CorruptionKind::GaussianBlur);
      SeedCheck sc;
      sc.seed = seed;
      sc.pass = bn > 0.0 && bb > 0.0 && tn <= 0.85 * bn && tb <= 0.85 * bb &&
                tv.clean_err <= base.clean_err + 3.0;
      sc.detail = "noise uCE " + num(bn) + "->" + num(tn) + ", blur uCE " + num(bb) + "->" +
                  num(tb) + ", clean " + num(base.clean_err) + "->" + num(tv.clean_err);
      passed += sc.pass ? 1 : 0;
      c.per_seed.push_back(std::move(sc));
    }
    c.pass = 2 * passed >= static_cast<int>(cfg.seeds.size()) + 1;
    c.detail = std::to_string(passed) + "/" + std::to_string(cfg.seeds.size()) +
               " seeds show >=15% relative uCE gain on noise and blur with clean within +3";
    summary.checks.push_back(std::move(c));
  }

  // 2: the low-frequency fine-tune helps the low-frequency corruptions
  // without moving clean error
  {
    PatternCheck c{2, "lf_finetune_gain", false, "", {}};
    int passed = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string s = "_s" + std::to_string(seed);
      const EvalReport &base = reports.at("am" + s), &ft = reports.at("lf" + s);
      double b3 = 0.0, f3 = 0.0;
      for (CorruptionKind k : lf_trio) {
        b3 += uce_of(base, k) / 3.0;
        f3 += uce_of(ft, k) / 3.0;
      }
      SeedCheck sc;
      sc.seed = seed;
      sc.pass = b3 > 0.0 && f3 <= 0.9 * b3 && std::fabs(ft.clean_err - base.clean_err) <= 1.0;
      sc.detail = "lf-trio uCE " + num(b3) + "->" + num(f3) + ", clean " +
                  num(base.clean_err) + "->" + num(ft.clean_err);
      passed += sc.pass ? 1 : 0;
      c.per_seed.push_back(std::move(sc));
    }
    c.pass = 2 * passed >= static_cast<int>(cfg.seeds.size()) + 1;
    c.detail = std::to_string(passed) + "/" + std::to_string(cfg.seeds.size()) +
               " seeds show >=10% relative gain on contrast+brightness+fog with clean within 1";
    summary.checks.push_back(std::move(c));
  }

  // 3: the opposite-bias pair beats a same-bias pair of equal size
  {
    PatternCheck c{3, "rohl_vs_samebias", false, "", {}};
    int passed = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string s = "_s" + std::to_string(seed);
      const EvalReport &rohl = reports.at("rohl" + s), &ens = reports.at("enshf" + s);
      SeedCheck sc;
      sc.seed = seed;
      sc.pass = rohl.mce < ens.mce && rohl.clean_err <= ens.clean_err + 1.5;
      sc.detail = "mCE " + num(rohl.mce) + " vs " + num(ens.mce) + ", clean " +
                  num(rohl.clean_err) + " vs " + num(ens.clean_err);
      passed += sc.pass ? 1 : 0;
      c.per_seed.push_back(std::move(sc));
    }
    c.pass = 2 * passed >= static_cast<int>(cfg.seeds.size()) + 1;
    c.detail = std::to_string(passed) + "/" + std::to_string(cfg.seeds.size()) +
               " seeds have the mixed-bias pair strictly below the same-bias pair";
    summary.checks.push_back(std::move(c));
  }

  // 4: tapping the first conv beats tapping the second on noise
  {
    PatternCheck c{4, "tap_placement", false, "", {}};
    int passed = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const std::string s = "_s" + std::to_string(seed);
      const double u1 = uce_of(reports.at("amtv1" + s), CorruptionKind::GaussianNoise);
      const double u2 = uce_of(reports.at("amtv2" + s), CorruptionKind::GaussianNoise);
      SeedCheck sc;
      sc.seed = seed;
      sc.pass = u1 <= u2;
      sc.detail = "noise uCE tap1 " + num(u1) + " vs tap2 " + num(u2);
      passed += sc.pass ? 1 : 0;
      c.per_seed.push_back(std::move(sc));
    }
    c.pass = 2 * passed >= static_cast<int>(cfg.seeds.size()) + 1;
    c.detail = std::to_string(passed) + "/" + std::to_string(cfg.seeds.size()) +
               " seeds have first-conv tap at or below second-conv tap on noise uCE";
    summary.checks.push_back(std::move(c));
  }

  // 5: re-estimating BN statistics on each corrupted set lowers its error
  {
    PatternCheck c{5, "bn_adaptation", false, "", {}};
    const EvalReport& rep_std = reports.at("std");
    const Model& base = models.at("std");
    int improved = 0;
    std::string detail;
    for (CorruptionKind kind : suite) {
      std::vector<std::vector<Image>> per_sev;
      std::vector<Image> pooled;
      for (int sev = 1; sev <= kNumSeverities; ++sev) {
        per_sev.push_back(corrupted_images(val_set, kind, sev, cfg.eval_seed));
        pooled.insert(pooled.end(), per_sev.back().begin(), per_sev.back().end());
      }
      Model adapted = adapt_bn(base, pooled, cfg.eval_batch);
      double after = 0.0;
      for (const std::vector<Image>& imgs : per_sev)
        after += error_from_probs(predict_probs(adapted, imgs, cfg.eval_batch),
                                  val_set.labels) /
                 kNumSeverities;
      const double before = uce_of(rep_std, kind);
      if (after < before) ++improved;
      if (!detail.empty()) detail += ", ";
      detail += std::string(corruption_name(kind)) + " " + num(before) + "->" + num(after);
      if (log)
        *log << "[adapt] " << corruption_name(kind) << ": uCE " << num(before) << " -> "
             << num(after) << std::endl;
    }
    c.pass = improved >= 6;
    c.detail = std::to_string(improved) + "/" + std::to_string(suite.size()) +
               " kinds improved (" + detail + ")";
    summary.checks.push_back(std::move(c));
  }

  // 6: the TV model's tapped features move less under noise
  {
    PatternCheck c{6, "feature_stability", false, "", {}};
    const CorruptionSpec spec{CorruptionKind::GaussianNoise, 3};
    for (std::uint64_t seed : cfg.seeds) {
      const std::string s = "_s" + std::to_string(seed);
      const double fd_base =
          feature_distance(models.at("am" + s), val_set, spec, cfg.eval_seed, cfg.eval_batch);
      const double fd_tv = feature_distance(models.at("amtv1" + s), val_set, spec,
                                            cfg.eval_seed, cfg.eval_batch);
      SeedCheck sc;
      sc.seed = seed;
      sc.pass = fd_tv < fd_base;
      sc.detail = "feature distance " + num(fd_tv) + " vs base " + num(fd_base);
      c.per_seed.push_back(std::move(sc));
    }
    c.pass = c.per_seed.at(0).pass;  // first seed carries the verdict
    c.detail = "seed " + std::to_string(cfg.seeds[0]) + ": " + c.per_seed.at(0).detail;
    summary.checks.push_back(std::move(c));
  }

  summary.cold = !zoo.any_cache_hit;
  if (summary.cold) {
    summary.base_vs_tv_seconds = base_vs_tv;
    summary.total_seconds = total_timer.elapsed();
    std::map<std::string, std::string> t;
    t["base_vs_tv_seconds"] = fmt_f64(summary.base_vs_tv_seconds);
    t["total_seconds"] = fmt_f64(summary.total_seconds);
    write_text_file(out / kTimingsFile, render_kv(t));
  } else if (fs::exists(out / kTimingsFile)) {
    const auto t = load_kv_file((out / kTimingsFile).string());
    if (auto it = t.find("base_vs_tv_seconds"); it != t.end())
      summary.base_vs_tv_seconds = std::stod(it->second);
    if (auto it = t.find("total_seconds"); it != t.end())
      summary.total_seconds = std::stod(it->second);
  }

  write_text_file(out / "summary.json", summary_json(summary, cfg));
  write_text_file(out / "summary.txt", summary_text(summary));
  if (log) *log << summary_text(summary) << std::flush;
  return summary;
}

std::string summary_json(const ReproSummary& summary, const ReproConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = "summary_v1";
  j["tool_version"] = kToolVersion;
  nlohmann::ordered_json c;
  c["train_n"] = cfg.train_n;
  c["val_n"] = cfg.val_n;
  c["image_size"] = cfg.image_size;
  c["classes"] = cfg.classes;
  c["data_seed"] = cfg.data_seed;
  c["dataset"] = cfg.idx_images.empty() ? "synth" : cfg.idx_images;
  c["seeds"] = cfg.seeds;
  c["epochs"] = cfg.epochs;
  c["ft_epochs"] = cfg.ft_epochs;
  c["lr"] = cfg.lr;
  c["ft_lr"] = cfg.ft_lr;
  c["batch_size"] = cfg.batch_size;
  c["tv_lambda"] = cfg.tv_lambda;
  c["jsd_weight"] = cfg.jsd_weight;
  c["eval_seed"] = cfg.eval_seed;
  j["config"] = c;
  j["cold"] = summary.cold;
  j["base_vs_tv_seconds"] = summary.base_vs_tv_seconds;
  j["total_seconds"] = summary.total_seconds;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const PatternCheck& pc : summary.checks) {
    nlohmann::ordered_json e;
    e["id"] = pc.id;
    e["name"] = pc.name;
    e["pass"] = pc.pass;
    e["detail"] = pc.detail;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (const SeedCheck& sc : pc.per_seed) {
      nlohmann::ordered_json se;
      se["seed"] = sc.seed;
      se["pass"] = sc.pass;
      se["detail"] = sc.detail;
      seeds.push_back(se);
    }
    e["per_seed"] = seeds;
    checks.push_back(e);
  }
  j["checks"] = checks;
  return j.dump(2) + "\n";
}

std::string summary_text(const ReproSummary& summary) {
  std::ostringstream out;
  for (const PatternCheck& pc : summary.checks) {
    out << "check " << pc.id << " " << pc.name << ": " << (pc.pass ? "pass" : "FAIL") << "  ("
        << pc.detail << ")\n";
    for (const SeedCheck& sc : pc.per_seed)
      out << "  seed " << sc.seed << ": " << (sc.pass ? "pass" : "FAIL") << "  " << sc.detail
          << "\n";
  }
  if (summary.total_seconds >= 0.0)
    out << "timing: base-vs-tv segment " << num(summary.base_vs_tv_seconds) << " s, total "
        << num(summary.total_seconds) << " s" << (summary.cold ? "" : " (from last cold run)")
        << "\n";
  return out.str();
}

}  // namespace fqln
