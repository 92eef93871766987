// Command line front end. Every subcommand resolves its flags (defaults,
// then --config file, then explicit flags), writes the resolved values as a
// manifest into --out-dir, and only then does work, so a run can always be
// replayed with `--config <out-dir>/manifest.cfg`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fqln/checkpoint.hpp"
#include "fqln/corruptions.hpp"
#include "fqln/dataset.hpp"
#include "fqln/eval.hpp"
#include "fqln/fourier.hpp"
#include "fqln/image_io.hpp"
#include "fqln/kv.hpp"
#include "fqln/pipeline.hpp"
#include "fqln/threads.hpp"
#include "fqln/train.hpp"
#include "fqln/version.hpp"

namespace fs = std::filesystem;
using namespace fqln;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      out.push_back(kv_trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(kv_trim(cur));
  for (const std::string& tok : out)
    if (tok.empty()) throw UsageError("empty entry in list: " + text);
  return out;
}

long to_long(const std::string& tok, const char* what) {
  try {
    size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("expected an integer for ") + what + ", got: " + tok);
  }
}

// --data forms: "synth:<n>,<size>,<classes>[,<seed>]" or "idx:<images>,<labels>"
Dataset load_data(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw UsageError("--data must be synth:<n>,<size>,<classes>[,<seed>] or "
                     "idx:<images>,<labels>");
  const std::string head = spec.substr(0, colon);
  const std::vector<std::string> parts = split_list(spec.substr(colon + 1));
  if (head == "synth") {
    if (parts.size() != 3 && parts.size() != 4)
      throw UsageError("synth data spec needs n,size,classes and an optional seed");
    const long n = to_long(parts[0], "synth n");
    const long size = to_long(parts[1], "synth size");
    const long classes = to_long(parts[2], "synth classes");
    const std::uint64_t seed =
        parts.size() == 4 ? static_cast<std::uint64_t>(to_long(parts[3], "synth seed")) : 42u;
    return synth_shapes(seed, static_cast<int>(n), static_cast<int>(size),
                        static_cast<int>(classes));
  }
  if (head == "idx") {
    if (parts.size() != 2) throw UsageError("idx data spec needs <images>,<labels>");
    return load_idx(parts[0], parts[1]);
  }
  throw UsageError("unknown data source: " + head);
}

std::vector<CorruptionKind> parse_kind_list(const std::string& text) {
  if (text == "all") {
    const auto& a = all_corruption_kinds();
    return {a.begin(), a.end()};
  }
  std::vector<CorruptionKind> kinds;
  for (const std::string& tok : split_list(text)) {
    try {
      kinds.push_back(parse_corruption(tok));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  return kinds;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& kv) {
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / "manifest.cfg";
  std::ofstream out(path, std::ios::binary);
  out << "# " << kToolName << " " << kToolVersion << "\n# command: " << command << "\n"
      << render_kv(kv);
  if (!out) throw FormatError("cannot write " + path.string());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw FormatError("cannot write " + path.string());
}

ModelConfig resolve_arch(const std::string& arch, const Dataset& ds, int tap) {
  if (ds.images.empty()) throw InvalidParameter("dataset has no images");
  const Image& probe = ds.images[0];
  if (arch == "tinycnn")
    return tiny_cnn_config(probe.c, probe.h, probe.w, ds.num_classes, tap);
  std::ifstream in(arch, std::ios::binary);
  if (!in) throw UsageError("--arch must be 'tinycnn' or a readable config file: " + arch);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model_config_text(text, nullptr);
}

// shared flag bundles ------------------------------------------------------

struct CommonOpts {
  std::string data = "synth:12000,32,10";
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& c, bool out_required = true) {
  cmd->add_option("--data", c.data,
                  "synth:<n>,<size>,<classes>[,<seed>] or idx:<images>,<labels>")
      ->capture_default_str();
  auto* o = cmd->add_option("--out-dir", c.out_dir, "output directory");
  if (out_required) o->required();
  cmd->set_config("--config", "", "key=value file applied underneath explicit flags");
}

int g_threads = 0;

void apply_threads() { set_thread_count(g_threads); }

// corrupt ------------------------------------------------------------------

struct CorruptOpts {
  CommonOpts common;
  std::string kind;
  int severity = 3;
  int n = 8;
  std::uint64_t seed = 42;
};

void run_corrupt(const CorruptOpts& o) {
  apply_threads();
  CorruptionKind kind;
  try {
    kind = parse_corruption(o.kind);
    corruption_param(kind, o.severity);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (o.n < 1) throw UsageError("--n must be at least 1");
  Dataset ds = load_data(o.common.data);
  if (static_cast<size_t>(o.n) > ds.images.size())
    throw UsageError("--n exceeds the dataset size");

  write_manifest(o.common.out_dir, "corrupt",
                 {{"kind", o.kind},
                  {"severity", std::to_string(o.severity)},
                  {"n", std::to_string(o.n)},
                  {"seed", std::to_string(o.seed)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  for (int i = 0; i < o.n; ++i) {
    RngStream stream = eval_corruption_stream(o.seed, kind, o.severity, i);
    const Image img =
        apply_corruption(ds.images[static_cast<size_t>(i)], {kind, o.severity}, stream);
    char name[128];
    std::snprintf(name, sizeof name, "%d_%s_s%d.%s", i, corruption_name(kind), o.severity,
                  img.c == 1 ? "pgm" : "ppm");
    write_image((fs::path(o.common.out_dir) / name).string(), img);
  }
  std::string csv = "kind,severity,param,value\n";
  for (const CorruptionParam& row : corruption_param_table())
    csv += std::string(corruption_name(row.kind)) + "," + std::to_string(row.severity) + "," +
           row.param + "," + fmt_f64(row.value) + "\n";
  write_file(fs::path(o.common.out_dir) / "params.csv", csv);
  std::cout << "wrote " << o.n << " images to " << o.common.out_dir << "\n";
}

// spectrum -----------------------------------------------------------------

struct SpectrumOpts {
  CommonOpts common;
  std::string kind;
  int severity = 3;
  int n = 64;
  std::uint64_t seed = 42;
};

void run_spectrum(const SpectrumOpts& o) {
  apply_threads();
  CorruptionKind kind;
  try {
    kind = parse_corruption(o.kind);
    corruption_param(kind, o.severity);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (o.n < 1) throw UsageError("--n must be at least 1");
  Dataset ds = load_data(o.common.data);

  write_manifest(o.common.out_dir, "spectrum",
                 {{"kind", o.kind},
                  {"severity", std::to_string(o.severity)},
                  {"n", std::to_string(o.n)},
                  {"seed", std::to_string(o.seed)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  const Spectrum s = corruption_spectrum(ds, {kind, o.severity}, o.n, o.seed);
  write_spectrum_csv((fs::path(o.common.out_dir) / "spectrum.csv").string(), s);
  write_pgm16_log((fs::path(o.common.out_dir) / "spectrum.pgm").string(), s.mag, s.h, s.w);
  std::cout << "spectrum over " << s.images_used << " images written to " << o.common.out_dir
            << "\n";
}

// order --------------------------------------------------------------------

struct OrderOpts {
  CommonOpts common;
  std::string kinds = "all";
  int severity = 3;
  int n = 500;
  double radius = 0.0;  // 0 = h/4 default
  std::uint64_t seed = 42;
};

void run_order(const OrderOpts& o) {
  apply_threads();
  std::vector<CorruptionKind> kinds = parse_kind_list(o.kinds);
  if (o.n < 1) throw UsageError("--n must be at least 1");
  Dataset ds = load_data(o.common.data);
  if (ds.images.empty()) throw UsageError("dataset has no images");
  const double radius =
      o.radius > 0.0 ? o.radius : default_highpass_radius(ds.images[0].h);

  write_manifest(o.common.out_dir, "order",
                 {{"kinds", o.kinds},
                  {"severity", std::to_string(o.severity)},
                  {"n", std::to_string(o.n)},
                  {"radius", fmt_f64(o.radius)},
                  {"seed", std::to_string(o.seed)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  std::vector<CorruptionSpec> specs;
  for (CorruptionKind k : kinds) specs.push_back({k, o.severity});
  const std::vector<OrderRow> rows = order_corruptions(ds, specs, o.n, radius, o.seed);
  write_order_csv((fs::path(o.common.out_dir) / "order.csv").string(), rows);
  for (const OrderRow& r : rows)
    std::cout << corruption_name(r.kind) << " s" << r.severity << ": mean F_hf "
              << fmt_f64(r.mean_f_hf) << " over " << r.used << " images\n";
}

// train --------------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string arch = "tinycnn";
  int tv_tap = 0;
  int val_n = 2000;
  int epochs = 10;
  int batch = 64;
  double lr = 0.05;
  double momentum = 0.9;
  bool augmix = true;
  double jsd_weight = 12.0;
  double tv_lambda = 0.0;
  std::uint64_t seed = 1;
};

void run_train(const TrainOpts& o) {
  apply_threads();
  Dataset all = load_data(o.common.data);
  if (static_cast<size_t>(o.val_n) >= all.images.size())
    throw UsageError("--val-n must leave at least one training image");
  Dataset train_set, val_set;
  split_dataset(all, o.val_n, train_set, val_set);
  const ModelConfig arch = resolve_arch(o.arch, all, o.tv_tap);

  write_manifest(o.common.out_dir, "train",
                 {{"arch", o.arch},
                  {"tv-tap", std::to_string(o.tv_tap)},
                  {"val-n", std::to_string(o.val_n)},
                  {"epochs", std::to_string(o.epochs)},
                  {"batch", std::to_string(o.batch)},
                  {"lr", fmt_f64(o.lr)},
                  {"momentum", fmt_f64(o.momentum)},
                  {"augmix", o.augmix ? "true" : "false"},
                  {"jsd-weight", fmt_f64(o.jsd_weight)},
                  {"tv-lambda", fmt_f64(o.tv_lambda)},
                  {"seed", std::to_string(o.seed)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.seed = o.seed;
  cfg.augmix = o.augmix;
  cfg.jsd_weight = o.jsd_weight;
  cfg.tv_lambda = o.tv_lambda;

  TrainResult res = train(train_set, val_set, arch, cfg);
  write_train_log((fs::path(o.common.out_dir) / "train_log.csv").string(), res.log);
  if (res.diverged) throw TrainingDiverged(res.diverged_reason);
  save_checkpoint((fs::path(o.common.out_dir) / "model.fqln").string(), res.final_model,
                  train_extras(cfg));
  std::cout << "final val error " << res.log.back().val_error << "% (best "
            << res.best_val_error << "% at epoch " << res.best_epoch << ")\n";
}

// finetune -----------------------------------------------------------------

struct FinetuneOpts {
  CommonOpts common;
  std::string base;
  std::string bias = "hf";
  int val_n = 2000;
  int epochs = 15;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

void run_finetune(const FinetuneOpts& o) {
  apply_threads();
  FinetuneSpec spec;
  try {
    spec.bias = parse_bias(o.bias);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  spec.epochs = o.epochs;
  spec.batch_size = o.batch;
  spec.lr = o.lr;
  spec.seed = o.seed;

  Dataset all = load_data(o.common.data);
  if (static_cast<size_t>(o.val_n) >= all.images.size())
    throw UsageError("--val-n must leave at least one training image");
  Dataset train_set, val_set;
  split_dataset(all, o.val_n, train_set, val_set);
  LoadedCheckpoint base = load_checkpoint(o.base);

  write_manifest(o.common.out_dir, "finetune",
                 {{"base", o.base},
                  {"bias", o.bias},
                  {"val-n", std::to_string(o.val_n)},
                  {"epochs", std::to_string(o.epochs)},
                  {"batch", std::to_string(o.batch)},
                  {"lr", fmt_f64(o.lr)},
                  {"seed", std::to_string(o.seed)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  TrainResult res = finetune(base.model, base.extras, train_set, val_set, spec);
  write_train_log((fs::path(o.common.out_dir) / "train_log.csv").string(), res.log);
  if (res.diverged) throw TrainingDiverged(res.diverged_reason);
  double inherited = 0.0;
  if (auto it = base.extras.find("tv_lambda"); it != base.extras.end())
    inherited = std::stod(it->second);
  auto extras = finetune_extras(spec, inherited);
  extras["base"] = o.base;
  save_checkpoint((fs::path(o.common.out_dir) / "model.fqln").string(), res.final_model,
                  extras);
  if (!res.log.empty())
    std::cout << "final val error " << res.log.back().val_error << "%\n";
}

// adapt-bn -----------------------------------------------------------------

struct AdaptOpts {
  CommonOpts common;
  std::string ckpt;
  std::string kind;
  int severity = 0;  // 0 pools severities 1..5
  std::uint64_t eval_seed = 777;
  int batch = 256;
};

void run_adapt(const AdaptOpts& o) {
  apply_threads();
  CorruptionKind kind;
  try {
    kind = parse_corruption(o.kind);
    if (o.severity != 0) corruption_param(kind, o.severity);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  Dataset ds = load_data(o.common.data);
  LoadedCheckpoint base = load_checkpoint(o.ckpt);

  write_manifest(o.common.out_dir, "adapt-bn",
                 {{"ckpt", o.ckpt},
                  {"kind", o.kind},
                  {"severity", std::to_string(o.severity)},
                  {"eval-seed", std::to_string(o.eval_seed)},
                  {"batch", std::to_string(o.batch)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  std::vector<int> severities;
  if (o.severity == 0)
    for (int s = 1; s <= kNumSeverities; ++s) severities.push_back(s);
  else
    severities.push_back(o.severity);

  std::vector<std::vector<Image>> per_sev;
  std::vector<Image> pooled;
  for (int s : severities) {
    per_sev.push_back(corrupted_images(ds, kind, s, o.eval_seed));
    pooled.insert(pooled.end(), per_sev.back().begin(), per_sev.back().end());
  }
  const Model adapted = adapt_bn(base.model, pooled, o.batch);

  double before = 0.0, after = 0.0;
  for (const std::vector<Image>& imgs : per_sev) {
    before += error_from_probs(predict_probs(base.model, imgs, o.batch), ds.labels) /
              static_cast<double>(per_sev.size());
    after += error_from_probs(predict_probs(adapted, imgs, o.batch), ds.labels) /
             static_cast<double>(per_sev.size());
  }
  auto extras = base.extras;
  extras["adapted_kind"] = o.kind;
  extras["adapted_severity"] = std::to_string(o.severity);
  save_checkpoint((fs::path(o.common.out_dir) / "adapted.fqln").string(), adapted, extras);
  std::printf("%s error before %.3f%%, after %.3f%%\n", corruption_name(kind), before, after);
}

// eval / rohl ----------------------------------------------------------------

struct EvalOpts {
  CommonOpts common;
  std::string ckpt;
  std::string kinds = "all";
  std::string label;
  std::uint64_t eval_seed = 777;
  int batch = 256;
  bool normalize = false;
  std::string reference_report;
};

void run_eval(const EvalOpts& o) {
  apply_threads();
  if (o.normalize && o.reference_report.empty())
    throw UsageError("--normalize needs --reference-report");
  const std::vector<CorruptionKind> kinds = parse_kind_list(o.kinds);
  Dataset ds = load_data(o.common.data);
  LoadedCheckpoint loaded = load_checkpoint(o.ckpt);
  const std::string label =
      o.label.empty() ? fs::path(o.ckpt).stem().string() : o.label;

  write_manifest(o.common.out_dir, "eval",
                 {{"ckpt", o.ckpt},
                  {"kinds", o.kinds},
                  {"label", label},
                  {"eval-seed", std::to_string(o.eval_seed)},
                  {"batch", std::to_string(o.batch)},
                  {"normalize", o.normalize ? "true" : "false"},
                  {"reference-report", o.reference_report},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  EvalReport reference;
  const EvalReport* ref = nullptr;
  if (o.normalize) {
    std::ifstream in(o.reference_report, std::ios::binary);
    if (!in) throw UsageError("cannot read reference report: " + o.reference_report);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    reference = report_from_json(text);
    ref = &reference;
  }
  const EvalReport rep =
      evaluate({&loaded.model}, ds, kinds, o.eval_seed, label, ref, o.batch, nullptr);
  write_file(fs::path(o.common.out_dir) / "report.json", report_json(rep));
  write_file(fs::path(o.common.out_dir) / "report.txt", report_text(rep));
  std::cout << report_text(rep);
}

struct RohlOpts {
  CommonOpts common;
  std::string hf_ckpt, lf_ckpt;
  std::string kinds = "all";
  std::string label = "rohl";
  std::uint64_t eval_seed = 777;
  int batch = 256;
};

void run_rohl(const RohlOpts& o) {
  apply_threads();
  const std::vector<CorruptionKind> kinds = parse_kind_list(o.kinds);
  Dataset ds = load_data(o.common.data);
  LoadedCheckpoint hf = load_checkpoint(o.hf_ckpt);
  LoadedCheckpoint lf = load_checkpoint(o.lf_ckpt);

  write_manifest(o.common.out_dir, "rohl",
                 {{"hf", o.hf_ckpt},
                  {"lf", o.lf_ckpt},
                  {"kinds", o.kinds},
                  {"label", o.label},
                  {"eval-seed", std::to_string(o.eval_seed)},
                  {"batch", std::to_string(o.batch)},
                  {"data", o.common.data},
                  {"out-dir", o.common.out_dir}});

  const EvalReport rep = evaluate({&hf.model, &lf.model}, ds, kinds, o.eval_seed, o.label,
                                  nullptr, o.batch, nullptr);
  write_file(fs::path(o.common.out_dir) / "report.json", report_json(rep));
  write_file(fs::path(o.common.out_dir) / "report.txt", report_text(rep));
  std::cout << report_text(rep);
}

// repro ----------------------------------------------------------------------

struct ReproOpts {
  ReproConfig cfg;
  std::string seeds = "101,102,103";
  std::string data;  // optional idx:<images>,<labels>
};

void run_repro_cmd(ReproOpts& o) {
  apply_threads();
  o.cfg.seeds.clear();
  for (const std::string& tok : split_list(o.seeds))
    o.cfg.seeds.push_back(static_cast<std::uint64_t>(to_long(tok, "seed")));
  if (!o.data.empty()) {
    const auto colon = o.data.find(':');
    if (colon == std::string::npos || o.data.substr(0, colon) != "idx")
      throw UsageError("repro --data accepts only idx:<images>,<labels>");
    const auto parts = split_list(o.data.substr(colon + 1));
    if (parts.size() != 2) throw UsageError("idx data spec needs <images>,<labels>");
    o.cfg.idx_images = parts[0];
    o.cfg.idx_labels = parts[1];
  }

  write_manifest(o.cfg.out_dir, "repro",
                 {{"train-n", std::to_string(o.cfg.train_n)},
                  {"val-n", std::to_string(o.cfg.val_n)},
                  {"size", std::to_string(o.cfg.image_size)},
                  {"classes", std::to_string(o.cfg.classes)},
                  {"data-seed", std::to_string(o.cfg.data_seed)},
                  {"data", o.data},
                  {"seeds", o.seeds},
                  {"epochs", std::to_string(o.cfg.epochs)},
                  {"ft-epochs", std::to_string(o.cfg.ft_epochs)},
                  {"lr", fmt_f64(o.cfg.lr)},
                  {"ft-lr", fmt_f64(o.cfg.ft_lr)},
                  {"batch", std::to_string(o.cfg.batch_size)},
                  {"tv-lambda", fmt_f64(o.cfg.tv_lambda)},
                  {"jsd-weight", fmt_f64(o.cfg.jsd_weight)},
                  {"eval-seed", std::to_string(o.cfg.eval_seed)},
                  {"reuse", o.cfg.reuse ? "true" : "false"},
                  {"out-dir", o.cfg.out_dir}});

  run_repro(o.cfg, &std::cout);
}

// report-diff ----------------------------------------------------------------

struct DiffOpts {
  std::string a, b;
  double tol = 0.0;
};

int run_report_diff(const DiffOpts& o) {
  auto read = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read report: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return report_from_json(text);
  };
  const double d = report_diff_max(read(o.a), read(o.b));
  std::cout << "max difference " << fmt_f64(d) << "\n";
  return d <= o.tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) + " " + kToolVersion +
               ": frequency-biased training and corruption analysis"};
  app.require_subcommand(1);
  app.add_option("--threads", g_threads,
                 "worker threads (0 = FQLN_THREADS env or hardware default)");

  CorruptOpts co;
  auto* corrupt = app.add_subcommand("corrupt", "corrupt images and write them out");
  add_common(corrupt, co.common);
  corrupt->add_option("--kind", co.kind, "corruption kind")->required();
  corrupt->add_option("--severity", co.severity, "severity 1..5")->capture_default_str();
  corrupt->add_option("--n", co.n, "number of images")->capture_default_str();
  corrupt->add_option("--seed", co.seed, "corruption stream seed")->capture_default_str();
  corrupt->callback([&co] { run_corrupt(co); });

  SpectrumOpts so;
  auto* spectrum =
      app.add_subcommand("spectrum", "mean DFT magnitude of the corruption difference");
  add_common(spectrum, so.common);
  spectrum->add_option("--kind", so.kind, "corruption kind")->required();
  spectrum->add_option("--severity", so.severity, "severity 1..5")->capture_default_str();
  spectrum->add_option("--n", so.n, "images to average")->capture_default_str();
  spectrum->add_option("--seed", so.seed, "corruption stream seed")->capture_default_str();
  spectrum->callback([&so] { run_spectrum(so); });

  OrderOpts oo;
  auto* order = app.add_subcommand("order", "rank corruptions by high-frequency fraction");
  add_common(order, oo.common);
  order->add_option("--kinds", oo.kinds, "comma list or 'all'")->capture_default_str();
  order->add_option("--severity", oo.severity, "severity 1..5")->capture_default_str();
  order->add_option("--n", oo.n, "images per kind")->capture_default_str();
  order->add_option("--radius", oo.radius, "high-pass radius (0 = height/4)")
      ->capture_default_str();
  order->add_option("--seed", oo.seed, "corruption stream seed")->capture_default_str();
  order->callback([&oo] { run_order(oo); });

  TrainOpts to;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, to.common);
  train_cmd->add_option("--arch", to.arch, "'tinycnn' or a model config file")
      ->capture_default_str();
  train_cmd->add_option("--tv-tap", to.tv_tap, "conv index the smoothness penalty taps")
      ->capture_default_str();
  train_cmd->add_option("--val-n", to.val_n, "validation split size")->capture_default_str();
  train_cmd->add_option("--epochs", to.epochs)->capture_default_str();
  train_cmd->add_option("--batch", to.batch)->capture_default_str();
  train_cmd->add_option("--lr", to.lr)->capture_default_str();
  train_cmd->add_option("--momentum", to.momentum)->capture_default_str();
  train_cmd->add_option("--augmix", to.augmix, "true/false")->capture_default_str();
  train_cmd->add_option("--jsd-weight", to.jsd_weight)->capture_default_str();
  train_cmd->add_option("--tv-lambda", to.tv_lambda)->capture_default_str();
  train_cmd->add_option("--seed", to.seed)->capture_default_str();
  train_cmd->callback([&to] { run_train(to); });

  FinetuneOpts fo;
  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint with a biased op pool");
  add_common(ft, fo.common);
  ft->add_option("--base", fo.base, "base checkpoint")->required();
  ft->add_option("--bias", fo.bias, "hf, lf, or all")->capture_default_str();
  ft->add_option("--val-n", fo.val_n)->capture_default_str();
  ft->add_option("--epochs", fo.epochs)->capture_default_str();
  ft->add_option("--batch", fo.batch)->capture_default_str();
  ft->add_option("--lr", fo.lr)->capture_default_str();
  ft->add_option("--seed", fo.seed)->capture_default_str();
  ft->callback([&fo] { run_finetune(fo); });

  AdaptOpts ao;
  auto* adapt = app.add_subcommand("adapt-bn", "re-estimate BN stats on a corrupted set");
  add_common(adapt, ao.common);
  adapt->add_option("--ckpt", ao.ckpt, "checkpoint to adapt")->required();
  adapt->add_option("--kind", ao.kind, "corruption kind")->required();
  adapt->add_option("--severity", ao.severity, "1..5, or 0 to pool all")
      ->capture_default_str();
  adapt->add_option("--eval-seed", ao.eval_seed)->capture_default_str();
  adapt->add_option("--batch", ao.batch)->capture_default_str();
  adapt->callback([&ao] { run_adapt(ao); });

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "corruption-suite report for one checkpoint");
  add_common(ev, eo.common);
  ev->add_option("--ckpt", eo.ckpt, "checkpoint")->required();
  ev->add_option("--kinds", eo.kinds, "comma list or 'all'")->capture_default_str();
  ev->add_option("--label", eo.label, "report label (default: checkpoint stem)");
  ev->add_option("--eval-seed", eo.eval_seed)->capture_default_str();
  ev->add_option("--batch", eo.batch)->capture_default_str();
  ev->add_flag("--normalize", eo.normalize, "normalise mCE by a reference report");
  ev->add_option("--reference-report", eo.reference_report, "reference report.json");
  ev->callback([&eo] { run_eval(eo); });

  RohlOpts ro;
  auto* rohl = app.add_subcommand("rohl", "evaluate the two-expert softmax mixture");
  add_common(rohl, ro.common);
  rohl->add_option("--hf", ro.hf_ckpt, "high-frequency expert checkpoint")->required();
  rohl->add_option("--lf", ro.lf_ckpt, "low-frequency expert checkpoint")->required();
  rohl->add_option("--kinds", ro.kinds, "comma list or 'all'")->capture_default_str();
  rohl->add_option("--label", ro.label)->capture_default_str();
  rohl->add_option("--eval-seed", ro.eval_seed)->capture_default_str();
  rohl->add_option("--batch", ro.batch)->capture_default_str();
  rohl->callback([&ro] { run_rohl(ro); });

  ReproOpts po;
  auto* repro = app.add_subcommand("repro", "train the model family and check the patterns");
  repro->add_option("--out-dir", po.cfg.out_dir)->required();
  repro->add_option("--train-n", po.cfg.train_n)->capture_default_str();
  repro->add_option("--val-n", po.cfg.val_n)->capture_default_str();
  repro->add_option("--size", po.cfg.image_size)->capture_default_str();
  repro->add_option("--classes", po.cfg.classes)->capture_default_str();
  repro->add_option("--data-seed", po.cfg.data_seed)->capture_default_str();
  repro->add_option("--data", po.data, "idx:<images>,<labels> instead of synthetic data");
  repro->add_option("--seeds", po.seeds, "comma list of training seeds")
      ->capture_default_str();
  repro->add_option("--epochs", po.cfg.epochs)->capture_default_str();
  repro->add_option("--ft-epochs", po.cfg.ft_epochs)->capture_default_str();
  repro->add_option("--lr", po.cfg.lr)->capture_default_str();
  repro->add_option("--ft-lr", po.cfg.ft_lr)->capture_default_str();
  repro->add_option("--batch", po.cfg.batch_size)->capture_default_str();
  repro->add_option("--tv-lambda", po.cfg.tv_lambda)->capture_default_str();
  repro->add_option("--jsd-weight", po.cfg.jsd_weight)->capture_default_str();
  repro->add_option("--eval-seed", po.cfg.eval_seed)->capture_default_str();
  repro->add_flag("--reuse", po.cfg.reuse, "reuse matching checkpoints in out-dir");
  repro->set_config("--config", "", "key=value file applied underneath explicit flags");
  repro->callback([&po] { run_repro_cmd(po); });

  DiffOpts dopts;
  int diff_rc = 0;
  auto* diff = app.add_subcommand("report-diff", "compare two report.json files");
  diff->add_option("--a", dopts.a, "first report")->required();
  diff->add_option("--b", dopts.b, "second report")->required();
  diff->add_option("--tol", dopts.tol, "tolerance")->capture_default_str();
  diff->callback([&dopts, &diff_rc] { diff_rc = run_report_diff(dopts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return diff_rc;
}
