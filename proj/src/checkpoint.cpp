#include "fqln/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "fqln/kv.hpp"
#include "fqln/version.hpp"

namespace fqln {

namespace {

struct BlobRef {
  std::string name;
  std::vector<std::uint32_t> dims;
  float* data = nullptr;
  std::size_t count = 0;
};

std::vector<BlobRef> blob_layout(Model& model) {
  std::vector<BlobRef> blobs;
  auto add = [&](const std::string& name, std::vector<std::uint32_t> dims, float* data) {
    std::size_t count = 1;
    for (auto d : dims) count *= d;
    blobs.push_back({name, std::move(dims), data, count});
  };
  for (Layer& layer : model.layers) {
    switch (layer.spec.kind) {
      case LayerKind::Conv2d: {
        const Shape4 s = layer.w.shape();
        add(layer.name + ".weight",
            {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
             static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
            layer.w.data());
        add(layer.name + ".bias", {static_cast<std::uint32_t>(layer.b.size())}, layer.b.data());
        break;
      }
      case LayerKind::Linear: {
        const Shape4 s = layer.w.shape();
        add(layer.name + ".weight",
            {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c)}, layer.w.data());
        add(layer.name + ".bias", {static_cast<std::uint32_t>(layer.b.size())}, layer.b.data());
        break;
      }
      case LayerKind::BatchNorm: {
        const std::uint32_t c = static_cast<std::uint32_t>(layer.gamma.size());
        add(layer.name + ".gamma", {c}, layer.gamma.data());
        add(layer.name + ".beta", {c}, layer.beta.data());
        add(layer.name + ".running_mean", {c}, layer.running_mean.data());
        add(layer.name + ".running_var", {c}, layer.running_var.data());
        break;
      }
      default:
        break;
    }
  }
  return blobs;
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t read_u32le(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated while reading " + what + " at offset " +
                      std::to_string(static_cast<long>(in.tellg())));
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) return 0xFFFF;  // caller checks stream state
  return static_cast<std::uint16_t>(std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8));
}

std::string layer_token(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv2d:
      return "conv:" + std::to_string(spec.channels) + ":" + std::to_string(spec.kernel) + ":" +
             std::to_string(spec.stride) + ":" + std::to_string(spec.pad);
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Linear: return "linear:" + std::to_string(spec.channels);
  }
  throw InvalidParameter("unknown layer kind");
}

LayerSpec parse_layer_token(const std::string& tok) {
  auto fields = [&] {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      auto pos = tok.find(':', start);
      out.push_back(tok.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return out;
  }();
  auto want = [&](std::size_t n) {
    if (fields.size() != n) throw FormatError("bad layer token: " + tok);
  };
  try {
    if (fields[0] == "conv") {
      want(5);
      return {LayerKind::Conv2d, std::stoi(fields[1]), std::stoi(fields[2]),
              std::stoi(fields[3]), std::stoi(fields[4])};
    }
    if (fields[0] == "bn") { want(1); return {LayerKind::BatchNorm}; }
    if (fields[0] == "relu") { want(1); return {LayerKind::Relu}; }
    if (fields[0] == "maxpool") { want(1); return {LayerKind::MaxPool2}; }
    if (fields[0] == "gap") { want(1); return {LayerKind::GlobalAvgPool}; }
    if (fields[0] == "linear") { want(2); return {LayerKind::Linear, std::stoi(fields[1])}; }
  } catch (const std::invalid_argument&) {
    throw FormatError("bad layer token: " + tok);
  } catch (const std::out_of_range&) {
    throw FormatError("bad layer token: " + tok);
  }
  throw FormatError("unknown layer token: " + tok);
}

}  // namespace

std::string model_config_text(const ModelConfig& cfg,
                              const std::map<std::string, std::string>& extras) {
  std::map<std::string, std::string> kv;
  kv["arch"] = cfg.arch;
  kv["in_c"] = std::to_string(cfg.in_c);
  kv["in_h"] = std::to_string(cfg.in_h);
  kv["in_w"] = std::to_string(cfg.in_w);
  kv["num_classes"] = std::to_string(cfg.num_classes);
  kv["tv_tap"] = std::to_string(cfg.tv_tap);
  std::string layers;
  for (size_t i = 0; i < cfg.layers.size(); ++i) {
    if (i) layers += '|';
    layers += layer_token(cfg.layers[i]);
  }
  kv["layers"] = layers;
  for (const auto& [k, v] : extras) {
    if (v.find('\n') != std::string::npos)
      throw InvalidParameter("checkpoint extras must be single-line: " + k);
    kv["meta." + k] = v;
  }
  return render_kv(kv);
}

ModelConfig parse_model_config_text(const std::string& text,
                                    std::map<std::string, std::string>* extras) {
  auto kv = parse_kv_text(text, "checkpoint config");
  auto need = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("checkpoint config misses key ") + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.arch = need("arch");
  try {
    cfg.in_c = std::stoi(need("in_c"));
    cfg.in_h = std::stoi(need("in_h"));
    cfg.in_w = std::stoi(need("in_w"));
    cfg.num_classes = std::stoi(need("num_classes"));
    cfg.tv_tap = std::stoi(need("tv_tap"));
  } catch (const std::exception&) {
    throw FormatError("checkpoint config has a non-integer field");
  }
  cfg.layers.clear();
  const std::string layers = need("layers");
  std::size_t start = 0;
  while (start <= layers.size()) {
    auto pos = layers.find('|', start);
    const std::string tok =
        layers.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (tok.empty()) throw FormatError("empty layer token in checkpoint config");
    cfg.layers.push_back(parse_layer_token(tok));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (extras) {
    extras->clear();
    for (const auto& [k, v] : kv)
      if (k.rfind("meta.", 0) == 0) (*extras)[k.substr(5)] = v;
  }
  return cfg;
}

void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& extras) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 4);
  write_u32le(out, kCheckpointVersion);
  const std::string config = model_config_text(model.config, extras);
  write_u32le(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  auto blobs = blob_layout(const_cast<Model&>(model));
  for (const BlobRef& blob : blobs) {
    write_u16le(out, static_cast<std::uint16_t>(blob.name.size()));
    out.write(blob.name.data(), static_cast<std::streamsize>(blob.name.size()));
    const unsigned char rank = static_cast<unsigned char>(blob.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (std::uint32_t d : blob.dims) write_u32le(out, d);
    out.write(reinterpret_cast<const char*>(blob.data),
              static_cast<std::streamsize>(blob.count * sizeof(float)));
  }
  if (!out) throw FormatError("short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic");
  const std::uint32_t version = read_u32le(in, path, "format version");
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t config_len = read_u32le(in, path, "config length");
  std::string config(config_len, '\0');
  if (!in.read(config.data(), config_len))
    throw FormatError(path + ": truncated config text");

  LoadedCheckpoint loaded;
  const ModelConfig cfg = parse_model_config_text(config, &loaded.extras);
  loaded.model = build_model(cfg);

  auto blobs = blob_layout(loaded.model);
  for (const BlobRef& expect : blobs) {
    const std::uint16_t name_len = read_u16le(in);
    if (!in)
      throw FormatError(path + ": truncated before blob " + expect.name);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw FormatError(path + ": truncated blob name (expected " + expect.name + ")");
    if (name != expect.name)
      throw ConsistencyError(path + ": blob order mismatch, expected " + expect.name + ", found " +
                             name);
    unsigned char rank = 0;
    if (!in.read(reinterpret_cast<char*>(&rank), 1))
      throw FormatError(path + ": truncated rank of blob " + name);
    if (rank != expect.dims.size())
      throw ConsistencyError(path + ": blob " + name + " has rank " + std::to_string(rank) +
                             ", expected " + std::to_string(expect.dims.size()));
    for (std::size_t i = 0; i < expect.dims.size(); ++i) {
      const std::uint32_t d = read_u32le(in, path, ("dims of blob " + name).c_str());
      if (d != expect.dims[i])
        throw ConsistencyError(path + ": blob " + name + " dim " + std::to_string(i) + " is " +
                               std::to_string(d) + ", expected " +
                               std::to_string(expect.dims[i]));
    }
    if (!in.read(reinterpret_cast<char*>(expect.data),
                 static_cast<std::streamsize>(expect.count * sizeof(float))))
      throw FormatError(path + ": truncated data of blob " + name + " at offset " +
                        std::to_string(static_cast<long>(in.tellg())));
  }
  // Anything left over means the file disagrees with its own config.
  char probe;
  if (in.read(&probe, 1))
    throw ConsistencyError(path + ": unexpected trailing bytes after last blob");
  return loaded;
}

}  // namespace fqln
