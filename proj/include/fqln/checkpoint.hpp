#pragma once

#include <map>
#include <string>

#include "fqln/model.hpp"

namespace fqln {

// Checkpoint container: "FQLN" magic, u32 LE format version, u32 LE config
// length, key=value config text (sorted keys, UTF-8), then one blob per
// parameter tensor in layer declaration order. Each blob is
//   u16 LE name length | name bytes | u8 rank | rank x u32 LE dims |
//   dims-product x f32 LE values
// Batch norm layers store gamma, beta, running_mean, running_var; conv and
// linear store weight and bias. Extra provenance entries are carried in the
// config text under "meta." keys. Save -> load -> save is byte identical.

void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& extras = {});

struct LoadedCheckpoint {
  Model model;
  std::map<std::string, std::string> extras;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Config text serialisation, exposed for manifest reuse.
std::string model_config_text(const ModelConfig& cfg,
                              const std::map<std::string, std::string>& extras);
ModelConfig parse_model_config_text(const std::string& text,
                                    std::map<std::string, std::string>* extras);

}  // namespace fqln
