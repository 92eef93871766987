#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fqln/tensor.hpp"

namespace fqln {

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return images.size(); }
};

// Reads an IDX image/label file pair (the MNIST container layout: big-endian
// magic + dims, then raw bytes). Pixel bytes are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Procedural dataset of anti-aliased geometric shape families rendered from
// signed distance fields. Image i depends only on (seed, i), so any subset is
// stable under regeneration. Labels cycle round-robin: label = i % classes.
Dataset synth_shapes(std::uint64_t seed, int n, int size, int classes);

// Deterministic head/tail split; labels stay balanced because synth_shapes
// assigns them round-robin.
void split_dataset(const Dataset& all, int val_n, Dataset& train, Dataset& val);

}  // namespace fqln
