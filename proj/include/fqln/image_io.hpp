#pragma once

#include <string>
#include <vector>

#include "fqln/tensor.hpp"

namespace fqln {

// Binary PGM (P5) / PPM (P6). Values are clamped to [0, 1] and quantised to
// 8 bits on write. A 1-channel image writes PGM, 3-channel writes PPM.
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

// 16-bit big-endian PGM of an arbitrary non-negative grid, log-scaled so the
// large dynamic range of spectra stays visible. All-zero grids write zeros.
void write_pgm16_log(const std::string& path, const std::vector<double>& grid, int h, int w);

}  // namespace fqln
