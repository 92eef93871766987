#include "fqln/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fqln {

namespace {

int read_pnm_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  int c = in.peek();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v;
  if (!(in >> v)) throw FormatError("bad PNM header token in " + path);
  return v;
}

}  // namespace

void write_image(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw InvalidParameter("write_image: channels must be 1 or 3, got " + std::to_string(img.c));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.w) * img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        row[static_cast<size_t>(x) * img.c + ch] =
            static_cast<unsigned char>(std::lround(clamp01(img.at(ch, y, x)) * 255.0f));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("short write to " + path);
}

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw FormatError("not a binary PGM/PPM file: " + path);
  const int channels = (m1 == '5') ? 1 : 3;
  const int w = read_pnm_int(in, path);
  const int h = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (w <= 0 || h <= 0) throw FormatError("bad PNM dimensions in " + path);
  if (maxval != 255) throw FormatError("unsupported PNM maxval in " + path);
  in.get();  // single whitespace after header
  Image img(channels, h, w);
  std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
      throw FormatError("truncated pixel data in " + path);
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < channels; ++ch)
        img.at(ch, y, x) = row[static_cast<size_t>(x) * channels + ch] / 255.0f;
  }
  return img;
}

void write_pgm16_log(const std::string& path, const std::vector<double>& grid, int h, int w) {
  if (grid.size() != static_cast<size_t>(h) * w)
    throw InvalidParameter("write_pgm16_log: grid size does not match dimensions");
  double maxv = 0.0;
  for (double v : grid) {
    if (v < 0.0) throw InvalidParameter("write_pgm16_log: negative magnitude");
    maxv = std::max(maxv, v);
  }
  const double denom = maxv > 0.0 ? std::log1p(maxv) : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "P5\n" << w << " " << h << "\n65535\n";
  for (double v : grid) {
    unsigned val = static_cast<unsigned>(std::lround(65535.0 * std::log1p(v) / denom));
    unsigned char be[2] = {static_cast<unsigned char>(val >> 8),
                           static_cast<unsigned char>(val & 0xFF)};
    out.write(reinterpret_cast<const char*>(be), 2);
  }
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace fqln
