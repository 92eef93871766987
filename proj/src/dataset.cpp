#include "fqln/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fqln/rng.hpp"

namespace fqln {

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("truncated IDX header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot open " + images_path);
  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw FormatError("cannot open " + labels_path);

  const std::uint32_t img_magic = read_u32_be(img, images_path);
  if (img_magic != 0x00000803u)
    throw FormatError("bad IDX image magic in " + images_path + " (got " +
                      std::to_string(img_magic) + ", want 2051)");
  const std::uint32_t lbl_magic = read_u32_be(lbl, labels_path);
  if (lbl_magic != 0x00000801u)
    throw FormatError("bad IDX label magic in " + labels_path + " (got " +
                      std::to_string(lbl_magic) + ", want 2049)");

  const std::uint32_t n_img = read_u32_be(img, images_path);
  const std::uint32_t rows = read_u32_be(img, images_path);
  const std::uint32_t cols = read_u32_be(img, images_path);
  const std::uint32_t n_lbl = read_u32_be(lbl, labels_path);
  if (n_img != n_lbl)
    throw ConsistencyError("IDX image/label count mismatch: " + std::to_string(n_img) +
                           " images vs " + std::to_string(n_lbl) + " labels");

  Dataset ds;
  ds.name = "idx";
  ds.images.reserve(n_img);
  ds.labels.reserve(n_img);
  std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
  int max_label = -1;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("truncated IDX image data in " + images_path + " at image " +
                        std::to_string(i));
    Image im(1, static_cast<int>(rows), static_cast<int>(cols));
    for (size_t p = 0; p < buf.size(); ++p) im.data[p] = buf[p] / 255.0f;
    ds.images.push_back(std::move(im));
    char lc;
    if (!lbl.read(&lc, 1))
      throw FormatError("truncated IDX label data in " + labels_path + " at label " +
                        std::to_string(i));
    int label = static_cast<unsigned char>(lc);
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

namespace {

struct Vec2 {
  double x, y;
};

double sd_box(Vec2 p, double bx, double by) {
  double qx = std::fabs(p.x) - bx;
  double qy = std::fabs(p.y) - by;
  double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

double sd_equilateral_triangle(Vec2 p, double r) {
  const double k = std::sqrt(3.0);
  p.x = std::fabs(p.x) - r;
  p.y = p.y + r / k;
  if (p.x + k * p.y > 0.0) p = Vec2{(p.x - k * p.y) * 0.5, (-k * p.x - p.y) * 0.5};
  p.x -= std::clamp(p.x, -2.0 * r, 0.0);
  double len = std::sqrt(p.x * p.x + p.y * p.y);
  return -len * (p.y >= 0.0 ? 1.0 : -1.0);
}

Vec2 rotate(Vec2 p, double c, double s) { return Vec2{c * p.x + s * p.y, -s * p.x + c * p.y}; }

double frac(double v) { return v - std::floor(v); }

}  // namespace

Dataset synth_shapes(std::uint64_t seed, int n, int size, int classes) {
  if (n < 0) throw InvalidParameter("synth_shapes: n must be non-negative");
  if (size < 16) throw InvalidParameter("synth_shapes: size must be at least 16");
  if (classes < 2 || classes > 10)
    throw InvalidParameter("synth_shapes: classes must be in [2, 10]");

  Dataset ds;
  ds.name = "synth";
  ds.num_classes = classes;
  ds.images.resize(static_cast<size_t>(n));
  ds.labels.resize(static_cast<size_t>(n));

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    RngStream st(derive_seed(seed, {0xDA7A5E7ull, static_cast<std::uint64_t>(i)}));
    const int family = i % classes;
    const double bg = 0.15 + 0.20 * st.next_uniform();
    const double fg = 0.65 + 0.27 * st.next_uniform();
    const double cx = (size - 1) * 0.5 + (st.next_uniform() * 2.0 - 1.0) * size / 10.0;
    const double cy = (size - 1) * 0.5 + (st.next_uniform() * 2.0 - 1.0) * size / 10.0;
    const double R = (0.23 + 0.15 * st.next_uniform()) * size;
    const double theta_full = st.next_uniform() * 3.14159265358979323846;
    const double pa = st.next_uniform();
    const double pb = st.next_uniform();
    const double aa = 1.5;  // anti-alias width in pixels

    // Orientation: boxy families keep a limited tilt so rotated rectangles
    // do not collide with the diamond-like families.
    double theta = theta_full;
    if (family == 2 || family == 3) theta = (pa * 2.0 - 1.0) * 0.44;       // +-25 deg
    if (family == 8) theta = (pa * 2.0 - 1.0) * 0.26;                      // +-15 deg
    const double ct = std::cos(theta), stheta = std::sin(theta);

    Image im(1, size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        Vec2 p0{x - cx, y - cy};
        Vec2 p = rotate(p0, ct, stheta);
        double d = 1e9;
        switch (family) {
          case 0:  // disk
            d = std::hypot(p0.x, p0.y) - R;
            break;
          case 1: {  // ring
            double rr = (0.15 + 0.12 * pa) * R;
            d = std::fabs(std::hypot(p0.x, p0.y) - 0.8 * R) - rr;
            break;
          }
          case 2:  // rectangle
            d = sd_box(p, R, (0.40 + 0.25 * pb) * R);
            break;
          case 3: {  // rectangular frame
            double t = (0.15 + 0.13 * pb) * R;
            d = std::fabs(sd_box(p, R, 0.72 * R)) - t;
            break;
          }
          case 4: {  // cross
            double t = (0.18 + 0.12 * pa) * R;
            d = std::min(sd_box(p, R, t), sd_box(p, t, R));
            break;
          }
          case 5:  // triangle
            d = sd_equilateral_triangle(p, R);
            break;
          case 6: {  // 3x3 dot grid
            double s = 0.72 * R;
            double rd = (0.16 + 0.06 * pa) * R;
            for (int gy = -1; gy <= 1; ++gy)
              for (int gx = -1; gx <= 1; ++gx)
                d = std::min(d, std::hypot(p.x - gx * s, p.y - gy * s) - rd);
            break;
          }
          case 7: {  // full-image stripes
            double period = 5.0 + 4.0 * pb;
            double t = frac((p0.x * ct + p0.y * stheta) / period);
            d = (std::fabs(t - 0.5) - 0.25) * period;
            break;
          }
          case 8: {  // checkerboard
            double cell = 3.5 + 3.0 * pb;
            double fx = frac(p.x / cell), fy = frac(p.y / cell);
            int parity = (static_cast<int>(std::floor(p.x / cell)) +
                          static_cast<int>(std::floor(p.y / cell))) & 1;
            double m = std::min(std::min(fx, 1.0 - fx), std::min(fy, 1.0 - fy)) * cell;
            d = parity ? -m : m;
            break;
          }
          case 9: {  // bullseye: outer ring plus centre dot
            double ring = std::fabs(std::hypot(p0.x, p0.y) - 0.85 * R) - 0.15 * R;
            double dot = std::hypot(p0.x, p0.y) - 0.32 * R;
            d = std::min(ring, dot);
            break;
          }
          default:
            break;
        }
        double cov = std::clamp(0.5 - d / aa, 0.0, 1.0);
        im.at(0, y, x) = static_cast<float>(bg + (fg - bg) * cov);
      }
    }
    ds.images[static_cast<size_t>(i)] = std::move(im);
    ds.labels[static_cast<size_t>(i)] = family;
  }
  return ds;
}

void split_dataset(const Dataset& all, int val_n, Dataset& train, Dataset& val) {
  if (val_n < 0 || static_cast<size_t>(val_n) > all.size())
    throw InvalidParameter("split_dataset: val_n out of range");
  const size_t cut = all.size() - static_cast<size_t>(val_n);
  train = Dataset{};
  val = Dataset{};
  train.num_classes = val.num_classes = all.num_classes;
  train.name = all.name + ":train";
  val.name = all.name + ":val";
  train.images.assign(all.images.begin(), all.images.begin() + static_cast<std::ptrdiff_t>(cut));
  train.labels.assign(all.labels.begin(), all.labels.begin() + static_cast<std::ptrdiff_t>(cut));
  val.images.assign(all.images.begin() + static_cast<std::ptrdiff_t>(cut), all.images.end());
  val.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(cut), all.labels.end());
}

}  // namespace fqln
