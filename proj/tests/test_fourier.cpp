#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "fqln/corruptions.hpp"
#include "fqln/dataset.hpp"
#include "fqln/error.hpp"
#include "fqln/fourier.hpp"
#include "fqln/rng.hpp"

using namespace fqln;

namespace {

// Textbook O((HW)^2) transform used as the oracle for both DFT paths.
ComplexGrid naive_dft2(const std::vector<double>& x, int h, int w) {
  ComplexGrid g;
  g.h = h;
  g.w = w;
  g.v.assign(static_cast<size_t>(h) * w, {0.0, 0.0});
  for (int k = 0; k < h; ++k)
    for (int l = 0; l < w; ++l) {
      cdouble acc{0.0, 0.0};
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>(k) * y / h + static_cast<double>(l) * xx / w);
          acc += x[static_cast<size_t>(y) * w + xx] * cdouble{std::cos(ang), std::sin(ang)};
        }
      g.at(k, l) = acc;
    }
  return g;
}

std::vector<double> random_grid(int h, int w, std::uint64_t seed) {
  RngStream s(seed);
  std::vector<double> g(static_cast<size_t>(h) * w);
  for (auto& v : g) v = s.next_uniform() * 2.0 - 1.0;
  return g;
}

double spectrum_max_rel_err(const ComplexGrid& got, const ComplexGrid& want) {
  double worst = 0.0, scale = 0.0;
  for (const auto& v : want.v) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < want.v.size(); ++i)
    worst = std::max(worst, std::abs(got.v[i] - want.v[i]) / std::max(scale, 1e-300));
  return worst;
}

Image const_image(int c, int h, int w, float v) {
  Image img(c, h, w);
  for (auto& p : img.data) p = v;
  return img;
}

}  // namespace

TEST_SUITE("fourier") {

TEST_CASE("radix-2 and direct transforms match the quadratic oracle") {
  // 8x8 exercises the power-of-two path, 6x10 the direct one, 8x6 a mix.
  for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{8, 6}}) {
    auto x = random_grid(h, w, 100 + static_cast<std::uint64_t>(h * w));
    CHECK(spectrum_max_rel_err(dft2(x, h, w), naive_dft2(x, h, w)) < 1e-10);
  }
}

TEST_CASE("inverse transform round-trips the grid") {
  for (auto [h, w] : {std::pair{16, 16}, std::pair{6, 10}}) {
    auto x = random_grid(h, w, 42);
    auto back = idft2_real(dft2(x, h, w));
    REQUIRE(back.size() == x.size());
    for (size_t i = 0; i < x.size(); ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-9));
  }
}

TEST_CASE("transform is linear") {
  const int h = 8, w = 8;
  auto x = random_grid(h, w, 1), y = random_grid(h, w, 2);
  std::vector<double> z(x.size());
  for (size_t i = 0; i < x.size(); ++i) z[i] = 2.0 * x[i] - 0.5 * y[i];
  auto fx = dft2(x, h, w), fy = dft2(y, h, w), fz = dft2(z, h, w);
  for (size_t i = 0; i < fz.v.size(); ++i)
    CHECK(std::abs(fz.v[i] - (2.0 * fx.v[i] - 0.5 * fy.v[i])) < 1e-10);
}

TEST_CASE("energy is preserved up to the 1/(HW) convention") {
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_grid(32, 32, 500 + static_cast<std::uint64_t>(trial));
    double spatial = 0.0;
    for (double v : x) spatial += v * v;
    auto f = dft2(x, 32, 32);
    double spectral = 0.0;
    for (const auto& v : f.v) spectral += std::norm(v);
    spectral /= 32.0 * 32.0;
    CHECK(std::abs(spectral - spatial) / spatial < 1e-5);
  }
}

TEST_CASE("an impulse has a flat magnitude spectrum") {
  std::vector<double> x(32 * 32, 0.0);
  x[0] = 3.0;
  auto f = dft2(x, 32, 32);
  for (const auto& v : f.v) CHECK(std::abs(std::abs(v) - 3.0) < 1e-6);
  // position only changes phase
  std::vector<double> y(32 * 32, 0.0);
  y[static_cast<size_t>(7) * 32 + 19] = 3.0;
  auto g = dft2(y, 32, 32);
  for (const auto& v : g.v) CHECK(std::abs(std::abs(v) - 3.0) < 1e-6);
}

TEST_CASE("fftshift centres DC and is an involution on even axes") {
  auto x = random_grid(8, 8, 3);
  auto once = fftshift(x, 8, 8);
  auto twice = fftshift(once, 8, 8);
  CHECK(twice == x);

  // constant grid: all spectral mass lands on the centred DC bin
  std::vector<double> c(8 * 8, 1.0);
  auto spec = fftshift(dft2(c, 8, 8));
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) {
      const double m = std::abs(spec.at(y, xx));
      if (y == 4 && xx == 4)
        CHECK(m == doctest::Approx(64.0));
      else
        CHECK(m < 1e-9);
    }
}

TEST_CASE("the checkerboard lands on the Nyquist bin") {
  std::vector<double> x(8 * 8);
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx) x[static_cast<size_t>(y) * 8 + xx] = ((y + xx) % 2) ? -1.0 : 1.0;
  auto spec = fftshift(dft2(x, 8, 8));
  // Nyquist (4,4) pre-shift moves to (0,0); it is the farthest bin from centre.
  CHECK(std::abs(spec.at(0, 0)) == doctest::Approx(64.0));
  double rest = 0.0;
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx)
      if (!(y == 0 && xx == 0)) rest += std::abs(spec.at(y, xx));
  CHECK(rest < 1e-9);
}

TEST_CASE("high-pass mask counts and excludes DC") {
  auto m0 = make_highpass_mask(32, 32, 0.0);
  CHECK(m0.count_passed() == 32 * 32 - 1);
  CHECK_FALSE(m0.passes(16, 16));

  auto m8 = make_highpass_mask(32, 32, 8.0);
  CHECK(m8.count_passed() < m0.count_passed());
  CHECK(m8.passes(0, 0));        // corner is ~22.6 bins out
  CHECK_FALSE(m8.passes(16, 24));  // exactly radius 8: strict inequality
  CHECK(m8.passes(16, 25));

  auto mall = make_highpass_mask(32, 32, 64.0);
  CHECK(mall.count_passed() == 0);
}

TEST_CASE("hf fraction: degenerate differences") {
  auto mask = make_highpass_mask(16, 16, 4.0);
  Image clean = const_image(1, 16, 16, 0.25f);
  CHECK_THROWS_AS(f_hf(clean, clean, mask), UndefinedRatio);

  Image shifted = const_image(1, 16, 16, 0.75f);  // pure DC difference
  CHECK(f_hf(clean, shifted, mask) == 0.0);

  Image wrong(1, 8, 8);
  CHECK_THROWS_AS(f_hf(clean, wrong, mask), ShapeError);
}

TEST_CASE("hf fraction of a checkerboard difference is exactly one") {
  Image clean = const_image(1, 8, 8, 0.5f);
  Image cor = clean;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) cor.at(0, y, x) += ((y + x) % 2) ? -0.25f : 0.25f;
  auto mask = make_highpass_mask(8, 8, 2.0);
  CHECK(f_hf(clean, cor, mask) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("white-noise difference matches the passed-bin fraction") {
  auto mask = make_highpass_mask(32, 32, 8.0);
  const double frac =
      static_cast<double>(mask.count_passed()) / (32.0 * 32.0 - 1.0);
  RngStream s(77);
  double mean = 0.0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    Image clean = const_image(1, 32, 32, 0.5f);
    Image cor = clean;
    for (auto& v : cor.data) v = clamp01(v + 0.05f * static_cast<float>(s.next_gaussian()));
    mean += f_hf(clean, cor, mask);
  }
  mean /= trials;
  CHECK(std::abs(mean - frac) < 0.02);
}

TEST_CASE("brightness spectra concentrate at DC, noise spectra do not") {
  Dataset ds = synth_shapes(4242, 64, 32, 10);
  Spectrum bright = corruption_spectrum(ds, {CorruptionKind::Brightness, 3}, 32, 9);
  Spectrum noise = corruption_spectrum(ds, {CorruptionKind::GaussianNoise, 3}, 32, 9);
  REQUIRE(bright.images_used == 32);
  REQUIRE(bright.h == 32);
  const size_t centre = static_cast<size_t>(16) * 32 + 16;
  double bright_total = 0.0, noise_total = 0.0;
  for (double v : bright.mag) {
    REQUIRE(v >= 0.0);
    bright_total += v;
  }
  for (double v : noise.mag) noise_total += v;
  CHECK(bright.mag[centre] / bright_total > 0.5);
  CHECK(noise.mag[centre] / noise_total < 0.1);
}

TEST_CASE("corruption ordering ranks blur-like below noise-like") {
  Dataset ds = synth_shapes(515, 64, 32, 10);
  std::vector<CorruptionSpec> specs = {{CorruptionKind::GaussianNoise, 3},
                                       {CorruptionKind::Contrast, 3},
                                       {CorruptionKind::Brightness, 3}};
  auto rows = order_corruptions(ds, specs, 48, default_highpass_radius(32), 21);
  REQUIRE(rows.size() == 3);
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].mean_f_hf <= rows[i].mean_f_hf);
  CHECK(rows.back().kind == CorruptionKind::GaussianNoise);
  for (const auto& r : rows) CHECK(r.used + r.skipped == 48);
}

TEST_CASE("no-op corruptions are counted as skipped") {
  // contrast fixes a constant 0.5 image, so flat samples are no-ops
  Dataset ds;
  ds.num_classes = 2;
  ds.name = "mixed";
  RngStream s(5150);
  for (int i = 0; i < 8; ++i) {
    Image img = const_image(1, 16, 16, 0.5f);
    if (i % 2 == 1)
      for (auto& v : img.data) v = static_cast<float>(s.next_uniform());
    ds.images.push_back(std::move(img));
    ds.labels.push_back(i % 2);
  }
  auto rows = order_corruptions(ds, {{CorruptionKind::Contrast, 3}}, 8,
                                default_highpass_radius(16), 5);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].used == 4);
  CHECK(rows[0].skipped == 4);

  // an all-flat dataset leaves nothing to average over
  Dataset flat;
  flat.num_classes = 1;
  flat.name = "flat";
  for (int i = 0; i < 4; ++i) {
    flat.images.push_back(const_image(1, 16, 16, 0.5f));
    flat.labels.push_back(0);
  }
  CHECK_THROWS_AS(order_corruptions(flat, {{CorruptionKind::Contrast, 3}}, 4,
                                    default_highpass_radius(16), 5),
                  UndefinedRatio);
}

TEST_CASE("csv writers emit one row per entry") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fqln_fourier_csv";
  fs::create_directories(dir);

  Spectrum s;
  s.h = 2;
  s.w = 2;
  s.mag = {0.0, 1.0, 2.0, 3.0};
  s.images_used = 4;
  const auto spath = (dir / "spec.csv").string();
  write_spectrum_csv(spath, s);
  std::ifstream in(spath);
  REQUIRE(in.good());
  std::string line;
  int lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);  // matrix layout: one row per spectrum row
  std::ifstream in2(spath);
  std::getline(in2, line);
  CHECK(line == "0,1");

  std::vector<OrderRow> rows(2);
  rows[0].kind = CorruptionKind::Contrast;
  rows[1].kind = CorruptionKind::GaussianNoise;
  rows[1].mean_f_hf = 0.9;
  const auto opath = (dir / "order.csv").string();
  write_order_csv(opath, rows);
  std::ifstream oin(opath);
  REQUIRE(oin.good());
  lines = 0;
  while (std::getline(oin, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 3);
  fs::remove_all(dir);
}

}  // TEST_SUITE
