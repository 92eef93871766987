#include "fqln/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fqln {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place radix-2 FFT of one line. sign = -1 forward, +1 inverse.
void fft_line(cdouble* a, int n, int stride, double sign, std::vector<cdouble>& scratch) {
  scratch.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) scratch[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * stride];
  // bit-reverse permutation
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(scratch[static_cast<size_t>(i)], scratch[static_cast<size_t>(j)]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * kTwoPi / len;
    const cdouble wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cdouble w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        cdouble u = scratch[static_cast<size_t>(i + j)];
        cdouble v = scratch[static_cast<size_t>(i + j + len / 2)] * w;
        scratch[static_cast<size_t>(i + j)] = u + v;
        scratch[static_cast<size_t>(i + j + len / 2)] = u - v;
        w *= wlen;
      }
    }
  }
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i) * stride] = scratch[static_cast<size_t>(i)];
}

// Direct O(n^2) line transform for non-power-of-two lengths. Twiddles are
// indexed by (j*k) mod n so they stay exact over the whole line.
void direct_line(cdouble* a, int n, int stride, double sign, std::vector<cdouble>& scratch) {
  std::vector<cdouble> tw(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    const double ang = sign * kTwoPi * t / n;
    tw[static_cast<size_t>(t)] = cdouble(std::cos(ang), std::sin(ang));
  }
  scratch.assign(static_cast<size_t>(n), cdouble(0.0, 0.0));
  for (int k = 0; k < n; ++k) {
    cdouble acc(0.0, 0.0);
    for (int j = 0; j < n; ++j)
      acc += a[static_cast<size_t>(j) * stride] *
             tw[static_cast<size_t>((static_cast<std::int64_t>(j) * k) % n)];
    scratch[static_cast<size_t>(k)] = acc;
  }
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i) * stride] = scratch[static_cast<size_t>(i)];
}

void transform2(ComplexGrid& g, double sign) {
  const bool fast_w = is_pow2(g.w), fast_h = is_pow2(g.h);
#pragma omp parallel
  {
    std::vector<cdouble> scratch;
#pragma omp for schedule(static)
    for (int y = 0; y < g.h; ++y) {
      cdouble* row = g.v.data() + static_cast<size_t>(y) * g.w;
      if (fast_w)
        fft_line(row, g.w, 1, sign, scratch);
      else
        direct_line(row, g.w, 1, sign, scratch);
    }
#pragma omp for schedule(static)
    for (int x = 0; x < g.w; ++x) {
      cdouble* col = g.v.data() + x;
      if (fast_h)
        fft_line(col, g.h, g.w, sign, scratch);
      else
        direct_line(col, g.h, g.w, sign, scratch);
    }
  }
}

}  // namespace

ComplexGrid dft2(const std::vector<double>& x, int h, int w) {
  if (x.size() != static_cast<size_t>(h) * w)
    throw InvalidParameter("dft2: grid size does not match dimensions");
  if (h <= 0 || w <= 0) throw InvalidParameter("dft2: dimensions must be positive");
  ComplexGrid g;
  g.h = h;
  g.w = w;
  g.v.assign(x.begin(), x.end());
  transform2(g, -1.0);
  return g;
}

std::vector<double> idft2_real(const ComplexGrid& g) {
  ComplexGrid t = g;
  transform2(t, +1.0);
  std::vector<double> out(t.v.size());
  const double norm = 1.0 / (static_cast<double>(g.h) * g.w);
  for (size_t i = 0; i < out.size(); ++i) out[i] = t.v[i].real() * norm;
  return out;
}

std::vector<double> fftshift(const std::vector<double>& g, int h, int w) {
  if (g.size() != static_cast<size_t>(h) * w)
    throw InvalidParameter("fftshift: grid size does not match dimensions");
  std::vector<double> out(g.size());
  const int sy = h / 2, sx = w / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<size_t>((y + sy) % h) * w + (x + sx) % w] =
          g[static_cast<size_t>(y) * w + x];
  return out;
}

ComplexGrid fftshift(const ComplexGrid& g) {
  ComplexGrid out;
  out.h = g.h;
  out.w = g.w;
  out.v.resize(g.v.size());
  const int sy = g.h / 2, sx = g.w / 2;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      out.v[static_cast<size_t>((y + sy) % g.h) * g.w + (x + sx) % g.w] =
          g.v[static_cast<size_t>(y) * g.w + x];
  return out;
}

std::int64_t HighPassMask::count_passed() const {
  std::int64_t n = 0;
  for (auto p : pass) n += p != 0;
  return n;
}

HighPassMask make_highpass_mask(int h, int w, double radius) {
  if (h <= 0 || w <= 0) throw InvalidParameter("make_highpass_mask: bad dimensions");
  if (radius < 0.0) throw InvalidParameter("make_highpass_mask: radius must be non-negative");
  HighPassMask m;
  m.h = h;
  m.w = w;
  m.radius = radius;
  m.pass.assign(static_cast<size_t>(h) * w, 0);
  const int cy = h / 2, cx = w / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(static_cast<double>(y - cy), static_cast<double>(x - cx));
      m.pass[static_cast<size_t>(y) * w + x] = d > radius ? 1 : 0;
    }
  m.pass[static_cast<size_t>(cy) * w + cx] = 0;  // DC never passes
  return m;
}

double f_hf(const Image& clean, const Image& corrupted, const HighPassMask& mask) {
  if (clean.c != corrupted.c || clean.h != corrupted.h || clean.w != corrupted.w)
    throw ShapeError("f_hf: clean and corrupted image shapes differ");
  if (mask.h != clean.h || mask.w != clean.w)
    throw ShapeError("f_hf: mask does not match image dimensions");

  const int cy = clean.h / 2, cx = clean.w / 2;
  double passed = 0.0, non_dc = 0.0, total = 0.0;
  std::vector<double> diff(static_cast<size_t>(clean.h) * clean.w);
  for (int ch = 0; ch < clean.c; ++ch) {
    for (int y = 0; y < clean.h; ++y)
      for (int x = 0; x < clean.w; ++x)
        diff[static_cast<size_t>(y) * clean.w + x] =
            static_cast<double>(corrupted.at(ch, y, x)) - clean.at(ch, y, x);
    ComplexGrid spec = fftshift(dft2(diff, clean.h, clean.w));
    for (int y = 0; y < clean.h; ++y)
      for (int x = 0; x < clean.w; ++x) {
        const double e = std::norm(spec.at(y, x));
        total += e;
        if (y == cy && x == cx) continue;
        non_dc += e;
        if (mask.passes(y, x)) passed += e;
      }
  }
  if (total == 0.0)
    throw UndefinedRatio("f_hf: clean and corrupted images are identical");
  if (non_dc == 0.0) return 0.0;  // pure DC shift carries no high frequencies
  return passed / non_dc;
}

Spectrum corruption_spectrum(const Dataset& ds, const CorruptionSpec& spec, int n,
                             std::uint64_t seed) {
  if (n <= 0) throw InvalidParameter("corruption_spectrum: n must be positive");
  if (ds.images.empty()) throw InvalidParameter("corruption_spectrum: empty dataset");
  corruption_param(spec.kind, spec.severity);  // validates before the parallel region
  n = std::min<int>(n, static_cast<int>(ds.images.size()));
  const int h = ds.images[0].h, w = ds.images[0].w;

  Spectrum out;
  out.h = h;
  out.w = w;
  out.mag.assign(static_cast<size_t>(h) * w, 0.0);
  out.images_used = n;

  // Per-image spectra land in chunk slots, then reduce in index order so the
  // sum is independent of the thread count.
  const int chunk = 128;
  std::vector<std::vector<double>> slot(static_cast<size_t>(std::min(chunk, n)));
  for (int base = 0; base < n; base += chunk) {
    const int m = std::min(chunk, n - base);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < m; ++j) {
      const int i = base + j;
      const Image& img = ds.images[static_cast<size_t>(i)];
      RngStream st(derive_seed(seed, {0x5BECull, static_cast<std::uint64_t>(spec.kind),
                                      static_cast<std::uint64_t>(spec.severity),
                                      static_cast<std::uint64_t>(i)}));
      Image cor = apply_corruption(img, spec, st);
      std::vector<double>& acc = slot[static_cast<size_t>(j)];
      acc.assign(static_cast<size_t>(h) * w, 0.0);
      std::vector<double> diff(static_cast<size_t>(h) * w);
      for (int ch = 0; ch < img.c; ++ch) {
        for (size_t p = 0; p < diff.size(); ++p)
          diff[p] = static_cast<double>(cor.plane(ch)[p]) - img.plane(ch)[p];
        ComplexGrid g = dft2(diff, h, w);
        for (size_t p = 0; p < acc.size(); ++p) acc[p] += std::abs(g.v[p]);
      }
      for (auto& v : acc) v /= img.c;
    }
    for (int j = 0; j < m; ++j)
      for (size_t p = 0; p < out.mag.size(); ++p) out.mag[p] += slot[static_cast<size_t>(j)][p];
  }
  for (auto& v : out.mag) v /= n;
  out.mag = fftshift(out.mag, h, w);
  return out;
}

std::vector<OrderRow> order_corruptions(const Dataset& ds,
                                        const std::vector<CorruptionSpec>& specs, int n,
                                        double radius, std::uint64_t seed) {
  if (specs.empty()) throw InvalidParameter("order_corruptions: no corruption kinds given");
  if (n <= 0) throw InvalidParameter("order_corruptions: n must be positive");
  if (ds.images.empty()) throw InvalidParameter("order_corruptions: empty dataset");
  n = std::min<int>(n, static_cast<int>(ds.images.size()));
  for (const CorruptionSpec& spec : specs)
    corruption_param(spec.kind, spec.severity);  // validates before the parallel region
  const int h = ds.images[0].h, w = ds.images[0].w;
  const HighPassMask mask = make_highpass_mask(h, w, radius);

  std::vector<OrderRow> rows;
  rows.reserve(specs.size());
  for (const CorruptionSpec& spec : specs) {
    std::vector<double> val(static_cast<size_t>(n), 0.0);
    std::vector<std::uint8_t> ok(static_cast<size_t>(n), 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const Image& img = ds.images[static_cast<size_t>(i)];
      RngStream st(eval_corruption_stream(seed, spec.kind, spec.severity,
                                          static_cast<std::uint64_t>(i)));
      Image cor = apply_corruption(img, spec, st);
      try {
        val[static_cast<size_t>(i)] = f_hf(img, cor, mask);
        ok[static_cast<size_t>(i)] = 1;
      } catch (const UndefinedRatio&) {
        ok[static_cast<size_t>(i)] = 0;  // no-op image, skipped
      }
    }
    OrderRow row;
    row.kind = spec.kind;
    row.severity = spec.severity;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (ok[static_cast<size_t>(i)]) {
        sum += val[static_cast<size_t>(i)];
        ++row.used;
      } else {
        ++row.skipped;
      }
    }
    if (row.used == 0)
      throw UndefinedRatio(std::string("order_corruptions: every image was a no-op for ") +
                           corruption_name(spec.kind));
    row.mean_f_hf = sum / row.used;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const OrderRow& a, const OrderRow& b) {
    if (a.mean_f_hf != b.mean_f_hf) return a.mean_f_hf < b.mean_f_hf;
    return std::string(corruption_name(a.kind)) < corruption_name(b.kind);
  });
  return rows;
}

void write_spectrum_csv(const std::string& path, const Spectrum& s) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  char buf[40];
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", s.mag[static_cast<size_t>(y) * s.w + x]);
      out << buf << (x + 1 < s.w ? "," : "");
    }
    out << "\n";
  }
  if (!out) throw FormatError("short write to " + path);
}

void write_order_csv(const std::string& path, const std::vector<OrderRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "kind,severity,mean_f_hf,images_used,images_skipped\n";
  char buf[40];
  for (const OrderRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", r.mean_f_hf);
    out << corruption_name(r.kind) << "," << r.severity << "," << buf << "," << r.used << ","
        << r.skipped << "\n";
  }
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace fqln
