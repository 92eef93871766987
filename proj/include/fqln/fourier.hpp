#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "fqln/corruptions.hpp"
#include "fqln/dataset.hpp"
#include "fqln/tensor.hpp"

namespace fqln {

using cdouble = std::complex<double>;

struct ComplexGrid {
  int h = 0, w = 0;
  std::vector<cdouble> v;

  cdouble& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  cdouble at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// Unnormalised forward 2-D DFT of a real grid. Power-of-two axes take the
// radix-2 path; other lengths use the direct transform.
ComplexGrid dft2(const std::vector<double>& x, int h, int w);

// Inverse of dft2 (carries the 1/(H*W) factor); returns the real part.
std::vector<double> idft2_real(const ComplexGrid& g);

// Moves DC to (floor(h/2), floor(w/2)). Applying it twice on even axes is the
// identity.
std::vector<double> fftshift(const std::vector<double>& g, int h, int w);
ComplexGrid fftshift(const ComplexGrid& g);

// Circular high-pass mask in centred (post-fftshift) coordinates. Bins
// strictly farther than `radius` from the centre pass; the DC bin never
// passes, whatever the radius.
struct HighPassMask {
  int h = 0, w = 0;
  double radius = 0.0;
  std::vector<std::uint8_t> pass;

  bool passes(int y, int x) const { return pass[static_cast<size_t>(y) * w + x] != 0; }
  std::int64_t count_passed() const;
};

HighPassMask make_highpass_mask(int h, int w, double radius);

// Default mask radius: a quarter of the image height.
inline double default_highpass_radius(int h) { return h / 4.0; }

// High-frequency energy fraction of the difference image:
//   f_hf = sum over mask-passed bins of |F(corrupted - clean)|^2
//        / sum over all non-DC bins   of |F(corrupted - clean)|^2
// Channels aggregate into one ratio. A difference that is exactly zero has no
// spectrum at all and raises UndefinedRatio; a pure DC shift returns 0.
double f_hf(const Image& clean, const Image& corrupted, const HighPassMask& mask);

// Mean magnitude spectrum E[| F(C(X) - X) |] over the first n images,
// channel-averaged and DC-centred.
struct Spectrum {
  int h = 0, w = 0;
  std::vector<double> mag;
  int images_used = 0;
};

Spectrum corruption_spectrum(const Dataset& ds, const CorruptionSpec& spec, int n,
                             std::uint64_t seed);

struct OrderRow {
  CorruptionKind kind;
  int severity = 1;
  double mean_f_hf = 0.0;
  int used = 0;
  int skipped = 0;  // images where the corruption was a no-op
};

// Ranks corruptions by mean f_hf over the first n images, ascending; ties
// break on the kind name. No-op images are skipped and counted.
std::vector<OrderRow> order_corruptions(const Dataset& ds,
                                        const std::vector<CorruptionSpec>& specs, int n,
                                        double radius, std::uint64_t seed);

void write_spectrum_csv(const std::string& path, const Spectrum& s);
void write_order_csv(const std::string& path, const std::vector<OrderRow>& rows);

}  // namespace fqln
