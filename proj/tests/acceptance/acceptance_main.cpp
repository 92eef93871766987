// Acceptance gate: twelve checks, one verdict line each, non-zero exit when
// any fails. The first five are exact property suites with independent
// oracles; 6..11 read the pattern checks computed by the repro pipeline;
// 12 reruns a reduced pipeline twice and byte-compares every artifact.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fqln/corruptions.hpp"
#include "fqln/dataset.hpp"
#include "fqln/eval.hpp"
#include "fqln/fourier.hpp"
#include "fqln/layers.hpp"
#include "fqln/pipeline.hpp"
#include "fqln/rng.hpp"
#include "fqln/tensor.hpp"
#include "fqln/tv.hpp"

#include "../ref_kernels.hpp"

namespace fs = std::filesystem;
using namespace fqln;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool g_any_fail = false;

void verdict(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) g_any_fail = true;
  std::printf("[%s] %2d. %s (%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Tensor random_tensor(Shape4 s, RngStream& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(s);
  for (long i = 0; i < t.numel(); ++i)
    t.data()[i] = lo + static_cast<float>(rng.next_uniform()) * (hi - lo);
  return t;
}

std::vector<float> random_vec(int n, RngStream& rng, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(static_cast<size_t>(n));
  for (float& x : v) x = lo + static_cast<float>(rng.next_uniform()) * (hi - lo);
  return v;
}

std::vector<double> widen(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.numel());
}

std::vector<double> widen(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// ---------------------------------------------------------------------------
// 1. layer backward passes and the smoothness gradient against float64
//    central differences

struct GradProbe {
  double worst = 0.0;
  void feed(const std::vector<double>& got, const std::vector<double>& want) {
    worst = std::max(worst, ref::max_rel_err(got, want));
  }
};

// Scalar probe loss: weighted sum of the forward output so every output
// element contributes to each parameter's gradient.
template <typename MakeOut>
std::vector<double> fd_of(const std::vector<double>& at, const MakeOut& loss) {
  return ref::fd_gradient(at, loss);
}

void grad_conv(RngStream& rng, GradProbe& probe, bool fast_path) {
  const int n = 1 + rng.next_index(2), ic = 1 + rng.next_index(2);
  const int oc = 1 + rng.next_index(3);
  const int h = fast_path ? 6 + rng.next_index(3) : 5 + rng.next_index(4);
  const int w = fast_path ? 6 + rng.next_index(3) : 5 + rng.next_index(4);
  const int k = fast_path ? 3 : (rng.next_index(2) ? 3 : 2);
  const int stride = fast_path ? 1 : 1 + rng.next_index(2);
  const int pad = fast_path ? 1 : rng.next_index(2);

  Tensor x = random_tensor({n, ic, h, w}, rng);
  Tensor wgt = random_tensor({oc, ic, k, k}, rng);
  std::vector<float> bias = random_vec(oc, rng);
  const Shape4 os = conv2d_out_shape(x.shape(), wgt.shape(), stride, pad);
  Tensor r = random_tensor(os, rng);

  Tensor y(os);
  conv2d_forward(x, wgt, bias, stride, pad, y);
  Tensor dx(x.shape()), dw(wgt.shape());
  std::vector<float> db(static_cast<size_t>(oc));
  conv2d_backward(x, wgt, r, stride, pad, dx, dw, db);

  const auto rg = widen(r);
  auto loss = [&](const ref::Grid<double>& gx, const ref::Grid<double>& gw,
                  const std::vector<double>& gb) {
    ref::Grid<double> out = ref::conv2d_forward(gx, gw, gb, stride, pad);
    double acc = 0.0;
    for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * rg[i];
    return acc;
  };
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  ref::Grid<double> gw = ref::from_tensor<double>(wgt);
  std::vector<double> gb = widen(bias);

  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               return loss(p, gw, gb);
             }));
  probe.feed(widen(dw), fd_of(gw.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gw;
               p.v = v;
               return loss(gx, p, gb);
             }));
  probe.feed(widen(db),
             fd_of(gb, [&](const std::vector<double>& v) { return loss(gx, gw, v); }));
}

void grad_bn(RngStream& rng, GradProbe& probe) {
  const int n = 2 + rng.next_index(3), c = 1 + rng.next_index(3);
  const int h = 2 + rng.next_index(4), w = 2 + rng.next_index(4);
  Tensor x = random_tensor({n, c, h, w}, rng);
  std::vector<float> gamma = random_vec(c, rng, 0.5f, 1.5f);
  std::vector<float> beta = random_vec(c, rng);
  std::vector<float> rmean(static_cast<size_t>(c), 0.0f);
  std::vector<float> rvar(static_cast<size_t>(c), 1.0f);
  const float eps = 1e-5f;
  Tensor r = random_tensor(x.shape(), rng);

  Tensor y(x.shape());
  BnCache cache;
  batchnorm_forward_train(x, gamma, beta, eps, 0.1f, rmean, rvar, y, cache);
  Tensor dx(x.shape());
  std::vector<float> dgamma(static_cast<size_t>(c)), dbeta(static_cast<size_t>(c));
  batchnorm_backward(r, cache, gamma, dx, dgamma, dbeta);

  const auto rg = widen(r);
  auto loss = [&](const ref::Grid<double>& gx, const std::vector<double>& gg,
                  const std::vector<double>& gb) {
    ref::BnOut<double> out = ref::batchnorm_train(gx, gg, gb, static_cast<double>(eps));
    double acc = 0.0;
    for (size_t i = 0; i < out.y.v.size(); ++i) acc += out.y.v[i] * rg[i];
    return acc;
  };
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  std::vector<double> gg = widen(gamma), gb = widen(beta);

  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               return loss(p, gg, gb);
             }));
  probe.feed(widen(dgamma),
             fd_of(gg, [&](const std::vector<double>& v) { return loss(gx, v, gb); }));
  probe.feed(widen(dbeta),
             fd_of(gb, [&](const std::vector<double>& v) { return loss(gx, gg, v); }));
}

// relu and maxpool are piecewise linear: keep every input away from the
// kinks so central differences see a single linear piece.
Tensor kink_free_tensor(Shape4 s, RngStream& rng, float margin) {
  Tensor t(s);
  for (long i = 0; i < t.numel(); ++i) {
    float v = 0.0f;
    do {
      v = -1.0f + static_cast<float>(rng.next_uniform()) * 2.0f;
    } while (std::fabs(v) < margin);
    t.data()[i] = v;
  }
  return t;
}

void grad_relu(RngStream& rng, GradProbe& probe) {
  const int n = 1 + rng.next_index(2), c = 1 + rng.next_index(3);
  Tensor x = kink_free_tensor({n, c, 3 + rng.next_index(4), 3 + rng.next_index(4)}, rng,
                              1e-3f);
  Tensor r = random_tensor(x.shape(), rng);
  Tensor y(x.shape()), dx(x.shape());
  relu_forward(x, y);
  relu_backward(x, r, dx);

  const auto rg = widen(r);
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               ref::Grid<double> out = ref::relu(p);
               double acc = 0.0;
               for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * rg[i];
               return acc;
             }));
}

void grad_maxpool(RngStream& rng, GradProbe& probe) {
  const int n = 1 + rng.next_index(2), c = 1 + rng.next_index(2);
  const int h = 2 * (2 + rng.next_index(2)), w = 2 * (2 + rng.next_index(2));
  // regenerate until every 2x2 window has a clear margin between its two
  // largest values
  Tensor x;
  for (;;) {
    x = random_tensor({n, c, h, w}, rng);
    bool ok = true;
    for (int b = 0; b < n && ok; ++b)
      for (int ch = 0; ch < c && ok; ++ch)
        for (int y0 = 0; y0 + 1 < h && ok; y0 += 2)
          for (int x0 = 0; x0 + 1 < w && ok; x0 += 2) {
            float best = -10.0f, second = -10.0f;
            for (int dy = 0; dy < 2; ++dy)
              for (int dxi = 0; dxi < 2; ++dxi) {
                const float v = ref::from_tensor<float>(x).at(b, ch, y0 + dy, x0 + dxi);
                if (v > best) {
                  second = best;
                  best = v;
                } else if (v > second) {
                  second = v;
                }
              }
            if (best - second < 1e-3f) ok = false;
          }
    if (ok) break;
  }

  Tensor y({n, c, h / 2, w / 2});
  std::vector<int> argmax;
  maxpool2_forward(x, y, argmax);
  Tensor r = random_tensor(y.shape(), rng);
  Tensor dx(x.shape());
  maxpool2_backward(r, argmax, dx);

  const auto rg = widen(r);
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               ref::Grid<double> out = ref::maxpool2(p);
               double acc = 0.0;
               for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * rg[i];
               return acc;
             }));
}

void grad_gap(RngStream& rng, GradProbe& probe) {
  const int n = 1 + rng.next_index(3), c = 1 + rng.next_index(4);
  Tensor x = random_tensor({n, c, 2 + rng.next_index(4), 2 + rng.next_index(4)}, rng);
  Tensor y({n, c, 1, 1});
  gap_forward(x, y);
  Tensor r = random_tensor(y.shape(), rng);
  Tensor dx(x.shape());
  gap_backward(r, dx);

  const auto rg = widen(r);
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               ref::Grid<double> out = ref::gap(p);
               double acc = 0.0;
               for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * rg[i];
               return acc;
             }));
}

void grad_linear(RngStream& rng, GradProbe& probe) {
  const int n = 1 + rng.next_index(3), in = 2 + rng.next_index(6), out = 2 + rng.next_index(4);
  Tensor x = random_tensor({n, in, 1, 1}, rng);
  Tensor wgt = random_tensor({out, in, 1, 1}, rng);
  std::vector<float> bias = random_vec(out, rng);
  Tensor y({n, out, 1, 1});
  linear_forward(x, wgt, bias, y);
  Tensor r = random_tensor(y.shape(), rng);
  Tensor dx(x.shape()), dw(wgt.shape());
  std::vector<float> db(static_cast<size_t>(out));
  linear_backward(x, wgt, r, dx, dw, db);

  const auto rg = widen(r);
  auto loss = [&](const ref::Grid<double>& gx, const ref::Grid<double>& gw,
                  const std::vector<double>& gb) {
    ref::Grid<double> o = ref::linear(gx, gw, gb);
    double acc = 0.0;
    for (size_t i = 0; i < o.v.size(); ++i) acc += o.v[i] * rg[i];
    return acc;
  };
  ref::Grid<double> gx = ref::from_tensor<double>(x);
  ref::Grid<double> gw = ref::from_tensor<double>(wgt);
  std::vector<double> gb = widen(bias);
  probe.feed(widen(dx), fd_of(gx.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gx;
               p.v = v;
               return loss(p, gw, gb);
             }));
  probe.feed(widen(dw), fd_of(gw.v, [&](const std::vector<double>& v) {
               ref::Grid<double> p = gw;
               p.v = v;
               return loss(gx, p, gb);
             }));
  probe.feed(widen(db),
             fd_of(gb, [&](const std::vector<double>& v) { return loss(gx, gw, v); }));
}

void grad_tv(RngStream& rng, GradProbe& probe) {
  const int h = 4 + rng.next_index(4), w = 4 + rng.next_index(4);
  // regenerate until every in-plane difference clears the kink margin
  std::vector<float> plane;
  for (;;) {
    plane = random_vec(h * w, rng);
    bool ok = true;
    for (int y = 0; y < h && ok; ++y)
      for (int x = 0; x < w && ok; ++x) {
        if (x + 1 < w && std::fabs(plane[y * w + x + 1] - plane[y * w + x]) < 1e-3f)
          ok = false;
        if (y + 1 < h && std::fabs(plane[(y + 1) * w + x] - plane[y * w + x]) < 1e-3f)
          ok = false;
      }
    if (ok) break;
  }
  std::vector<float> grad(plane.size());
  tv_grad(plane.data(), h, w, grad.data());

  std::vector<double> at = widen(plane);
  probe.feed(widen(grad), fd_of(at, [&](const std::vector<double>& v) {
               return ref::tv_plane(v.data(), h, w);
             }));
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  RngStream rng(0xACC1);
  GradProbe probe;
  for (int trial = 0; trial < 20; ++trial) {
    grad_conv(rng, probe, true);
    grad_conv(rng, probe, false);
    grad_bn(rng, probe);
    grad_relu(rng, probe);
    grad_maxpool(rng, probe);
    grad_gap(rng, probe);
    grad_linear(rng, probe);
    grad_tv(rng, probe);
  }
  const double secs = seconds_since(t0);
  const bool pass = probe.worst < 1e-3 && secs < 60.0;
  verdict(1, pass, "layer backwards and smoothness gradient match float64 central differences",
          "worst rel err " + fmt(probe.worst) + ", " + fmt(secs, "%.1f") + "s, budget 60s");
}

// ---------------------------------------------------------------------------
// 2. exact smoothness arithmetic plus homogeneity and shift invariance

void criterion_tv_arithmetic() {
  const float quad[4] = {0.0f, 1.0f, 2.0f, 3.0f};
  const double hand = tv_norm(quad, 2, 2);
  bool pass = hand == 6.0;
  double worst = 0.0;

  RngStream rng(0xACC2);
  for (int i = 0; i < 100; ++i) {
    const int h = 3 + rng.next_index(8), w = 3 + rng.next_index(8);
    std::vector<float> p = random_vec(h * w, rng);
    const double base = tv_norm(p.data(), h, w);

    const float alpha = -2.0f + static_cast<float>(rng.next_uniform()) * 4.0f;
    std::vector<float> scaled(p.size()), shifted(p.size());
    const float shift = static_cast<float>(rng.next_uniform()) * 10.0f - 5.0f;
    for (size_t j = 0; j < p.size(); ++j) {
      scaled[j] = alpha * p[j];
      shifted[j] = p[j] + shift;
    }
    const double rel = std::max(1.0, base);
    worst = std::max(
        worst, std::fabs(tv_norm(scaled.data(), h, w) - std::fabs(alpha) * base) / rel);
    worst = std::max(worst, std::fabs(tv_norm(shifted.data(), h, w) - base) / rel);
  }
  pass = pass && worst < 1e-6;
  verdict(2, pass, "smoothness norm hand value, homogeneity, and shift invariance",
          "tv([[0,1],[2,3]]) = " + fmt(hand, "%.1f") + ", worst deviation " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 3. transform identities

void criterion_fourier() {
  RngStream rng(0xACC3);
  double worst_parseval = 0.0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> g(32 * 32);
    for (double& v : g) v = rng.next_uniform() * 2.0 - 1.0;
    const ComplexGrid f = dft2(g, 32, 32);
    double space = 0.0, freq = 0.0;
    for (double v : g) space += v * v;
    for (const auto& c : f.v) freq += std::norm(c);
    freq /= 32.0 * 32.0;
    worst_parseval = std::max(worst_parseval, std::fabs(space - freq) / space);
  }

  double worst_flat = 0.0;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g(32 * 32, 0.0);
    g[static_cast<size_t>(rng.next_index(32 * 32))] = 1.0;
    const ComplexGrid f = dft2(g, 32, 32);
    for (const auto& c : f.v) worst_flat = std::max(worst_flat, std::fabs(std::abs(c) - 1.0));
  }

  bool involution = true;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g(32 * 32);
    for (double& v : g) v = rng.next_uniform();
    if (fftshift(fftshift(g, 32, 32), 32, 32) != g) involution = false;
  }

  const bool pass = worst_parseval < 1e-5 && worst_flat < 1e-6 && involution;
  verdict(3, pass, "transform satisfies Parseval, impulse flatness, and shift involution",
          "Parseval " + fmt(worst_parseval) + ", impulse " + fmt(worst_flat) +
              std::string(involution ? ", involution exact" : ", involution BROKEN"));
}

// ---------------------------------------------------------------------------
// 4. high-frequency fraction against the passed-bin count

void criterion_fhf() {
  const HighPassMask mask = make_highpass_mask(32, 32, 8.0);
  const double frac =
      static_cast<double>(mask.count_passed()) / (32.0 * 32.0 - 1.0);

  RngStream rng(0xACC4);
  double mean = 0.0;
  for (int t = 0; t < 200; ++t) {
    Image clean(1, 32, 32), noisy(1, 32, 32);
    for (size_t i = 0; i < clean.data.size(); ++i) {
      clean.data[i] = static_cast<float>(rng.next_uniform());
      noisy.data[i] = clean.data[i] + static_cast<float>(0.1 * rng.next_gaussian());
    }
    mean += f_hf(clean, noisy, mask);
  }
  mean /= 200.0;

  Image flat(1, 32, 32), lifted(1, 32, 32);
  for (size_t i = 0; i < flat.data.size(); ++i) {
    flat.data[i] = 0.25f;
    lifted.data[i] = 0.5f;
  }
  const double dc_only = f_hf(flat, lifted, mask);

  const bool pass = std::fabs(mean - frac) <= 0.02 && dc_only == 0.0;
  verdict(4, pass, "high-frequency fraction of white noise matches the passed-bin share",
          "mean " + fmt(mean, "%.4f") + " vs fraction " + fmt(frac, "%.4f") +
              ", dc-only " + fmt(dc_only, "%.1f"));
}

// ---------------------------------------------------------------------------
// 5. corruption ordering splits low from high frequency

void criterion_ordering() {
  const auto t0 = Clock::now();
  Dataset ds = synth_shapes(4242, 500, 32, 10);
  const std::vector<CorruptionSpec> specs = {
      {CorruptionKind::Contrast, 3},     {CorruptionKind::Brightness, 3},
      {CorruptionKind::Fog, 3},          {CorruptionKind::GaussianBlur, 3},
      {CorruptionKind::GaussianNoise, 3}, {CorruptionKind::ImpulseNoise, 3}};
  const std::vector<OrderRow> rows =
      order_corruptions(ds, specs, 500, default_highpass_radius(32), 777);

  auto mean_of = [&](CorruptionKind k) {
    for (const OrderRow& r : rows)
      if (r.kind == k) return r.mean_f_hf;
    return -1.0;
  };
  const CorruptionKind lf[] = {CorruptionKind::Contrast, CorruptionKind::Brightness,
                               CorruptionKind::Fog};
  const CorruptionKind hf[] = {CorruptionKind::GaussianBlur, CorruptionKind::GaussianNoise,
                               CorruptionKind::ImpulseNoise};
  bool split = true;
  double worst_gap = 1.0;
  for (CorruptionKind a : lf)
    for (CorruptionKind b : hf) {
      const double gap = mean_of(b) - mean_of(a);
      worst_gap = std::min(worst_gap, gap);
      if (gap <= 0.0) split = false;
    }
  const double secs = seconds_since(t0);
  const bool pass = split && secs < 120.0;
  verdict(5, pass, "every low-frequency corruption ranks below every high-frequency one",
          "500 images, smallest gap " + fmt(worst_gap) + ", " + fmt(secs, "%.1f") +
              "s, budget 120s");
}

// ---------------------------------------------------------------------------
// 6..11 from the repro pipeline's pattern checks

void pattern_verdict(int id, const ReproSummary& summary, const std::string& name,
                     const std::string& what, bool timing_ok, const std::string& timing_note) {
  const PatternCheck* check = summary.find(name);
  if (!check) {
    verdict(id, false, what, "pipeline produced no '" + name + "' check");
    return;
  }
  std::string detail = check->detail;
  if (!timing_note.empty()) detail += ", " + timing_note;
  verdict(id, check->pass && timing_ok, what, detail);
}

void criteria_pipeline(const std::string& zoo_dir) {
  ReproConfig cfg;
  cfg.out_dir = zoo_dir;
  const char* reuse = std::getenv("FQLN_ZOO_REUSE");
  cfg.reuse = reuse && std::string(reuse) == "1";

  ReproSummary summary;
  std::string failure;
  try {
    fs::create_directories(zoo_dir);
    std::ofstream log(fs::path(zoo_dir) / "pipeline_log.txt");
    summary = run_repro(cfg, &log);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  if (!failure.empty()) {
    for (int id = 6; id <= 11; ++id)
      verdict(id, false, "pipeline pattern check", "pipeline failed: " + failure);
    return;
  }

  const bool seg_ok =
      summary.base_vs_tv_seconds > 0.0 && summary.base_vs_tv_seconds < 900.0;
  pattern_verdict(6, summary, "tv_corruption_gain",
                  "smoothness penalty cuts noise and blur error at small clean cost",
                  seg_ok,
                  "segment " + fmt(summary.base_vs_tv_seconds, "%.0f") + "s, budget 900s");
  pattern_verdict(7, summary, "lf_finetune_gain",
                  "low-frequency fine-tune improves contrast+brightness+fog", true, "");
  const bool total_ok = summary.total_seconds > 0.0 && summary.total_seconds < 1800.0;
  pattern_verdict(8, summary, "rohl_vs_samebias",
                  "two-bias expert mixture beats the same-bias ensemble", total_ok,
                  "pipeline " + fmt(summary.total_seconds, "%.0f") + "s, budget 1800s");
  pattern_verdict(9, summary, "tap_placement",
                  "penalty on the first conv beats the second under noise", true, "");
  pattern_verdict(10, summary, "bn_adaptation",
                  "normalization re-estimation helps on most corrupted sets", true, "");
  pattern_verdict(11, summary, "feature_stability",
                  "smoothness-trained features move less under noise", true, "");
}

// ---------------------------------------------------------------------------
// 12. byte determinism of the reduced pipeline

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename());
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b) {
    why = a.string() + " and " + b.string() + " list different files";
    return false;
  }
  for (const std::string& name : names_a)
    if (slurp(a / name) != slurp(b / name)) {
      why = name + " differs";
      return false;
    }
  return true;
}

void criterion_determinism(const std::string& zoo_dir) {
  const fs::path base = fs::path(zoo_dir) / "determinism";
  const std::string flags =
      " --train-n 600 --val-n 200 --seeds 101 --epochs 1 --ft-epochs 1";
  bool pass = true;
  std::string detail;
  for (const char* leg : {"a", "b"}) {
    const fs::path dir = base / leg;
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cmd = std::string(FQLN_BIN) + " repro --out-dir " + dir.string() +
                            flags + " > " + (dir.string() + ".log") + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      pass = false;
      detail = std::string("reduced pipeline run '") + leg + "' failed";
      break;
    }
  }
  if (pass) {
    std::string why;
    if (!same_tree(base / "a" / "ckpt", base / "b" / "ckpt", why) ||
        !same_tree(base / "a" / "reports", base / "b" / "reports", why)) {
      pass = false;
      detail = why;
    } else {
      size_t files = 0, bytes = 0;
      for (const auto& e : fs::recursive_directory_iterator(base / "a"))
        if (e.is_regular_file()) {
          ++files;
          bytes += e.file_size();
        }
      detail = "two runs, " + std::to_string(files) + " files byte-identical (" +
               std::to_string(bytes / 1024) + " KiB)";
    }
  }
  verdict(12, pass, "identical seeds reproduce every checkpoint and report byte for byte",
          detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::string zoo_dir = "acceptance_zoo";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--zoo-dir" && i + 1 < argc) {
      zoo_dir = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--zoo-dir <dir>]\n", argv[0]);
      return 2;
    }
  }

  criterion_gradients();
  criterion_tv_arithmetic();
  criterion_fourier();
  criterion_fhf();
  criterion_ordering();
  criteria_pipeline(zoo_dir);
  criterion_determinism(zoo_dir);

  return g_any_fail ? 1 : 0;
}
