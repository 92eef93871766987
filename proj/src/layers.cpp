#include "fqln/layers.hpp"

#include <algorithm>
#include <cmath>

namespace fqln {

namespace {

// Dot product with eight independent accumulators so the compiler can keep
// the loop in SIMD registers without reassociating a single serial sum. The
// collapse order is fixed, so results are bitwise reproducible.
inline float dot_f32(const float* __restrict a, const float* __restrict b, int n) {
  float lane[8] = {0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((lane[0] + lane[1]) + (lane[2] + lane[3])) +
          ((lane[4] + lane[5]) + (lane[6] + lane[7]))) +
         tail;
}

inline double lane_collapse(const double* lane) {
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

inline double sum_f64(const float* __restrict a, long n) {
  double lane[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  long i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lane[l] += static_cast<double>(a[i + l]);
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(a[i]);
  return lane_collapse(lane) + tail;
}

inline double var_sum_f64(const float* __restrict a, long n, double mu) {
  double lane[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  long i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) {
      const double d = static_cast<double>(a[i + l]) - mu;
      lane[l] += d * d;
    }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - mu;
    tail += d * d;
  }
  return lane_collapse(lane) + tail;
}

inline void sum_pair_f64(const float* __restrict g, const float* __restrict h, long n, double& sg,
                         double& sgh) {
  double lg[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  double lgh[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  long i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) {
      lg[l] += static_cast<double>(g[i + l]);
      lgh[l] += static_cast<double>(g[i + l]) * static_cast<double>(h[i + l]);
    }
  double tg = 0.0, tgh = 0.0;
  for (; i < n; ++i) {
    tg += static_cast<double>(g[i]);
    tgh += static_cast<double>(g[i]) * static_cast<double>(h[i]);
  }
  sg = lane_collapse(lg) + tg;
  sgh = lane_collapse(lgh) + tgh;
}

// Copies one sample's planes with a one-pixel zero halo. The halo turns the
// 3x3 pad-1 kernels below into branch-free row sweeps.
void load_padded(const Tensor& t, int in, std::vector<float>& buf) {
  const Shape4 s = t.shape();
  const int pw = s.w + 2, ph = s.h + 2;
  buf.assign(static_cast<size_t>(s.c) * ph * pw, 0.0f);
  for (int ic = 0; ic < s.c; ++ic) {
    const float* src = t.plane(in, ic);
    float* dst = buf.data() + static_cast<size_t>(ic) * ph * pw;
    for (int y = 0; y < s.h; ++y)
      std::copy(src + static_cast<size_t>(y) * s.w, src + static_cast<size_t>(y + 1) * s.w,
                dst + static_cast<size_t>(y + 1) * pw + 1);
  }
}

constexpr int kMaxRowBuf = 512;

bool is_conv3x3_p1(const Shape4& xs, const Shape4& ws, int stride, int pad) {
  return stride == 1 && pad == 1 && ws.h == 3 && ws.w == 3 && xs.w <= kMaxRowBuf;
}

void conv3x3_p1_forward(const Tensor& x, const Tensor& w, const std::vector<float>& bias,
                        Tensor& y) {
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int CO = w.shape().n, pw = W + 2;
#pragma omp parallel for schedule(static)
  for (int in = 0; in < N; ++in) {
    std::vector<float> pad;
    load_padded(x, in, pad);
    float acc[kMaxRowBuf];
    for (int oc = 0; oc < CO; ++oc) {
      float* ypl = y.plane(in, oc);
      for (int oy = 0; oy < H; ++oy) {
        for (int ox = 0; ox < W; ++ox) acc[ox] = bias[static_cast<size_t>(oc)];
        for (int ic = 0; ic < C; ++ic) {
          const float* wp = w.plane(oc, ic);
          const float* pl = pad.data() + static_cast<size_t>(ic) * (H + 2) * pw;
          for (int ky = 0; ky < 3; ++ky) {
            const float* __restrict xr = pl + static_cast<size_t>(oy + ky) * pw;
            const float w0 = wp[ky * 3], w1 = wp[ky * 3 + 1], w2 = wp[ky * 3 + 2];
            for (int ox = 0; ox < W; ++ox)
              acc[ox] += w0 * xr[ox] + w1 * xr[ox + 1] + w2 * xr[ox + 2];
          }
        }
        std::copy(acc, acc + W, ypl + static_cast<size_t>(oy) * W);
      }
    }
  }
}

void conv3x3_p1_backward_dx(const Tensor& w, const Tensor& dy, Tensor& dx) {
  const int N = dx.shape().n, C = dx.shape().c, H = dx.shape().h, W = dx.shape().w;
  const int CO = dy.shape().c, pw = W + 2;
#pragma omp parallel for schedule(static)
  for (int in = 0; in < N; ++in) {
    std::vector<float> pad;
    load_padded(dy, in, pad);
    float acc[kMaxRowBuf];
    for (int ic = 0; ic < C; ++ic) {
      float* dxpl = dx.plane(in, ic);
      for (int iy = 0; iy < H; ++iy) {
        std::fill(acc, acc + W, 0.0f);
        for (int oc = 0; oc < CO; ++oc) {
          const float* wp = w.plane(oc, ic);
          const float* pl = pad.data() + static_cast<size_t>(oc) * (H + 2) * pw;
          for (int ky = 0; ky < 3; ++ky) {
            // transposed kernel: tap (ky, kx) reads the padded row shifted by
            // (2-ky, 2-kx)
            const float* __restrict gr = pl + static_cast<size_t>(iy + 2 - ky) * pw;
            const float w0 = wp[ky * 3], w1 = wp[ky * 3 + 1], w2 = wp[ky * 3 + 2];
            for (int ix = 0; ix < W; ++ix)
              acc[ix] += w0 * gr[ix + 2] + w1 * gr[ix + 1] + w2 * gr[ix];
          }
        }
        std::copy(acc, acc + W, dxpl + static_cast<size_t>(iy) * W);
      }
    }
  }
}

void conv3x3_p1_backward_dw(const Tensor& x, const Tensor& dy, Tensor& dw) {
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int CO = dy.shape().c, pw = W + 2, ph = H + 2;
  // one padded copy of every sample up front so the (oc, ic) loop below can
  // run in any order without rebuilding halos
  std::vector<float> pad(static_cast<size_t>(N) * C * ph * pw);
  {
    std::vector<float> one;
    for (int in = 0; in < N; ++in) {
      load_padded(x, in, one);
      std::copy(one.begin(), one.end(),
                pad.begin() + static_cast<size_t>(in) * C * ph * pw);
    }
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < CO; ++oc)
    for (int ic = 0; ic < C; ++ic) {
      // all nine taps in one sweep so each plane is read once per (oc, ic)
      float lane[9][8] = {};
      float tail[9] = {};
      for (int in = 0; in < N; ++in) {
        const float* gpl = dy.plane(in, oc);
        const float* xpl = pad.data() + (static_cast<size_t>(in) * C + ic) * ph * pw;
        for (int oy = 0; oy < H; ++oy) {
          const float* __restrict gr = gpl + static_cast<size_t>(oy) * W;
          const float* __restrict x0 = xpl + static_cast<size_t>(oy) * pw;
          const float* __restrict x1 = x0 + pw;
          const float* __restrict x2 = x1 + pw;
          int i = 0;
          for (; i + 8 <= W; i += 8)
            for (int l = 0; l < 8; ++l) {
              const float g = gr[i + l];
              lane[0][l] += x0[i + l] * g;
              lane[1][l] += x0[i + l + 1] * g;
              lane[2][l] += x0[i + l + 2] * g;
              lane[3][l] += x1[i + l] * g;
              lane[4][l] += x1[i + l + 1] * g;
              lane[5][l] += x1[i + l + 2] * g;
              lane[6][l] += x2[i + l] * g;
              lane[7][l] += x2[i + l + 1] * g;
              lane[8][l] += x2[i + l + 2] * g;
            }
          for (; i < W; ++i) {
            const float g = gr[i];
            tail[0] += x0[i] * g;
            tail[1] += x0[i + 1] * g;
            tail[2] += x0[i + 2] * g;
            tail[3] += x1[i] * g;
            tail[4] += x1[i + 1] * g;
            tail[5] += x1[i + 2] * g;
            tail[6] += x2[i] * g;
            tail[7] += x2[i + 1] * g;
            tail[8] += x2[i + 2] * g;
          }
        }
      }
      float* dwp = dw.plane(oc, ic);
      for (int t = 0; t < 9; ++t)
        dwp[t] = (((lane[t][0] + lane[t][1]) + (lane[t][2] + lane[t][3])) +
                  ((lane[t][4] + lane[t][5]) + (lane[t][6] + lane[t][7]))) +
                 tail[t];
    }
}

}  // namespace

Shape4 conv2d_out_shape(const Shape4& x, const Shape4& w, int stride, int pad) {
  if (stride < 1) throw InvalidParameter("conv2d: stride must be positive");
  if (pad < 0) throw InvalidParameter("conv2d: pad must be non-negative");
  if (x.c != w.c) throw ShapeError("conv2d: input channels " + std::to_string(x.c) +
                                   " do not match weight channels " + std::to_string(w.c));
  const int oh = (x.h + 2 * pad - w.h) / stride + 1;
  const int ow = (x.w + 2 * pad - w.w) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: kernel does not fit input");
  return Shape4{x.n, w.n, oh, ow};
}

void conv2d_forward(const Tensor& x, const Tensor& w, const std::vector<float>& bias, int stride,
                    int pad, Tensor& y) {
  const Shape4 ys = conv2d_out_shape(x.shape(), w.shape(), stride, pad);
  if (bias.size() != static_cast<size_t>(w.shape().n))
    throw ShapeError("conv2d: bias size does not match output channels");
  require_shape(y, ys, "conv2d_forward output");
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int CO = ys.c, OH = ys.h, OW = ys.w, KH = w.shape().h, KW = w.shape().w;

  if (is_conv3x3_p1(x.shape(), w.shape(), stride, pad)) {
    conv3x3_p1_forward(x, w, bias, y);
    return;
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int oc = 0; oc < CO; ++oc) {
      float* yp = y.plane(in, oc);
      std::fill(yp, yp + static_cast<size_t>(OH) * OW, bias[static_cast<size_t>(oc)]);
      for (int ic = 0; ic < C; ++ic) {
        const float* xp = x.plane(in, ic);
        const float* wp = w.plane(oc, ic);
        for (int ky = 0; ky < KH; ++ky)
          for (int kx = 0; kx < KW; ++kx) {
            const float wv = wp[ky * KW + kx];
            if (stride == 1) {
              const int oy0 = std::max(0, pad - ky);
              const int oy1 = std::min(OH, H - ky + pad);
              const int ox0 = std::max(0, pad - kx);
              const int ox1 = std::min(OW, W - kx + pad);
              for (int oy = oy0; oy < oy1; ++oy) {
                const float* xrow = xp + static_cast<size_t>(oy + ky - pad) * W + (kx - pad);
                float* yrow = yp + static_cast<size_t>(oy) * OW;
                for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox];
              }
            } else {
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= W) continue;
                  yp[static_cast<size_t>(oy) * OW + ox] +=
                      wv * xp[static_cast<size_t>(iy) * W + ix];
                }
              }
            }
          }
      }
    }
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride, int pad,
                     Tensor& dx, Tensor& dw, std::vector<float>& db) {
  const Shape4 ys = conv2d_out_shape(x.shape(), w.shape(), stride, pad);
  require_shape(dy, ys, "conv2d_backward dy");
  require_shape(dx, x.shape(), "conv2d_backward dx");
  require_shape(dw, w.shape(), "conv2d_backward dw");
  if (db.size() != static_cast<size_t>(w.shape().n))
    throw ShapeError("conv2d_backward: db size does not match output channels");
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int CO = ys.c, OH = ys.h, OW = ys.w, KH = w.shape().h, KW = w.shape().w;

#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < CO; ++oc) {
    double acc = 0.0;
    for (int in = 0; in < N; ++in)
      acc += sum_f64(dy.plane(in, oc), static_cast<long>(OH) * OW);
    db[static_cast<size_t>(oc)] = static_cast<float>(acc);
  }

  if (is_conv3x3_p1(x.shape(), w.shape(), stride, pad)) {
    conv3x3_p1_backward_dw(x, dy, dw);
    conv3x3_p1_backward_dx(w, dy, dx);
    return;
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < CO; ++oc)
    for (int ic = 0; ic < C; ++ic) {
      float* dwp = dw.plane(oc, ic);
      for (int ky = 0; ky < KH; ++ky)
        for (int kx = 0; kx < KW; ++kx) {
          float acc = 0.0f;
          if (stride == 1) {
            // same hoisted valid ranges as the forward pass; the inner dot
            // product runs lane-parallel with a fixed collapse order
            const int oy0 = std::max(0, pad - ky);
            const int oy1 = std::min(OH, H - ky + pad);
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(OW, W - kx + pad);
            for (int in = 0; in < N; ++in) {
              const float* xp = x.plane(in, ic);
              const float* gp = dy.plane(in, oc);
              for (int oy = oy0; oy < oy1; ++oy)
                acc += dot_f32(xp + static_cast<size_t>(oy + ky - pad) * W + (kx - pad) + ox0,
                               gp + static_cast<size_t>(oy) * OW + ox0, ox1 - ox0);
            }
          } else {
            for (int in = 0; in < N; ++in) {
              const float* xp = x.plane(in, ic);
              const float* gp = dy.plane(in, oc);
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= W) continue;
                  acc +=
                      xp[static_cast<size_t>(iy) * W + ix] * gp[static_cast<size_t>(oy) * OW + ox];
                }
              }
            }
          }
          dwp[ky * KW + kx] = acc;
        }
    }

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      float* dxp = dx.plane(in, ic);
      std::fill(dxp, dxp + static_cast<size_t>(H) * W, 0.0f);
      for (int oc = 0; oc < CO; ++oc) {
        const float* wp = w.plane(oc, ic);
        const float* gp = dy.plane(in, oc);
        for (int ky = 0; ky < KH; ++ky)
          for (int kx = 0; kx < KW; ++kx) {
            const float wv = wp[ky * KW + kx];
            if (stride == 1) {
              const int oy0 = std::max(0, pad - ky);
              const int oy1 = std::min(OH, H - ky + pad);
              const int ox0 = std::max(0, pad - kx);
              const int ox1 = std::min(OW, W - kx + pad);
              for (int oy = oy0; oy < oy1; ++oy) {
                float* __restrict dxrow =
                    dxp + static_cast<size_t>(oy + ky - pad) * W + (kx - pad);
                const float* __restrict grow = gp + static_cast<size_t>(oy) * OW;
                for (int ox = ox0; ox < ox1; ++ox) dxrow[ox] += wv * grow[ox];
              }
            } else {
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                float* dxrow = dxp + static_cast<size_t>(iy) * W;
                const float* grow = gp + static_cast<size_t>(oy) * OW;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= W) continue;
                  dxrow[ix] += wv * grow[ox];
                }
              }
            }
          }
      }
    }
}

namespace {

void check_bn_args(const Tensor& x, const std::vector<float>& gamma,
                   const std::vector<float>& beta) {
  const size_t c = static_cast<size_t>(x.shape().c);
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError("batchnorm: gamma/beta size does not match channels");
}

}  // namespace

void batchnorm_forward_train(const Tensor& x, const std::vector<float>& gamma,
                             const std::vector<float>& beta, float eps, float momentum,
                             std::vector<float>& running_mean, std::vector<float>& running_var,
                             Tensor& y, BnCache& cache) {
  check_bn_args(x, gamma, beta);
  const size_t c = static_cast<size_t>(x.shape().c);
  if (running_mean.size() != c || running_var.size() != c)
    throw ShapeError("batchnorm: running stats size does not match channels");
  const int N = x.shape().n, C = x.shape().c;
  const long hw = static_cast<long>(x.shape().h) * x.shape().w;
  const long m = static_cast<long>(N) * hw;
  if (m < 2) throw InvalidParameter("batchnorm: needs at least 2 samples per channel");
  require_shape(y, x.shape(), "batchnorm output");
  cache.mean.assign(c, 0.0f);
  cache.invstd.assign(c, 0.0f);
  cache.xhat = Tensor(x.shape());

#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < C; ++ic) {
    double mu = 0.0;
    for (int in = 0; in < N; ++in) mu += sum_f64(x.plane(in, ic), hw);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (int in = 0; in < N; ++in) var += var_sum_f64(x.plane(in, ic), hw, mu);
    var /= static_cast<double>(m);  // biased, matches eval normalisation
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.mean[static_cast<size_t>(ic)] = static_cast<float>(mu);
    cache.invstd[static_cast<size_t>(ic)] = static_cast<float>(inv);
    const float g = gamma[static_cast<size_t>(ic)], bt = beta[static_cast<size_t>(ic)];
    const float muf = static_cast<float>(mu), invf = static_cast<float>(inv);
    for (int in = 0; in < N; ++in) {
      const float* __restrict xp = x.plane(in, ic);
      float* __restrict hp = cache.xhat.plane(in, ic);
      float* __restrict yp = y.plane(in, ic);
      for (long p = 0; p < hw; ++p) {
        const float xh = (xp[p] - muf) * invf;
        hp[p] = xh;
        yp[p] = g * xh + bt;
      }
    }
    running_mean[static_cast<size_t>(ic)] =
        (1.0f - momentum) * running_mean[static_cast<size_t>(ic)] +
        momentum * static_cast<float>(mu);
    running_var[static_cast<size_t>(ic)] =
        (1.0f - momentum) * running_var[static_cast<size_t>(ic)] +
        momentum * static_cast<float>(var);
  }
}

void batchnorm_forward_eval(const Tensor& x, const std::vector<float>& gamma,
                            const std::vector<float>& beta, float eps,
                            const std::vector<float>& running_mean,
                            const std::vector<float>& running_var, Tensor& y) {
  check_bn_args(x, gamma, beta);
  const size_t c = static_cast<size_t>(x.shape().c);
  if (running_mean.size() != c || running_var.size() != c)
    throw ShapeError("batchnorm: running stats size does not match channels");
  require_shape(y, x.shape(), "batchnorm output");
  const int N = x.shape().n, C = x.shape().c;
  const long hw = static_cast<long>(x.shape().h) * x.shape().w;

#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < C; ++ic) {
    const double inv =
        1.0 / std::sqrt(static_cast<double>(running_var[static_cast<size_t>(ic)]) +
                        static_cast<double>(eps));
    const float muf = running_mean[static_cast<size_t>(ic)];
    const float invf = static_cast<float>(inv);
    const float g = gamma[static_cast<size_t>(ic)], bt = beta[static_cast<size_t>(ic)];
    for (int in = 0; in < N; ++in) {
      const float* __restrict xp = x.plane(in, ic);
      float* __restrict yp = y.plane(in, ic);
      for (long p = 0; p < hw; ++p) yp[p] = g * ((xp[p] - muf) * invf) + bt;
    }
  }
}

void batchnorm_backward(const Tensor& dy, const BnCache& cache, const std::vector<float>& gamma,
                        Tensor& dx, std::vector<float>& dgamma, std::vector<float>& dbeta) {
  require_shape(dx, dy.shape(), "batchnorm dx");
  require_shape(const_cast<Tensor&>(cache.xhat), dy.shape(), "batchnorm cache");
  const int N = dy.shape().n, C = dy.shape().c;
  const long hw = static_cast<long>(dy.shape().h) * dy.shape().w;
  const long m = static_cast<long>(N) * hw;
  dgamma.assign(static_cast<size_t>(C), 0.0f);
  dbeta.assign(static_cast<size_t>(C), 0.0f);

#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < C; ++ic) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int in = 0; in < N; ++in) {
      double sg = 0.0, sgh = 0.0;
      sum_pair_f64(dy.plane(in, ic), cache.xhat.plane(in, ic), hw, sg, sgh);
      sum_dy += sg;
      sum_dy_xhat += sgh;
    }
    dgamma[static_cast<size_t>(ic)] = static_cast<float>(sum_dy_xhat);
    dbeta[static_cast<size_t>(ic)] = static_cast<float>(sum_dy);
    const double scale =
        static_cast<double>(gamma[static_cast<size_t>(ic)]) *
        cache.invstd[static_cast<size_t>(ic)] / static_cast<double>(m);
    // dx = scale*(m*dy - sum_dy - xhat*sum_dy_xhat), folded into float constants
    const float a = static_cast<float>(scale * static_cast<double>(m));
    const float b = static_cast<float>(scale * sum_dy);
    const float cg = static_cast<float>(scale * sum_dy_xhat);
    for (int in = 0; in < N; ++in) {
      const float* __restrict gp = dy.plane(in, ic);
      const float* __restrict hp = cache.xhat.plane(in, ic);
      float* __restrict dp = dx.plane(in, ic);
      for (long p = 0; p < hw; ++p) dp[p] = a * gp[p] - b - cg * hp[p];
    }
  }
}

void relu_forward(const Tensor& x, Tensor& y) {
  require_shape(y, x.shape(), "relu output");
  const long n = x.numel();
  const float* xp = x.data();
  float* yp = y.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
}

void relu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  require_shape(dy, x.shape(), "relu dy");
  require_shape(dx, x.shape(), "relu dx");
  const long n = x.numel();
  const float* xp = x.data();
  const float* gp = dy.data();
  float* dp = dx.data();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) dp[i] = xp[i] > 0.0f ? gp[i] : 0.0f;
}

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<int>& argmax) {
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int OH = H / 2, OW = W / 2;
  if (OH < 1 || OW < 1) throw ShapeError("maxpool2: input too small");
  require_shape(y, Shape4{N, C, OH, OW}, "maxpool2 output");
  argmax.assign(static_cast<size_t>(y.numel()), 0);

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      const float* xp = x.plane(in, ic);
      float* yp = y.plane(in, ic);
      int* ap = argmax.data() + (static_cast<size_t>(in) * C + ic) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          int best = (oy * 2) * W + ox * 2;
          float bv = xp[best];
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              const int idx = (oy * 2 + ky) * W + (ox * 2 + kx);
              if (xp[idx] > bv) {
                bv = xp[idx];
                best = idx;
              }
            }
          yp[static_cast<size_t>(oy) * OW + ox] = bv;
          ap[static_cast<size_t>(oy) * OW + ox] = best;
        }
    }
}

void maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax, Tensor& dx) {
  const int N = dy.shape().n, C = dy.shape().c, OH = dy.shape().h, OW = dy.shape().w;
  if (argmax.size() != static_cast<size_t>(dy.numel()))
    throw ShapeError("maxpool2_backward: argmax size mismatch");
  dx.zero();

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      const float* gp = dy.plane(in, ic);
      const int* ap = argmax.data() + (static_cast<size_t>(in) * C + ic) * OH * OW;
      float* dp = dx.plane(in, ic);
      for (long p = 0; p < static_cast<long>(OH) * OW; ++p) dp[ap[p]] += gp[p];
    }
}

void gap_forward(const Tensor& x, Tensor& y) {
  const int N = x.shape().n, C = x.shape().c;
  const long hw = static_cast<long>(x.shape().h) * x.shape().w;
  require_shape(y, Shape4{N, C, 1, 1}, "gap output");

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      const float* xp = x.plane(in, ic);
      double acc = 0.0;
      for (long p = 0; p < hw; ++p) acc += xp[p];
      y.at(in, ic, 0, 0) = static_cast<float>(acc / static_cast<double>(hw));
    }
}

void gap_backward(const Tensor& dy, Tensor& dx) {
  const int N = dx.shape().n, C = dx.shape().c;
  const long hw = static_cast<long>(dx.shape().h) * dx.shape().w;
  require_shape(dy, Shape4{N, C, 1, 1}, "gap dy");

#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < N; ++in)
    for (int ic = 0; ic < C; ++ic) {
      const float g = dy.at(in, ic, 0, 0) / static_cast<float>(hw);
      float* dp = dx.plane(in, ic);
      for (long p = 0; p < hw; ++p) dp[p] = g;
    }
}

void linear_forward(const Tensor& x, const Tensor& w, const std::vector<float>& bias, Tensor& y) {
  const int N = x.shape().n, IN = x.shape().c, F = w.shape().n;
  if (x.shape().h != 1 || x.shape().w != 1 || w.shape().h != 1 || w.shape().w != 1)
    throw ShapeError("linear: expects (N,IN,1,1) input and (F,IN,1,1) weight");
  if (w.shape().c != IN) throw ShapeError("linear: weight input size mismatch");
  if (bias.size() != static_cast<size_t>(F)) throw ShapeError("linear: bias size mismatch");
  require_shape(y, Shape4{N, F, 1, 1}, "linear output");

#pragma omp parallel for schedule(static)
  for (int r = 0; r < N; ++r) {
    const float* xp = x.data() + static_cast<size_t>(r) * IN;
    float* yp = y.data() + static_cast<size_t>(r) * F;
    for (int of = 0; of < F; ++of) {
      const float* wp = w.data() + static_cast<size_t>(of) * IN;
      float acc = bias[static_cast<size_t>(of)];
      for (int i = 0; i < IN; ++i) acc += xp[i] * wp[i];
      yp[of] = acc;
    }
  }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                     std::vector<float>& db) {
  const int N = x.shape().n, IN = x.shape().c, F = w.shape().n;
  require_shape(dy, Shape4{N, F, 1, 1}, "linear dy");
  require_shape(dx, x.shape(), "linear dx");
  require_shape(dw, w.shape(), "linear dw");
  if (db.size() != static_cast<size_t>(F)) throw ShapeError("linear: db size mismatch");

#pragma omp parallel for schedule(static)
  for (int r = 0; r < N; ++r) {
    const float* gp = dy.data() + static_cast<size_t>(r) * F;
    float* dp = dx.data() + static_cast<size_t>(r) * IN;
    for (int i = 0; i < IN; ++i) {
      float acc = 0.0f;
      for (int of = 0; of < F; ++of) acc += w.data()[static_cast<size_t>(of) * IN + i] * gp[of];
      dp[i] = acc;
    }
  }

#pragma omp parallel for schedule(static)
  for (int of = 0; of < F; ++of) {
    const size_t orow = static_cast<size_t>(of);
    float bacc = 0.0f;
    float* wrow = dw.data() + orow * IN;
    std::fill(wrow, wrow + IN, 0.0f);
    for (int r = 0; r < N; ++r) {
      const float g = dy.data()[static_cast<size_t>(r) * F + of];
      bacc += g;
      const float* xp = x.data() + static_cast<size_t>(r) * IN;
      for (int i = 0; i < IN; ++i) wrow[i] += xp[i] * g;
    }
    db[orow] = bacc;
  }
}

SoftmaxCE softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.shape().n, K = logits.shape().c;
  if (logits.shape().h != 1 || logits.shape().w != 1)
    throw ShapeError("softmax_cross_entropy: expects (N,K,1,1) logits");
  if (labels.size() != static_cast<size_t>(N))
    throw ShapeError("softmax_cross_entropy: labels size mismatch");
  for (int label : labels)
    if (label < 0 || label >= K)
      throw InvalidParameter("softmax_cross_entropy: label out of range");
  SoftmaxCE out;
  out.probs = Tensor(N, K, 1, 1);
  out.dlogits = Tensor(N, K, 1, 1);
  std::vector<double> row_loss(static_cast<size_t>(N), 0.0);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < N; ++r) {
    const int label = labels[static_cast<size_t>(r)];
    const float* lp = logits.data() + static_cast<size_t>(r) * K;
    float* pp = out.probs.data() + static_cast<size_t>(r) * K;
    float* gp = out.dlogits.data() + static_cast<size_t>(r) * K;
    double mx = lp[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(lp[j]));
    double sum = 0.0;
    for (int j = 0; j < K; ++j) sum += std::exp(static_cast<double>(lp[j]) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < K; ++j) {
      const double p = std::exp(static_cast<double>(lp[j]) - lse);
      pp[j] = static_cast<float>(p);
      gp[j] = static_cast<float>((p - (j == label ? 1.0 : 0.0)) / N);
    }
    row_loss[static_cast<size_t>(r)] = lse - static_cast<double>(lp[label]);
  }
  double total = 0.0;
  for (double v : row_loss) total += v;
  out.loss = total / N;
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  const int N = logits.shape().n, K = logits.shape().c;
  if (logits.shape().h != 1 || logits.shape().w != 1)
    throw ShapeError("softmax_rows: expects (N,K,1,1) logits");
  Tensor probs(N, K, 1, 1);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < N; ++r) {
    const float* lp = logits.data() + static_cast<size_t>(r) * K;
    float* pp = probs.data() + static_cast<size_t>(r) * K;
    double mx = lp[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(lp[j]));
    double sum = 0.0;
    for (int j = 0; j < K; ++j) sum += std::exp(static_cast<double>(lp[j]) - mx);
    for (int j = 0; j < K; ++j)
      pp[j] = static_cast<float>(std::exp(static_cast<double>(lp[j]) - mx) / sum);
  }
  return probs;
}

}  // namespace fqln
