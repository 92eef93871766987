#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace fqln::ref {

// Naive serial kernels with one obvious arithmetic path. They pin down the
// semantics; the threaded kernels in layers.cpp must reproduce them. The
// double instantiation doubles as the substrate for finite-difference
// gradient checks.

template <typename T>
void conv2d_forward(const T* x, int n, int c, int h, int w, const T* wgt, int co, int kh, int kw,
                    const T* bias, int stride, int pad, T* y, int oh, int ow) {
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < co; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[oc] : T(0);
          for (int ic = 0; ic < c; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[((static_cast<long>(in) * c + ic) * h + iy) * w + ix] *
                       wgt[((static_cast<long>(oc) * c + ic) * kh + ky) * kw + kx];
              }
          y[((static_cast<long>(in) * co + oc) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_backward(const T* x, int n, int c, int h, int w, const T* wgt, int co, int kh, int kw,
                     const T* dy, int stride, int pad, int oh, int ow, T* dx, T* dwgt, T* db) {
  std::fill(dx, dx + static_cast<long>(n) * c * h * w, T(0));
  std::fill(dwgt, dwgt + static_cast<long>(co) * c * kh * kw, T(0));
  std::fill(db, db + co, T(0));
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < co; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T g = dy[((static_cast<long>(in) * co + oc) * oh + oy) * ow + ox];
          db[oc] += g;
          for (int ic = 0; ic < c; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const long xi = ((static_cast<long>(in) * c + ic) * h + iy) * w + ix;
                const long wi = ((static_cast<long>(oc) * c + ic) * kh + ky) * kw + kx;
                dx[xi] += wgt[wi] * g;
                dwgt[wi] += x[xi] * g;
              }
        }
}

// Training-mode batch norm with biased batch variance. Returns the batch
// statistics through mean/var so callers can mirror the running-stat update.
template <typename T>
void batchnorm_forward_train(const T* x, int n, int c, int h, int w, const T* gamma,
                             const T* beta, T eps, T* y, T* mean, T* var) {
  const long hw = static_cast<long>(h) * w;
  const long m = static_cast<long>(n) * hw;
  for (int ic = 0; ic < c; ++ic) {
    T mu = T(0);
    for (int in = 0; in < n; ++in)
      for (long p = 0; p < hw; ++p) mu += x[(static_cast<long>(in) * c + ic) * hw + p];
    mu /= static_cast<T>(m);
    T v = T(0);
    for (int in = 0; in < n; ++in)
      for (long p = 0; p < hw; ++p) {
        const T d = x[(static_cast<long>(in) * c + ic) * hw + p] - mu;
        v += d * d;
      }
    v /= static_cast<T>(m);
    mean[ic] = mu;
    var[ic] = v;
    const T inv = T(1) / std::sqrt(v + eps);
    for (int in = 0; in < n; ++in)
      for (long p = 0; p < hw; ++p) {
        const long i = (static_cast<long>(in) * c + ic) * hw + p;
        y[i] = gamma[ic] * (x[i] - mu) * inv + beta[ic];
      }
  }
}

template <typename T>
void batchnorm_backward(const T* x, int n, int c, int h, int w, const T* gamma, const T* mean,
                        const T* var, T eps, const T* dy, T* dx, T* dgamma, T* dbeta) {
  const long hw = static_cast<long>(h) * w;
  const long m = static_cast<long>(n) * hw;
  for (int ic = 0; ic < c; ++ic) {
    const T inv = T(1) / std::sqrt(var[ic] + eps);
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int in = 0; in < n; ++in)
      for (long p = 0; p < hw; ++p) {
        const long i = (static_cast<long>(in) * c + ic) * hw + p;
        const T xhat = (x[i] - mean[ic]) * inv;
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xhat;
      }
    dgamma[ic] = sum_dy_xhat;
    dbeta[ic] = sum_dy;
    for (int in = 0; in < n; ++in)
      for (long p = 0; p < hw; ++p) {
        const long i = (static_cast<long>(in) * c + ic) * hw + p;
        const T xhat = (x[i] - mean[ic]) * inv;
        dx[i] = gamma[ic] * inv / static_cast<T>(m) *
                (static_cast<T>(m) * dy[i] - sum_dy - xhat * sum_dy_xhat);
      }
  }
}

template <typename T>
void relu_forward(const T* x, long n, T* y) {
  for (long i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, long n, T* dx) {
  for (long i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

// 2x2 max pool, stride 2, floor semantics; ties pick the first maximum in
// window scan order.
template <typename T>
void maxpool2_forward(const T* x, int n, int c, int h, int w, T* y, int* argmax) {
  const int oh = h / 2, ow = w / 2;
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* plane = x + (static_cast<long>(in) * c + ic) * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          int best = (oy * 2) * w + ox * 2;
          T bv = plane[best];
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              const int idx = (oy * 2 + ky) * w + (ox * 2 + kx);
              if (plane[idx] > bv) {
                bv = plane[idx];
                best = idx;
              }
            }
          const long o = (static_cast<long>(in) * c + ic) * oh * ow + static_cast<long>(oy) * ow + ox;
          y[o] = bv;
          argmax[o] = best;
        }
    }
}

template <typename T>
void maxpool2_backward(const T* dy, const int* argmax, int n, int c, int h, int w, T* dx) {
  const int oh = h / 2, ow = w / 2;
  std::fill(dx, dx + static_cast<long>(n) * c * h * w, T(0));
  for (long pc = 0; pc < static_cast<long>(n) * c; ++pc) {
    T* dplane = dx + pc * h * w;
    const T* gplane = dy + pc * oh * ow;
    const int* aplane = argmax + pc * oh * ow;
    for (long p = 0; p < static_cast<long>(oh) * ow; ++p) dplane[aplane[p]] += gplane[p];
  }
}

template <typename T>
void gap_forward(const T* x, int n, int c, int h, int w, T* y) {
  const long hw = static_cast<long>(h) * w;
  for (long pc = 0; pc < static_cast<long>(n) * c; ++pc) {
    T acc = T(0);
    for (long p = 0; p < hw; ++p) acc += x[pc * hw + p];
    y[pc] = acc / static_cast<T>(hw);
  }
}

template <typename T>
void gap_backward(const T* dy, int n, int c, int h, int w, T* dx) {
  const long hw = static_cast<long>(h) * w;
  for (long pc = 0; pc < static_cast<long>(n) * c; ++pc)
    for (long p = 0; p < hw; ++p) dx[pc * hw + p] = dy[pc] / static_cast<T>(hw);
}

template <typename T>
void linear_forward(const T* x, int n, int in, const T* w, int f, const T* b, T* y) {
  for (int r = 0; r < n; ++r)
    for (int of = 0; of < f; ++of) {
      T acc = b ? b[of] : T(0);
      for (int i = 0; i < in; ++i)
        acc += x[static_cast<long>(r) * in + i] * w[static_cast<long>(of) * in + i];
      y[static_cast<long>(r) * f + of] = acc;
    }
}

template <typename T>
void linear_backward(const T* x, int n, int in, const T* w, int f, const T* dy, T* dx, T* dw,
                     T* db) {
  std::fill(dx, dx + static_cast<long>(n) * in, T(0));
  std::fill(dw, dw + static_cast<long>(f) * in, T(0));
  std::fill(db, db + f, T(0));
  for (int r = 0; r < n; ++r)
    for (int of = 0; of < f; ++of) {
      const T g = dy[static_cast<long>(r) * f + of];
      db[of] += g;
      for (int i = 0; i < in; ++i) {
        dx[static_cast<long>(r) * in + i] += w[static_cast<long>(of) * in + i] * g;
        dw[static_cast<long>(of) * in + i] += x[static_cast<long>(r) * in + i] * g;
      }
    }
}

// Mean cross entropy over the batch. dlogits may be null.
template <typename T>
T softmax_cross_entropy(const T* logits, int n, int k, const int* labels, T* dlogits) {
  T loss = T(0);
  std::vector<T> p(static_cast<size_t>(k));
  for (int r = 0; r < n; ++r) {
    const T* row = logits + static_cast<long>(r) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      p[static_cast<size_t>(j)] = std::exp(row[j] - mx);
      sum += p[static_cast<size_t>(j)];
    }
    for (int j = 0; j < k; ++j) p[static_cast<size_t>(j)] /= sum;
    loss -= std::log(std::max(p[static_cast<size_t>(labels[r])], T(1e-30)));
    if (dlogits)
      for (int j = 0; j < k; ++j)
        dlogits[static_cast<long>(r) * k + j] =
            (p[static_cast<size_t>(j)] - (j == labels[r] ? T(1) : T(0))) / static_cast<T>(n);
  }
  return loss / static_cast<T>(n);
}

// Anisotropic total variation of one map: sum of absolute horizontal and
// vertical forward differences.
template <typename T>
T tv_norm_plane(const T* f, int h, int w) {
  T acc = T(0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) acc += std::abs(f[static_cast<long>(y) * w + x + 1] - f[static_cast<long>(y) * w + x]);
      if (y + 1 < h) acc += std::abs(f[(static_cast<long>(y) + 1) * w + x] - f[static_cast<long>(y) * w + x]);
    }
  return acc;
}

// Jensen-Shannon consistency over three probability rows; probabilities are
// clamped before every log. Returns the batch mean.
template <typename T>
T jsd_loss(const T* p0, const T* p1, const T* p2, int n, int k, T clamp_floor) {
  T total = T(0);
  for (int r = 0; r < n; ++r) {
    const T* rows[3] = {p0 + static_cast<long>(r) * k, p1 + static_cast<long>(r) * k,
                        p2 + static_cast<long>(r) * k};
    T acc = T(0);
    for (int j = 0; j < k; ++j) {
      const T m = std::max((rows[0][j] + rows[1][j] + rows[2][j]) / T(3), clamp_floor);
      for (int v = 0; v < 3; ++v) {
        const T p = std::max(rows[v][j], clamp_floor);
        acc += p * (std::log(p) - std::log(m));
      }
    }
    total += acc / T(3);
  }
  return total / static_cast<T>(n);
}

}  // namespace fqln::ref
