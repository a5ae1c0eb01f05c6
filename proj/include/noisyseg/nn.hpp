#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisyseg/core.hpp"
#include "noisyseg/rng.hpp"

namespace noisyseg::nn {

// Plain C x H x W buffer used inside the networks. The validated domain
// types stay at the module boundary.
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  double& at(int ci, int yi, int xi) { return v[(static_cast<std::size_t>(ci) * h + yi) * w + xi]; }
  double at(int ci, int yi, int xi) const {
    return v[(static_cast<std::size_t>(ci) * h + yi) * w + xi];
  }
};

struct ConvShape {
  int in_ch = 0, out_ch = 0, ksize = 3;
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize;
  }
  std::size_t param_count() const { return weight_count() + out_ch; }
};

// Stride-1 convolution with zero padding; output resolution equals input.
inline Tensor3 conv2d_forward(const Tensor3& in, const ConvShape& shape,
                              std::span<const double> weights, std::span<const double> bias) {
  const int r = shape.ksize / 2;
  Tensor3 out(shape.out_ch, in.h, in.w);
  for (int co = 0; co < shape.out_ch; ++co) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        double acc = bias[co];
        for (int ci = 0; ci < shape.in_ch; ++ci) {
          const std::size_t wbase =
              ((static_cast<std::size_t>(co) * shape.in_ch + ci) * shape.ksize) * shape.ksize;
          for (int dy = -r; dy <= r; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= in.h) continue;
            const std::size_t row = (static_cast<std::size_t>(ci) * in.h + yy) * in.w;
            const std::size_t wrow = wbase + static_cast<std::size_t>(dy + r) * shape.ksize;
            for (int dx = -r; dx <= r; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= in.w) continue;
              acc += weights[wrow + (dx + r)] * in.v[row + xx];
            }
          }
        }
        out.at(co, y, x) = acc;
      }
    }
  }
  return out;
}

// Backward pass of conv2d_forward. Accumulates into g_weights/g_bias and
// returns the gradient with respect to the input.
inline Tensor3 conv2d_backward(const Tensor3& in, const Tensor3& g_out, const ConvShape& shape,
                               std::span<const double> weights, std::span<double> g_weights,
                               std::span<double> g_bias) {
  const int r = shape.ksize / 2;
  Tensor3 g_in(in.c, in.h, in.w);
  for (int co = 0; co < shape.out_ch; ++co) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        const double g = g_out.at(co, y, x);
        if (g == 0.0) continue;
        g_bias[co] += g;
        for (int ci = 0; ci < shape.in_ch; ++ci) {
          const std::size_t wbase =
              ((static_cast<std::size_t>(co) * shape.in_ch + ci) * shape.ksize) * shape.ksize;
          for (int dy = -r; dy <= r; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= in.h) continue;
            const std::size_t wrow = wbase + static_cast<std::size_t>(dy + r) * shape.ksize;
            for (int dx = -r; dx <= r; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= in.w) continue;
              g_weights[wrow + (dx + r)] += g * in.at(ci, yy, xx);
              g_in.at(ci, yy, xx) += g * weights[wrow + (dx + r)];
            }
          }
        }
      }
    }
  }
  return g_in;
}

inline Tensor3 tanh_forward(const Tensor3& in) {
  Tensor3 out = in;
  for (double& v : out.v) v = std::tanh(v);
  return out;
}

// Needs the forward *output* (tanh'(z) = 1 - tanh(z)^2).
inline Tensor3 tanh_backward(const Tensor3& out, const Tensor3& g_out) {
  Tensor3 g_in = g_out;
  for (std::size_t i = 0; i < g_in.v.size(); ++i) g_in.v[i] *= 1.0 - out.v[i] * out.v[i];
  return g_in;
}

// 2x average pooling, ceil mode: odd tails form smaller windows whose
// divisor is the actual coverage.
inline Tensor3 avgpool2_forward(const Tensor3& in) {
  const int oh = (in.h + 1) / 2;
  const int ow = (in.w + 1) / 2;
  Tensor3 out(in.c, oh, ow);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        int count = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy < in.h && xx < in.w) {
              acc += in.at(c, yy, xx);
              ++count;
            }
          }
        out.at(c, y, x) = acc / count;
      }
  return out;
}

inline Tensor3 avgpool2_backward(int in_h, int in_w, const Tensor3& g_out) {
  Tensor3 g_in(g_out.c, in_h, in_w);
  for (int c = 0; c < g_out.c; ++c)
    for (int y = 0; y < g_out.h; ++y)
      for (int x = 0; x < g_out.w; ++x) {
        int count = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            if (2 * y + dy < in_h && 2 * x + dx < in_w) ++count;
        const double g = g_out.at(c, y, x) / count;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy < in_h && xx < in_w) g_in.at(c, yy, xx) += g;
          }
      }
  return g_in;
}

namespace detail {

struct BilinearTap {
  int lo;
  double frac;  // weight of hi = lo+1 (clamped)
};

inline BilinearTap bilinear_tap(int out_i, int out_n, int in_n) {
  // half-pixel centers; clamp at the borders
  const double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  double lo = std::floor(src);
  double frac = src - lo;
  int ilo = static_cast<int>(lo);
  if (ilo < 0) { ilo = 0; frac = 0.0; }
  if (ilo >= in_n - 1) { ilo = in_n - 1; frac = 0.0; }
  return {ilo, frac};
}

}  // namespace detail

// Bilinear interpolation to (out_h, out_w).
inline Tensor3 bilinear_upsample_forward(const Tensor3& in, int out_h, int out_w) {
  Tensor3 out(in.c, out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto ty = detail::bilinear_tap(y, out_h, in.h);
    const int y1 = std::min(ty.lo + 1, in.h - 1);
    for (int x = 0; x < out_w; ++x) {
      const auto tx = detail::bilinear_tap(x, out_w, in.w);
      const int x1 = std::min(tx.lo + 1, in.w - 1);
      for (int c = 0; c < in.c; ++c) {
        const double top = (1.0 - tx.frac) * in.at(c, ty.lo, tx.lo) + tx.frac * in.at(c, ty.lo, x1);
        const double bot = (1.0 - tx.frac) * in.at(c, y1, tx.lo) + tx.frac * in.at(c, y1, x1);
        out.at(c, y, x) = (1.0 - ty.frac) * top + ty.frac * bot;
      }
    }
  }
  return out;
}

inline Tensor3 bilinear_upsample_backward(int in_h, int in_w, const Tensor3& g_out) {
  Tensor3 g_in(g_out.c, in_h, in_w);
  for (int y = 0; y < g_out.h; ++y) {
    const auto ty = detail::bilinear_tap(y, g_out.h, in_h);
    const int y1 = std::min(ty.lo + 1, in_h - 1);
    for (int x = 0; x < g_out.w; ++x) {
      const auto tx = detail::bilinear_tap(x, g_out.w, in_w);
      const int x1 = std::min(tx.lo + 1, in_w - 1);
      for (int c = 0; c < g_out.c; ++c) {
        const double g = g_out.at(c, y, x);
        g_in.at(c, ty.lo, tx.lo) += (1.0 - ty.frac) * (1.0 - tx.frac) * g;
        g_in.at(c, ty.lo, x1) += (1.0 - ty.frac) * tx.frac * g;
        g_in.at(c, y1, tx.lo) += ty.frac * (1.0 - tx.frac) * g;
        g_in.at(c, y1, x1) += ty.frac * tx.frac * g;
      }
    }
  }
  return g_in;
}

// Numerically stable per-pixel softmax over the channel dimension.
inline Tensor3 channel_softmax_forward(const Tensor3& in) {
  Tensor3 out(in.c, in.h, in.w);
  const std::size_t plane = in.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = in.v[p];
    for (int c = 1; c < in.c; ++c) mx = std::max(mx, in.v[c * plane + p]);
    double sum = 0.0;
    for (int c = 0; c < in.c; ++c) {
      const double e = std::exp(in.v[c * plane + p] - mx);
      out.v[c * plane + p] = e;
      sum += e;
    }
    for (int c = 0; c < in.c; ++c) out.v[c * plane + p] /= sum;
  }
  return out;
}

// d logit_i = p_i * (g_i - sum_j g_j p_j), per pixel.
inline Tensor3 channel_softmax_backward(const Tensor3& probs, const Tensor3& g_probs) {
  Tensor3 g_in(probs.c, probs.h, probs.w);
  const std::size_t plane = probs.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0;
    for (int c = 0; c < probs.c; ++c) dot += g_probs.v[c * plane + p] * probs.v[c * plane + p];
    for (int c = 0; c < probs.c; ++c)
      g_in.v[c * plane + p] = probs.v[c * plane + p] * (g_probs.v[c * plane + p] - dot);
  }
  return g_in;
}

}  // namespace noisyseg::nn
