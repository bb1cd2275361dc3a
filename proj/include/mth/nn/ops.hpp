#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mth/nn/graph.hpp"

namespace mth::nn {

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename T>
void im2col(const T* x, int channels, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, T* col) {
  // col is {channels*kh*kw, oh*ow}, row-major
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) *
                           static_cast<size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) row[oy * ow + ox] = T{0};
            continue;
          }
          const T* src = plane + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            row[oy * ow + ox] = (ix < 0 || ix >= w) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int kh, int kw,
                int stride, int pad, int oh, int ow, T* x) {
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (static_cast<size_t>(c) * kh * kw + ky * kw + kx) *
                                 static_cast<size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2D convolution on {N,C,H,W} input with {Cout,Cin,kh,kw} weights. The batch
/// is processed sample by sample so per-sample results do not depend on the
/// batch they arrive in.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride,
              int pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4)
    throw std::invalid_argument("conv2d: expected {N,C,H,W} input and {O,C,kh,kw} weight");
  int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wdt = xv.dim(3);
  int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != cin) throw std::invalid_argument("conv2d: channel mismatch");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wdt + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: empty output");

  int k = cin * kh * kw;
  size_t p = static_cast<size_t>(oh) * ow;
  Tensor<T> out({n, cout, oh, ow});
  std::vector<T> col(static_cast<size_t>(k) * p);
  Eigen::Map<const EigenRowMat<T>> wm(wv.data(), cout, k);
  for (int i = 0; i < n; ++i) {
    detail::im2col(xv.data() + static_cast<size_t>(i) * cin * h * wdt, cin, h,
                   wdt, kh, kw, stride, pad, oh, ow, col.data());
    Eigen::Map<const EigenRowMat<T>> cm(col.data(), k, static_cast<Eigen::Index>(p));
    Eigen::Map<EigenRowMat<T>> om(out.data() + static_cast<size_t>(i) * cout * p,
                                  cout, static_cast<Eigen::Index>(p));
    om.noalias() = wm * cm;
    for (int co = 0; co < cout; ++co)
      om.row(co).array() += b.value()[static_cast<size_t>(co)];
  }

  auto geom = std::make_shared<std::array<int, 9>>(
      std::array<int, 9>{n, cin, h, wdt, cout, kh, kw, stride, pad});
  return make_op<T>(
      std::move(out), {x, w, b}, [geom](Node<T>& self) {
        auto [n, cin, h, wdt, cout, kh, kw, stride, pad] = *geom;
        int oh = (h + 2 * pad - kh) / stride + 1;
        int ow = (wdt + 2 * pad - kw) / stride + 1;
        int k = cin * kh * kw;
        size_t p = static_cast<size_t>(oh) * ow;
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        auto& bn = *self.parents[2];
        Eigen::Map<const EigenRowMat<T>> wm(wn.value.data(), cout, k);
        std::vector<T> col(static_cast<size_t>(k) * p);
        std::vector<T> dcol;
        if (xn.requires_grad) dcol.resize(static_cast<size_t>(k) * p);
        if (wn.requires_grad) wn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xn.requires_grad) xn.ensure_grad();
        for (int i = 0; i < n; ++i) {
          Eigen::Map<const EigenRowMat<T>> gm(
              self.grad.data() + static_cast<size_t>(i) * cout * p, cout,
              static_cast<Eigen::Index>(p));
          if (bn.requires_grad)
            for (int co = 0; co < cout; ++co)
              bn.grad[static_cast<size_t>(co)] += gm.row(co).sum();
          if (wn.requires_grad) {
            detail::im2col(xn.value.data() + static_cast<size_t>(i) * cin * h * wdt,
                           cin, h, wdt, kh, kw, stride, pad, oh, ow, col.data());
            Eigen::Map<const EigenRowMat<T>> cm(col.data(), k,
                                                static_cast<Eigen::Index>(p));
            Eigen::Map<EigenRowMat<T>> dwm(wn.grad.data(), cout, k);
            dwm.noalias() += gm * cm.transpose();
          }
          if (xn.requires_grad) {
            Eigen::Map<EigenRowMat<T>> dcm(dcol.data(), k,
                                           static_cast<Eigen::Index>(p));
            dcm.noalias() = wm.transpose() * gm;
            detail::col2im_add(dcol.data(), cin, h, wdt, kh, kw, stride, pad, oh,
                               ow,
                               xn.grad.data() + static_cast<size_t>(i) * cin * h * wdt);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise / structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("add: shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
  Tensor<T> out = a.value();
  const T* bp = b.value().data();
  T* op = out.data();
  for (size_t i = 0; i < out.numel(); ++i) op[i] += bp[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int pi = 0; pi < 2; ++pi) {
      auto& p = *self.parents[static_cast<size_t>(pi)];
      if (p.requires_grad) p.accumulate(self.grad);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return make_op<T>(std::move(out), {a}, [factor](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.numel(); ++i)
      p.grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (size_t i = 0; i < out.numel(); ++i)
    if (out[i] < T{0}) out[i] = T{0};
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.numel(); ++i)
      if (p.value[i] > T{0}) p.grad[i] += self.grad[i];
  });
}

/// 2x2 max pooling with stride 2. Ties keep the first element in scan order.
template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h % 2 || w % 2) throw std::invalid_argument("maxpool2: odd spatial dims");
  int oh = h / 2, ow = w / 2;
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
  size_t oi = 0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = xv.data() + (static_cast<size_t>(i) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          int iy = oy * 2, ix = ox * 2;
          int best_idx = iy * w + ix;
          T best = plane[best_idx];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int idx = (iy + dy) * w + (ix + dx);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          out[oi] = best;
          (*argmax)[oi] = best_idx;
        }
    }
  auto hw = std::make_shared<std::array<int, 2>>(std::array<int, 2>{h, w});
  return make_op<T>(std::move(out), {x}, [argmax, hw](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    size_t plane_elems = static_cast<size_t>((*hw)[0]) * (*hw)[1];
    size_t out_plane = self.value.numel() /
                       (static_cast<size_t>(self.value.dim(0)) * self.value.dim(1));
    size_t planes = static_cast<size_t>(self.value.dim(0)) * self.value.dim(1);
    for (size_t pl = 0; pl < planes; ++pl) {
      T* dst = p.grad.data() + pl * plane_elems;
      const T* g = self.grad.data() + pl * out_plane;
      const int32_t* am = argmax->data() + pl * out_plane;
      for (size_t j = 0; j < out_plane; ++j) dst[am[j]] += g[j];
    }
  });
}

/// Nearest-neighbor 2x upsampling.
template <typename T>
Var<T> upsample2(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out({n, c, h * 2, w * 2});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = xv.data() + (static_cast<size_t>(i) * c + ch) * h * w;
      T* dst = out.data() + (static_cast<size_t>(i) * c + ch) * h * w * 4;
      for (int y = 0; y < h; ++y)
        for (int x2 = 0; x2 < w; ++x2) {
          T v = src[y * w + x2];
          dst[(2 * y) * 2 * w + 2 * x2] = v;
          dst[(2 * y) * 2 * w + 2 * x2 + 1] = v;
          dst[(2 * y + 1) * 2 * w + 2 * x2] = v;
          dst[(2 * y + 1) * 2 * w + 2 * x2 + 1] = v;
        }
    }
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    int n = p.value.dim(0), c = p.value.dim(1), h = p.value.dim(2), w = p.value.dim(3);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        T* dst = p.grad.data() + (static_cast<size_t>(i) * c + ch) * h * w;
        const T* g = self.grad.data() + (static_cast<size_t>(i) * c + ch) * h * w * 4;
        for (int y = 0; y < h; ++y)
          for (int x2 = 0; x2 < w; ++x2)
            dst[y * w + x2] += g[(2 * y) * 2 * w + 2 * x2] +
                               g[(2 * y) * 2 * w + 2 * x2 + 1] +
                               g[(2 * y + 1) * 2 * w + 2 * x2] +
                               g[(2 * y + 1) * 2 * w + 2 * x2 + 1];
      }
  });
}

/// Concatenate along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input list");
  int n = xs[0].value().dim(0), h = xs[0].value().dim(2), w = xs[0].value().dim(3);
  int ctotal = 0;
  for (const auto& x : xs) {
    if (x.value().dim(0) != n || x.value().dim(2) != h || x.value().dim(3) != w)
      throw std::invalid_argument("concat: shape mismatch");
    ctotal += x.value().dim(1);
  }
  Tensor<T> out({n, ctotal, h, w});
  size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    size_t off = 0;
    for (const auto& x : xs) {
      size_t c = static_cast<size_t>(x.value().dim(1));
      const T* src = x.value().data() + static_cast<size_t>(i) * c * plane;
      T* dst = out.data() + (static_cast<size_t>(i) * ctotal) * plane + off * plane;
      std::copy(src, src + c * plane, dst);
      off += c;
    }
  }
  return make_op<T>(std::move(out), xs, [](Node<T>& self) {
    int n = self.value.dim(0), h = self.value.dim(2), w = self.value.dim(3);
    size_t plane = static_cast<size_t>(h) * w;
    size_t ctotal = static_cast<size_t>(self.value.dim(1));
    size_t off = 0;
    for (auto& pp : self.parents) {
      auto& p = *pp;
      size_t c = static_cast<size_t>(p.value.dim(1));
      if (p.requires_grad) {
        p.ensure_grad();
        for (int i = 0; i < n; ++i) {
          const T* g = self.grad.data() + (static_cast<size_t>(i) * ctotal + off) * plane;
          T* dst = p.grad.data() + static_cast<size_t>(i) * c * plane;
          for (size_t j = 0; j < c * plane; ++j) dst[j] += g[j];
        }
      }
      off += c;
    }
  });
}

// ---------------------------------------------------------------------------
// Group normalization
// ---------------------------------------------------------------------------

/// Largest divisor of c that is <= 8. Channel counts here are powers of two,
/// so this is just min(8, c) in practice.
inline int group_norm_groups(int c) {
  for (int g = std::min(8, c); g >= 1; --g)
    if (c % g == 0) return g;
  return 1;
}

/// Per-sample group normalization with learnable per-channel affine. Batch
/// independence is deliberate: statistics never cross samples.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  int groups, T eps = static_cast<T>(1e-5)) {
  const Tensor<T>& xv = x.value();
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (c % groups != 0) throw std::invalid_argument("group_norm: groups must divide channels");
  int cg = c / groups;
  size_t m = static_cast<size_t>(cg) * h * w;
  size_t plane = static_cast<size_t>(h) * w;

  auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::zeros_like(xv));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(n) * groups);
  Tensor<T> out({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const T* src = xv.data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * plane;
      double mean = 0;
      for (size_t j = 0; j < m; ++j) mean += src[j];
      mean /= static_cast<double>(m);
      double var = 0;
      for (size_t j = 0; j < m; ++j) {
        double d = src[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)[static_cast<size_t>(i) * groups + g] = inv;
      T* xh = xhat->data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * plane;
      T* dst = out.data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * plane;
      for (int cc = 0; cc < cg; ++cc) {
        T ga = gamma.value()[static_cast<size_t>(g * cg + cc)];
        T be = beta.value()[static_cast<size_t>(g * cg + cc)];
        for (size_t j = 0; j < plane; ++j) {
          size_t idx = static_cast<size_t>(cc) * plane + j;
          T xn = static_cast<T>((src[idx] - mean) * inv);
          xh[idx] = xn;
          dst[idx] = ga * xn + be;
        }
      }
    }
  }

  auto geom = std::make_shared<std::array<int, 5>>(std::array<int, 5>{n, c, h, w, groups});
  return make_op<T>(
      std::move(out), {x, gamma, beta}, [xhat, inv_std, geom](Node<T>& self) {
        auto [n, c, h, w, groups] = *geom;
        int cg = c / groups;
        size_t plane = static_cast<size_t>(h) * w;
        size_t m = static_cast<size_t>(cg) * plane;
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        if (gn.requires_grad) gn.ensure_grad();
        if (bn.requires_grad) bn.ensure_grad();
        if (xn.requires_grad) xn.ensure_grad();
        // per-channel affine grads
        if (gn.requires_grad || bn.requires_grad) {
          for (int ch = 0; ch < c; ++ch) {
            double dg = 0, db = 0;
            for (int i = 0; i < n; ++i) {
              const T* g = self.grad.data() + (static_cast<size_t>(i) * c + ch) * plane;
              const T* xh = xhat->data() + (static_cast<size_t>(i) * c + ch) * plane;
              for (size_t j = 0; j < plane; ++j) {
                dg += static_cast<double>(g[j]) * xh[j];
                db += g[j];
              }
            }
            if (gn.requires_grad) gn.grad[static_cast<size_t>(ch)] += static_cast<T>(dg);
            if (bn.requires_grad) bn.grad[static_cast<size_t>(ch)] += static_cast<T>(db);
          }
        }
        if (!xn.requires_grad) return;
        for (int i = 0; i < n; ++i)
          for (int g = 0; g < groups; ++g) {
            size_t base = (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cg) * plane;
            const T* gy = self.grad.data() + base;
            const T* xh = xhat->data() + base;
            double s1 = 0, s2 = 0;
            for (int cc = 0; cc < cg; ++cc) {
              T ga = gn.value[static_cast<size_t>(g * cg + cc)];
              for (size_t j = 0; j < plane; ++j) {
                size_t idx = static_cast<size_t>(cc) * plane + j;
                double dxh = static_cast<double>(gy[idx]) * ga;
                s1 += dxh;
                s2 += dxh * xh[idx];
              }
            }
            T inv = (*inv_std)[static_cast<size_t>(i) * groups + g];
            double inv_m = static_cast<double>(inv) / static_cast<double>(m);
            T* dx = xn.grad.data() + base;
            for (int cc = 0; cc < cg; ++cc) {
              T ga = gn.value[static_cast<size_t>(g * cg + cc)];
              for (size_t j = 0; j < plane; ++j) {
                size_t idx = static_cast<size_t>(cc) * plane + j;
                double dxh = static_cast<double>(gy[idx]) * ga;
                dx[idx] += static_cast<T>(
                    inv_m * (static_cast<double>(m) * dxh - s1 - xh[idx] * s2));
              }
            }
          }
      });
}

}  // namespace mth::nn
