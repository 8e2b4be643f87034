// Copyright 2026 The Condenser Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cforge/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "cforge/error.h"

namespace cforge {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

[[noreturn]] void ShapeFail(const std::string& op, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, op + ": " + what);
}

template <typename T>
void RequireRank(const std::string& op, const std::string& name,
                 const BasicTensor<T>& t, int rank) {
  if (!t.defined()) ShapeFail(op, name + " is undefined");
  if (t.rank() != rank) {
    ShapeFail(op, name + " must be rank " + std::to_string(rank) + ", got " +
                      ShapeString(t.shape()));
  }
}

template <typename T>
void DebugCheckFinite(const char* op, std::initializer_list<const BasicTensor<T>*> inputs,
                      const BasicTensor<T>& out) {
#ifndef NDEBUG
  for (const BasicTensor<T>* in : inputs) {
    if (in == nullptr || !in->defined()) continue;
    for (T v : in->data()) {
      if (!std::isfinite(v)) return;
    }
  }
  for (T v : out.data()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNumeric,
                  std::string(op) + " produced a non-finite value from finite inputs");
    }
  }
#else
  (void)op;
  (void)inputs;
  (void)out;
#endif
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo;
  int sh, sw, ph, pw, groups;
  std::int64_t cin_g() const { return cin / groups; }
  std::int64_t cout_g() const { return cout / groups; }
  bool depthwise() const { return cin_g() == 1 && cout_g() == 1; }
  bool pointwise_fast() const {
    return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0;
  }
};

// Unfolds one group of one sample into a (cin_g*kh*kw) x (ho*wo) matrix.
template <typename T>
void Im2Col(const T* x, const ConvGeometry& g, T* cols) {
  const std::int64_t hw_out = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.cin_g(); ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * hw_out;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.sh - g.ph + ky;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.sw - g.pw + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? T(0) : plane[iy * g.w + ix];
          }
        }
      }
    }
  }
}

template <typename T>
void Col2ImAdd(const T* cols, const ConvGeometry& g, T* dx) {
  const std::int64_t hw_out = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.cin_g(); ++c) {
    T* plane = dx + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * hw_out;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.sh - g.ph + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.sw - g.pw + kx;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void DepthwiseForward(const T* x, const T* w, const ConvGeometry& g, T* y) {
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      const T* k = w + c * g.kh * g.kw;
      T* out = y + (n * g.cout + c) * g.ho * g.wo;
      for (std::int64_t oy = 0; oy < g.ho; ++oy) {
        for (std::int64_t ox = 0; ox < g.wo; ++ox) {
          T acc = T(0);
          for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            const std::int64_t iy = oy * g.sh - g.ph + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
              const std::int64_t ix = ox * g.sw - g.pw + kx;
              if (ix < 0 || ix >= g.w) continue;
              acc += plane[iy * g.w + ix] * k[ky * g.kw + kx];
            }
          }
          out[oy * g.wo + ox] += acc;
        }
      }
    }
  }
}

template <typename T>
void DepthwiseBackward(const T* x, const T* w, const T* dy,
                       const ConvGeometry& g, T* dx, T* dw) {
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      const T* k = w + c * g.kh * g.kw;
      const T* gout = dy + (n * g.cout + c) * g.ho * g.wo;
      T* gplane = dx ? dx + (n * g.cin + c) * g.h * g.w : nullptr;
      T* gk = dw ? dw + c * g.kh * g.kw : nullptr;
      for (std::int64_t oy = 0; oy < g.ho; ++oy) {
        for (std::int64_t ox = 0; ox < g.wo; ++ox) {
          const T go = gout[oy * g.wo + ox];
          for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            const std::int64_t iy = oy * g.sh - g.ph + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
              const std::int64_t ix = ox * g.sw - g.pw + kx;
              if (ix < 0 || ix >= g.w) continue;
              if (gplane) gplane[iy * g.w + ix] += go * k[ky * g.kw + kx];
              if (gk) gk[ky * g.kw + kx] += go * plane[iy * g.w + ix];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> Conv2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                      const BasicTensor<T>& w, const BasicTensor<T>& b,
                      const Conv2dOptions& options) {
  const std::string op = "conv2d";
  RequireRank(op, "input", x, 4);
  RequireRank(op, "weight", w, 4);
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.sh = options.stride[0];
  g.sw = options.stride[1];
  g.ph = options.pad[0];
  g.pw = options.pad[1];
  g.groups = options.groups;
  if (g.groups < 1) ShapeFail(op, "groups must be >= 1");
  if (g.sh < 1 || g.sw < 1) ShapeFail(op, "stride must be >= 1");
  if (g.ph < 0 || g.pw < 0) ShapeFail(op, "padding must be >= 0");
  if (g.cin % g.groups != 0) {
    ShapeFail(op, "input channels (dim 1) = " + std::to_string(g.cin) +
                      " not divisible by groups = " + std::to_string(g.groups));
  }
  if (g.cout % g.groups != 0) {
    ShapeFail(op, "output channels (weight dim 0) = " + std::to_string(g.cout) +
                      " not divisible by groups = " + std::to_string(g.groups));
  }
  if (w.dim(1) != g.cin_g()) {
    ShapeFail(op, "weight dim 1 = " + std::to_string(w.dim(1)) +
                      " but input channels / groups = " +
                      std::to_string(g.cin_g()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != g.cout)) {
    ShapeFail(op, "bias must be [" + std::to_string(g.cout) + "], got " +
                      ShapeString(b.shape()));
  }
  if (g.h + 2 * g.ph < g.kh) {
    ShapeFail(op, "kernel height (dim 2) = " + std::to_string(g.kh) +
                      " exceeds padded input height " +
                      std::to_string(g.h + 2 * g.ph));
  }
  if (g.w + 2 * g.pw < g.kw) {
    ShapeFail(op, "kernel width (dim 3) = " + std::to_string(g.kw) +
                      " exceeds padded input width " +
                      std::to_string(g.w + 2 * g.pw));
  }
  g.ho = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
  g.wo = (g.w + 2 * g.pw - g.kw) / g.sw + 1;

  BasicTensor<T> y(Shape{g.n, g.cout, g.ho, g.wo});
  const std::int64_t hw_out = g.ho * g.wo;
  const std::int64_t k_len = g.cin_g() * g.kh * g.kw;
  T* yp = y.raw();
  if (b.defined()) {
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (std::int64_t c = 0; c < g.cout; ++c) {
        std::fill_n(yp + (n * g.cout + c) * hw_out, hw_out, b.data()[c]);
      }
    }
  }
  if (g.depthwise()) {
    DepthwiseForward(x.raw(), w.raw(), g, yp);
  } else {
    std::vector<T> cols(g.pointwise_fast() ? 0 : k_len * hw_out);
    for (std::int64_t n = 0; n < g.n; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        const T* xg = x.raw() + (n * g.cin + grp * g.cin_g()) * g.h * g.w;
        const T* colp = xg;
        if (!g.pointwise_fast()) {
          Im2Col(xg, g, cols.data());
          colp = cols.data();
        }
        ConstMatMap<T> wm(w.raw() + grp * g.cout_g() * k_len, g.cout_g(), k_len);
        ConstMatMap<T> cm(colp, k_len, hw_out);
        MatMap<T> ym(yp + (n * g.cout + grp * g.cout_g()) * hw_out, g.cout_g(),
                     hw_out);
        ym.noalias() += wm * cm;
      }
    }
  }
  DebugCheckFinite<T>("conv2d", {&x, &w, &b}, y);

  if (tape.ShouldRecord({&x, &w, &b})) {
    tape.Record(op, {x, w, b}, y, [x, w, b, y, g, hw_out, k_len]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      T* dw = w.requires_grad() ? w.mutable_grad().data() : nullptr;
      if (b.defined() && b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::int64_t n = 0; n < g.n; ++n) {
          for (std::int64_t c = 0; c < g.cout; ++c) {
            const T* row = dy + (n * g.cout + c) * hw_out;
            T acc = T(0);
            for (std::int64_t i = 0; i < hw_out; ++i) acc += row[i];
            db[c] += acc;
          }
        }
      }
      if (dx == nullptr && dw == nullptr) return;
      if (g.depthwise()) {
        DepthwiseBackward(x.raw(), w.raw(), dy, g, dx, dw);
        return;
      }
      std::vector<T> cols(g.pointwise_fast() ? 0 : k_len * hw_out);
      std::vector<T> dcols(dx != nullptr && !g.pointwise_fast() ? k_len * hw_out : 0);
      for (std::int64_t n = 0; n < g.n; ++n) {
        for (int grp = 0; grp < g.groups; ++grp) {
          const T* xg = x.raw() + (n * g.cin + grp * g.cin_g()) * g.h * g.w;
          ConstMatMap<T> dym(dy + (n * g.cout + grp * g.cout_g()) * hw_out,
                             g.cout_g(), hw_out);
          if (dw != nullptr) {
            const T* colp = xg;
            if (!g.pointwise_fast()) {
              Im2Col(xg, g, cols.data());
              colp = cols.data();
            }
            ConstMatMap<T> cm(colp, k_len, hw_out);
            MatMap<T> dwm(dw + grp * g.cout_g() * k_len, g.cout_g(), k_len);
            dwm.noalias() += dym * cm.transpose();
          }
          if (dx != nullptr) {
            ConstMatMap<T> wm(w.raw() + grp * g.cout_g() * k_len, g.cout_g(),
                              k_len);
            T* dxg = dx + (n * g.cin + grp * g.cin_g()) * g.h * g.w;
            if (g.pointwise_fast()) {
              MatMap<T> dxm(dxg, k_len, hw_out);
              dxm.noalias() += wm.transpose() * dym;
            } else {
              MatMap<T> dcm(dcols.data(), k_len, hw_out);
              dcm.noalias() = wm.transpose() * dym;
              Col2ImAdd(dcols.data(), g, dxg);
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> PointwiseMap(BasicTape<T>& tape, const BasicTensor<T>& x,
                            PointwiseKind kind) {
  BasicTensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  if (kind == PointwiseKind::kRelu) {
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
  } else {
    // Branching on the sign keeps exp() from overflowing for large |z|.
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const T z = xs[i];
      if (z >= T(0)) {
        ys[i] = T(1) / (T(1) + std::exp(-z));
      } else {
        const T e = std::exp(z);
        ys[i] = e / (T(1) + e);
      }
    }
  }
  DebugCheckFinite<T>("pointwise_map", {&x}, y);
  if (tape.ShouldRecord({&x})) {
    tape.Record(kind == PointwiseKind::kRelu ? "relu" : "sigmoid", {x}, y,
                [x, y, kind]() mutable {
                  auto dy = y.grad();
                  auto dx = x.mutable_grad();
                  auto xs = x.data();
                  auto ys = y.data();
                  if (kind == PointwiseKind::kRelu) {
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      if (xs[i] > T(0)) dx[i] += dy[i];
                    }
                  } else {
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      dx[i] += dy[i] * ys[i] * (T(1) - ys[i]);
                    }
                  }
                });
  }
  return y;
}

template <typename T>
BasicTensor<T> Softmax(BasicTape<T>& tape, const BasicTensor<T>& x) {
  RequireRank("softmax", "input", x, 2);
  const std::int64_t rows = x.dim(0);
  const std::int64_t k = x.dim(1);
  if (k < 1) ShapeFail("softmax", "needs K >= 1");
  BasicTensor<T> y(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = x.raw() + r * k;
    T* out = y.raw() + r * k;
    const T m = *std::max_element(in, in + k);
    T total = T(0);
    for (std::int64_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - m);
      total += out[j];
    }
    for (std::int64_t j = 0; j < k; ++j) out[j] /= total;
  }
  DebugCheckFinite<T>("softmax", {&x}, y);
  if (tape.ShouldRecord({&x})) {
    tape.Record("softmax", {x}, y, [x, y, rows, k]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.mutable_grad().data();
      const T* p = y.raw();
      for (std::int64_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::int64_t j = 0; j < k; ++j) dot += dy[r * k + j] * p[r * k + j];
        for (std::int64_t j = 0; j < k; ++j) {
          dx[r * k + j] += p[r * k + j] * (dy[r * k + j] - dot);
        }
      }
    });
  }
  return y;
}

template <typename T>
BatchNormState<T> BatchNormState<T>::Fresh(std::int64_t channels) {
  BatchNormState state;
  state.running_mean = BasicTensor<T>::Full(Shape{channels}, T(0));
  state.running_var = BasicTensor<T>::Full(Shape{channels}, T(1));
  return state;
}

template <typename T>
BasicTensor<T> BatchNorm2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                           const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state,
                           Mode mode) {
  const std::string op = "batchnorm2d";
  RequireRank(op, "input", x, 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t hw = h * w;
  const std::int64_t m = n * hw;
  if (m < 1) ShapeFail(op, "needs N*H*W >= 1");
  const std::initializer_list<const BasicTensor<T>*> per_channel = {
      &gamma, &beta, &state.running_mean, &state.running_var};
  for (const BasicTensor<T>* p : per_channel) {
    if (!p->defined() || p->rank() != 1 || p->dim(0) != c) {
      ShapeFail(op, "per-channel parameters must be [" + std::to_string(c) + "]");
    }
  }
  if (mode == Mode::kEval && !state.has_statistics && !state.warned) {
    state.warned = true;
    Warn("batchnorm2d evaluated before any train-mode update; using initial "
         "running statistics (mean 0, var 1)");
  }

  std::vector<T> mean(c), inv_std(c);
  if (mode == Mode::kTrain) {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = x.raw() + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) s += p[j];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = x.raw() + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double d = p[j] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      rm[ch] = static_cast<T>((1.0 - state.momentum) * rm[ch] + state.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - state.momentum) * rv[ch] +
                              state.momentum * unbiased);
    }
    state.has_statistics = true;
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean.data()[ch];
      inv_std[ch] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(state.running_var.data()[ch]) +
                          state.epsilon));
    }
  }

  BasicTensor<T> y(x.shape());
  BasicTensor<T> xhat(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* p = x.raw() + (i * c + ch) * hw;
      T* q = xhat.raw() + (i * c + ch) * hw;
      T* out = y.raw() + (i * c + ch) * hw;
      const T g = gamma.data()[ch];
      const T bt = beta.data()[ch];
      for (std::int64_t j = 0; j < hw; ++j) {
        q[j] = (p[j] - mean[ch]) * inv_std[ch];
        out[j] = g * q[j] + bt;
      }
    }
  }
  DebugCheckFinite<T>("batchnorm2d", {&x, &gamma, &beta}, y);

  if (tape.ShouldRecord({&x, &gamma, &beta})) {
    tape.Record(op, {x, gamma, beta}, y,
                [x, gamma, beta, y, xhat, inv_std, mode, n, c, hw, m]() mutable {
      const T* dy = y.grad().data();
      const T* xh = xhat.raw();
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t off = (i * c + ch) * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            sum_dy[ch] += dy[off + j];
            sum_dy_xhat[ch] += dy[off + j] * xh[off + j];
          }
        }
      }
      if (gamma.requires_grad()) {
        auto dg = gamma.mutable_grad();
        for (std::int64_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<T>(sum_dy_xhat[ch]);
      }
      if (beta.requires_grad()) {
        auto db = beta.mutable_grad();
        for (std::int64_t ch = 0; ch < c; ++ch) db[ch] += static_cast<T>(sum_dy[ch]);
      }
      if (!x.requires_grad()) return;
      T* dx = x.mutable_grad().data();
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t off = (i * c + ch) * hw;
          const double g = gamma.data()[ch];
          const double is = inv_std[ch];
          for (std::int64_t j = 0; j < hw; ++j) {
            if (mode == Mode::kTrain) {
              // d/dx of gamma * (x - mean) / std with batch statistics.
              const double v = dy[off + j] - sum_dy[ch] * inv_m -
                               xh[off + j] * sum_dy_xhat[ch] * inv_m;
              dx[off + j] += static_cast<T>(g * is * v);
            } else {
              dx[off + j] += static_cast<T>(g * is * dy[off + j]);
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> GlobalAvgPool(BasicTape<T>& tape, const BasicTensor<T>& x) {
  RequireRank("global_avg_pool", "input", x, 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 1) ShapeFail("global_avg_pool", "empty spatial extent");
  BasicTensor<T> y(Shape{n, c, 1, 1});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* p = x.raw() + i * hw;
    T acc = T(0);
    for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
    y.raw()[i] = acc / static_cast<T>(hw);
  }
  if (tape.ShouldRecord({&x})) {
    tape.Record("global_avg_pool", {x}, y, [x, y, n, c, hw]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.mutable_grad().data();
      const T inv = T(1) / static_cast<T>(hw);
      for (std::int64_t i = 0; i < n * c; ++i) {
        const T g = dy[i] * inv;
        for (std::int64_t j = 0; j < hw; ++j) dx[i * hw + j] += g;
      }
    });
  }
  return y;
}

std::int64_t MaxPoolExtent(std::int64_t in, const MaxPoolOptions& options) {
  if (options.kernel < 1 || options.stride < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "max_pool2d: kernel and stride must be >= 1");
  }
  if (options.kernel > in) {
    throw Error(ErrorCode::kShapeMismatch,
                "max_pool2d: window " + std::to_string(options.kernel) +
                    " larger than input extent " + std::to_string(in));
  }
  const std::int64_t span = in - options.kernel;
  std::int64_t out = options.ceil_mode
                         ? (span + options.stride - 1) / options.stride + 1
                         : span / options.stride + 1;
  // The last window must start inside the input.
  if (options.ceil_mode && (out - 1) * options.stride >= in) --out;
  return out;
}

template <typename T>
BasicTensor<T> MaxPool2d(BasicTape<T>& tape, const BasicTensor<T>& x,
                         const MaxPoolOptions& options) {
  RequireRank("max_pool2d", "input", x, 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = MaxPoolExtent(h, options);
  const std::int64_t wo = MaxPoolExtent(w, options);
  BasicTensor<T> y(Shape{n, c, ho, wo});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(y.numel()));
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* p = x.raw() + i * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        const std::int64_t y0 = oy * options.stride;
        const std::int64_t x0 = ox * options.stride;
        const std::int64_t y1 = std::min<std::int64_t>(y0 + options.kernel, h);
        const std::int64_t x1 = std::min<std::int64_t>(x0 + options.kernel, w);
        std::int64_t best = y0 * w + x0;
        for (std::int64_t yy = y0; yy < y1; ++yy) {
          for (std::int64_t xx = x0; xx < x1; ++xx) {
            // Strict > keeps the first maximum on ties.
            if (p[yy * w + xx] > p[best]) best = yy * w + xx;
          }
        }
        const std::int64_t o = (i * ho + oy) * wo + ox;
        y.raw()[o] = p[best];
        argmax[static_cast<std::size_t>(o)] = i * h * w + best;
      }
    }
  }
  if (tape.ShouldRecord({&x})) {
    tape.Record("max_pool2d", {x}, y, [x, y, argmax]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.mutable_grad().data();
      for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> FullyConnected(BasicTape<T>& tape, const BasicTensor<T>& x,
                              const BasicTensor<T>& w,
                              const BasicTensor<T>& b) {
  const std::string op = "fully_connected";
  RequireRank(op, "input", x, 2);
  RequireRank(op, "weight", w, 2);
  RequireRank(op, "bias", b, 1);
  const std::int64_t n = x.dim(0), d = x.dim(1), k = w.dim(0);
  if (w.dim(1) != d) {
    ShapeFail(op, "input dim 1 = " + std::to_string(d) + " but weight dim 1 = " +
                      std::to_string(w.dim(1)));
  }
  if (b.dim(0) != k) {
    ShapeFail(op, "bias dim 0 = " + std::to_string(b.dim(0)) +
                      " but weight dim 0 = " + std::to_string(k));
  }
  BasicTensor<T> y(Shape{n, k});
  ConstMatMap<T> xm(x.raw(), n, d);
  ConstMatMap<T> wm(w.raw(), k, d);
  MatMap<T> ym(y.raw(), n, k);
  ym.noalias() = xm * wm.transpose();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < k; ++j) ym(i, j) += b.data()[j];
  }
  DebugCheckFinite<T>("fully_connected", {&x, &w, &b}, y);
  if (tape.ShouldRecord({&x, &w, &b})) {
    tape.Record(op, {x, w, b}, y, [x, w, b, y, n, d, k]() mutable {
      ConstMatMap<T> dym(y.grad().data(), n, k);
      if (x.requires_grad()) {
        MatMap<T> dxm(x.mutable_grad().data(), n, d);
        dxm.noalias() += dym * ConstMatMap<T>(w.raw(), k, d);
      }
      if (w.requires_grad()) {
        MatMap<T> dwm(w.mutable_grad().data(), k, d);
        dwm.noalias() += dym.transpose() * ConstMatMap<T>(x.raw(), n, d);
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          for (std::int64_t j = 0; j < k; ++j) db[j] += dym(i, j);
        }
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> Add(BasicTape<T>& tape, const BasicTensor<T>& a,
                   const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    ShapeFail("add", ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  }
  BasicTensor<T> y(a.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y.raw()[i] = a.raw()[i] + b.raw()[i];
  if (tape.ShouldRecord({&a, &b})) {
    tape.Record("add", {a, b}, y, [a, b, y]() mutable {
      auto dy = y.grad();
      for (const BasicTensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> Mul(BasicTape<T>& tape, const BasicTensor<T>& a,
                   const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    ShapeFail("mul", ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  }
  BasicTensor<T> y(a.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y.raw()[i] = a.raw()[i] * b.raw()[i];
  if (tape.ShouldRecord({&a, &b})) {
    tape.Record("mul", {a, b}, y, [a, b, y]() mutable {
      auto dy = y.grad();
      if (a.requires_grad()) {
        auto d = a.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto d = b.mutable_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * a.data()[i];
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> Scale(BasicTape<T>& tape, const BasicTensor<T>& x, T factor) {
  BasicTensor<T> y(x.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y.raw()[i] = x.raw()[i] * factor;
  if (tape.ShouldRecord({&x})) {
    tape.Record("scale", {x}, y, [x, y, factor]() mutable {
      auto dy = y.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> ScaleChannels(BasicTape<T>& tape, const BasicTensor<T>& x,
                             const BasicTensor<T>& s) {
  RequireRank("scale_channels", "input", x, 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (!s.defined() || s.rank() != 1 || s.dim(0) != c) {
    ShapeFail("scale_channels", "scale must be [" + std::to_string(c) + "]");
  }
  BasicTensor<T> y(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t off = (i * c + ch) * hw;
      const T f = s.data()[ch];
      for (std::int64_t j = 0; j < hw; ++j) y.raw()[off + j] = x.raw()[off + j] * f;
    }
  }
  if (tape.ShouldRecord({&x, &s})) {
    tape.Record("scale_channels", {x, s}, y, [x, s, y, n, c, hw]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      T* ds = s.requires_grad() ? s.mutable_grad().data() : nullptr;
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::int64_t off = (i * c + ch) * hw;
          const T f = s.data()[ch];
          T acc = T(0);
          for (std::int64_t j = 0; j < hw; ++j) {
            if (dx) dx[off + j] += dy[off + j] * f;
            acc += dy[off + j] * x.raw()[off + j];
          }
          if (ds) ds[ch] += acc;
        }
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> UpsampleNearest2x(BasicTape<T>& tape, const BasicTensor<T>& x,
                                 std::int64_t out_h, std::int64_t out_w) {
  RequireRank("upsample_nearest2x", "input", x, 4);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h > 2 * h || out_w > 2 * w || out_h < 1 || out_w < 1) {
    ShapeFail("upsample_nearest2x",
              "crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                  " outside upsampled extent " + std::to_string(2 * h) + "x" +
                  std::to_string(2 * w));
  }
  BasicTensor<T> y(Shape{n, c, out_h, out_w});
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* p = x.raw() + i * h * w;
    T* q = y.raw() + i * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        q[oy * out_w + ox] = p[(oy / 2) * w + ox / 2];
      }
    }
  }
  if (tape.ShouldRecord({&x})) {
    tape.Record("upsample_nearest2x", {x}, y,
                [x, y, n, c, h, w, out_h, out_w]() mutable {
      const T* dy = y.grad().data();
      T* dx = x.mutable_grad().data();
      for (std::int64_t i = 0; i < n * c; ++i) {
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            dx[i * h * w + (oy / 2) * w + ox / 2] +=
                dy[(i * out_h + oy) * out_w + ox];
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> Flatten(BasicTape<T>& tape, const BasicTensor<T>& x) {
  RequireRank("flatten", "input", x, 4);
  const std::int64_t n = x.dim(0);
  const std::int64_t d = x.numel() / std::max<std::int64_t>(n, 1);
  std::vector<T> values(x.data().begin(), x.data().end());
  BasicTensor<T> y(Shape{n, d}, std::move(values));
  if (tape.ShouldRecord({&x})) {
    tape.Record("flatten", {x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> Sum(BasicTape<T>& tape, const BasicTensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  BasicTensor<T> y = BasicTensor<T>::Scalar(acc);
  if (tape.ShouldRecord({&x})) {
    tape.Record("sum", {x}, y, [x, y]() mutable {
      const T g = y.grad()[0];
      for (T& d : x.mutable_grad()) d += g;
    });
  }
  return y;
}

template <typename T>
Sgd<T>::Sgd(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sgd: learning rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sgd: momentum must be in [0, 1)");
  }
}

template <typename T>
void Sgd<T>::Step(std::span<BasicTensor<T>> params) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].has_grad()) continue;
    for (T g : params[p].grad()) {
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::kNumeric,
                    "sgd: non-finite gradient in parameter " + std::to_string(p));
      }
    }
  }
  if (velocity_.size() < params.size()) velocity_.resize(params.size());
  const T lr = static_cast<T>(learning_rate_);
  const T mu = static_cast<T>(momentum_);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].has_grad()) continue;
    auto theta = params[p].data();
    auto g = params[p].grad();
    auto& v = velocity_[p];
    if (v.size() != theta.size()) v.assign(theta.size(), T(0));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      theta[i] -= lr * v[i];
    }
  }
}

#define CFORGE_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> Conv2d(BasicTape<T>&, const BasicTensor<T>&,         \
                                 const BasicTensor<T>&, const BasicTensor<T>&, \
                                 const Conv2dOptions&);                        \
  template BasicTensor<T> PointwiseMap(BasicTape<T>&, const BasicTensor<T>&,   \
                                       PointwiseKind);                         \
  template BasicTensor<T> Softmax(BasicTape<T>&, const BasicTensor<T>&);       \
  template struct BatchNormState<T>;                                           \
  template BasicTensor<T> BatchNorm2d(                                         \
      BasicTape<T>&, const BasicTensor<T>&, const BasicTensor<T>&,             \
      const BasicTensor<T>&, BatchNormState<T>&, Mode);                        \
  template BasicTensor<T> GlobalAvgPool(BasicTape<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> MaxPool2d(BasicTape<T>&, const BasicTensor<T>&,      \
                                    const MaxPoolOptions&);                    \
  template BasicTensor<T> FullyConnected(BasicTape<T>&, const BasicTensor<T>&, \
                                         const BasicTensor<T>&,                \
                                         const BasicTensor<T>&);               \
  template BasicTensor<T> Add(BasicTape<T>&, const BasicTensor<T>&,            \
                              const BasicTensor<T>&);                          \
  template BasicTensor<T> Mul(BasicTape<T>&, const BasicTensor<T>&,            \
                              const BasicTensor<T>&);                          \
  template BasicTensor<T> Scale(BasicTape<T>&, const BasicTensor<T>&, T);      \
  template BasicTensor<T> ScaleChannels(BasicTape<T>&, const BasicTensor<T>&,  \
                                        const BasicTensor<T>&);                \
  template BasicTensor<T> UpsampleNearest2x(                                   \
      BasicTape<T>&, const BasicTensor<T>&, std::int64_t, std::int64_t);       \
  template BasicTensor<T> Flatten(BasicTape<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> Sum(BasicTape<T>&, const BasicTensor<T>&);           \
  template class Sgd<T>;

CFORGE_INSTANTIATE_OPS(float)
CFORGE_INSTANTIATE_OPS(double)

#undef CFORGE_INSTANTIATE_OPS

}  // namespace cforge
