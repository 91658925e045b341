// Copyright 2026 The vibkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vibkit/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "vibkit/error.hpp"

namespace vibkit::ad {
namespace {

thread_local BranchTrace* active_trace = nullptr;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MMap = Eigen::Map<Mat<T>>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

template <typename T>
CMap<T> cmat(const std::vector<T>& v, std::size_t rows, std::size_t cols,
             std::size_t offset = 0) {
  return CMap<T>(v.data() + offset, static_cast<Index>(rows), static_cast<Index>(cols));
}

template <typename T>
MMap<T> mmat(std::vector<T>& v, std::size_t rows, std::size_t cols,
             std::size_t offset = 0) {
  return MMap<T>(v.data() + offset, static_cast<Index>(rows), static_cast<Index>(cols));
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void expect_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(s));
  }
}

template <typename T>
bool tracks(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

template <typename T>
Tensor<T> unary(const Tensor<T>& x, const char* op, T (*f)(T),
                T (*df)(T x, T y)) {
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  Tensor<T> out = Tensor<T>::make_result(x.shape(), std::move(y), op, {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, df] {
      if (!xn->requires_grad) return;
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += o->grad[i] * df(xn->value[i], o->value[i]);
      }
    };
  }
  return out;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Column block of a (C*kh*kw, Ho*Wo) matrix for one image.
template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t Ho, std::size_t Wo, T* cols) {
  const std::size_t plane = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * plane;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(i);
          T* dst = row + oy * Wo;
          if (iy < 0 || iy >= static_cast<long>(H)) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = img + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(W)) ? T(0)
                                                            : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t Ho, std::size_t Wo, T* img) {
  const std::size_t plane = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * plane;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          T* dst = img + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(j);
            if (ix >= 0 && ix < static_cast<long>(W)) {
              dst[static_cast<std::size_t>(ix)] += row[oy * Wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

BranchTrace::BranchTrace() : previous_(active_trace) { active_trace = this; }
BranchTrace::~BranchTrace() { active_trace = previous_; }

void BranchTrace::mix(std::uint64_t v) {
  hash_ ^= v + 0x9e3779b97f4a7c15ULL + (hash_ << 6) + (hash_ >> 2);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  Tensor<T> out = Tensor<T>::make_result(a.shape(), std::move(y), "add", {a, b});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    auto* bn = b.node();
    o->backward = [o, an, bn] {
      for (auto* n : {an, bn}) {
        if (!n->requires_grad) continue;
        auto& g = n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  Tensor<T> out = Tensor<T>::make_result(a.shape(), std::move(y), "sub", {a, b});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    auto* bn = b.node();
    o->backward = [o, an, bn] {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  Tensor<T> out = Tensor<T>::make_result(a.shape(), std::move(y), "mul", {a, b});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    auto* bn = b.node();
    o->backward = [o, an, bn] {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  const auto& av = a.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * s;
  Tensor<T> out = Tensor<T>::make_result(a.shape(), std::move(y), "scale", {a});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    o->backward = [o, an, s] {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * s;
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.node()->value) acc += v;
  Tensor<T> out = Tensor<T>::make_result({1}, {acc}, "sum", {a});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    o->backward = [o, an] {
      auto& g = an->ensure_grad();
      for (T& v : g) v += o->grad[0];
    };
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (active_trace != nullptr) {
    const auto& v = x.node()->value;
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      word = (word << 1) | (v[i] > T(0) ? 1U : 0U);
      if (i % 64 == 63 || i + 1 == v.size()) {
        active_trace->mix(word);
        word = 0;
      }
    }
  }
  return unary<T>(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x, "sigmoid", [](T v) { return sigmoid_scalar(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  expect_rank("matmul", a.shape(), 2);
  expect_rank("matmul", b.shape(), 2);
  if (a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> y(m * n);
  mmat(y, m, n).noalias() = cmat(a.node()->value, m, k) * cmat(b.node()->value, k, n);
  Tensor<T> out = Tensor<T>::make_result({m, n}, std::move(y), "matmul", {a, b});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* an = a.node();
    auto* bn = b.node();
    o->backward = [o, an, bn, m, k, n] {
      const auto go = cmat(o->grad, m, n);
      if (an->requires_grad) {
        mmat(an->ensure_grad(), m, k).noalias() += go * cmat(bn->value, k, n).transpose();
      }
      if (bn->requires_grad) {
        mmat(bn->ensure_grad(), k, n).noalias() += cmat(an->value, m, k).transpose() * go;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  expect_rank("linear", x.shape(), 2);
  expect_rank("linear", weight.shape(), 2);
  if (x.dim(1) != weight.dim(1)) mismatch("linear", x.shape(), weight.shape());
  const std::size_t B = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    mismatch("linear bias", weight.shape(), bias.shape());
  }
  std::vector<T> y(B * out_dim);
  auto Y = mmat(y, B, out_dim);
  Y.noalias() = cmat(x.node()->value, B, in) * cmat(weight.node()->value, out_dim, in).transpose();
  if (bias.defined()) {
    Y.rowwise() += cmat(bias.node()->value, 1, out_dim).row(0);
  }
  Tensor<T> out = Tensor<T>::make_result({B, out_dim}, std::move(y), "linear", {x, weight, bias});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    auto* wn = weight.node();
    auto* bn = bias.defined() ? bias.node() : nullptr;
    o->backward = [o, xn, wn, bn, B, in, out_dim] {
      const auto go = cmat(o->grad, B, out_dim);
      if (xn->requires_grad) {
        mmat(xn->ensure_grad(), B, in).noalias() += go * cmat(wn->value, out_dim, in);
      }
      if (wn->requires_grad) {
        mmat(wn->ensure_grad(), out_dim, in).noalias() += go.transpose() * cmat(xn->value, B, in);
      }
      if (bn && bn->requires_grad) {
        mmat(bn->ensure_grad(), 1, out_dim) += go.colwise().sum();
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
  expect_rank("conv2d", x.shape(), 4);
  expect_rank("conv2d", kernel.shape(), 4);
  if (x.dim(1) != kernel.dim(1)) mismatch("conv2d", x.shape(), kernel.shape());
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride >= 1 and padding >= 0");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    mismatch("conv2d (kernel larger than padded input)", x.shape(), kernel.shape());
  }
  if (bias.defined() && bias.shape() != Shape{O}) mismatch("conv2d bias", kernel.shape(), bias.shape());
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;
  const std::size_t K = C * kh * kw, P = Ho * Wo;
  const bool direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;

  std::vector<T> y(B * O * P);
  std::vector<T> cols(direct ? 0 : K * P);
  const auto Kmat = cmat(kernel.node()->value, O, K);
  const auto& xv = x.node()->value;
  for (std::size_t b = 0; b < B; ++b) {
    auto Y = mmat(y, O, P, b * O * P);
    if (direct) {
      Y.noalias() = Kmat * cmat(xv, K, P, b * C * H * W);
    } else {
      im2col(xv.data() + b * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo, cols.data());
      Y.noalias() = Kmat * cmat(cols, K, P);
    }
    if (bias.defined()) {
      Y.colwise() += cmat(bias.node()->value, O, 1).col(0);
    }
  }
  Tensor<T> out =
      Tensor<T>::make_result({B, O, Ho, Wo}, std::move(y), "conv2d", {x, kernel, bias});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    auto* kn = kernel.node();
    auto* bn = bias.defined() ? bias.node() : nullptr;
    o->backward = [=] {
      std::vector<T> cols_b(direct ? 0 : K * P);
      std::vector<T> dcols(direct ? 0 : K * P);
      const auto Km = cmat(kn->value, O, K);
      for (std::size_t b = 0; b < B; ++b) {
        const auto go = cmat(o->grad, O, P, b * O * P);
        if (kn->requires_grad) {
          auto gk = mmat(kn->ensure_grad(), O, K);
          if (direct) {
            gk.noalias() += go * cmat(xn->value, K, P, b * C * H * W).transpose();
          } else {
            im2col(xn->value.data() + b * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo,
                   cols_b.data());
            gk.noalias() += go * cmat(cols_b, K, P).transpose();
          }
        }
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          if (direct) {
            mmat(gx, K, P, b * C * H * W).noalias() += Km.transpose() * go;
          } else {
            mmat(dcols, K, P).noalias() = Km.transpose() * go;
            col2im(dcols.data(), C, H, W, kh, kw, stride, padding, Ho, Wo,
                   gx.data() + b * C * H * W);
          }
        }
        if (bn && bn->requires_grad) {
          mmat(bn->ensure_grad(), O, 1) += go.rowwise().sum();
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& stats, bool training, T momentum, T eps) {
  expect_rank("batchnorm2d", x.shape(), 4);
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{C}) mismatch("batchnorm2d gamma", x.shape(), gamma.shape());
  if (beta.shape() != Shape{C}) mismatch("batchnorm2d beta", x.shape(), beta.shape());
  if (stats.mean.empty()) stats.mean.assign(C, T(0));
  if (stats.var.empty()) stats.var.assign(C, T(1));
  if (stats.mean.size() != C || stats.var.size() != C) {
    throw ShapeError("batchnorm2d: running statistics have the wrong channel count");
  }
  const std::size_t N = B * HW;
  if (training && N < 2) {
    throw ShapeError("batchnorm2d: training needs more than one value per channel, got shape " +
                     shape_str(x.shape()));
  }
  const auto& xv = x.node()->value;
  const auto& g = gamma.node()->value;
  const auto& be = beta.node()->value;

  std::vector<T> xhat(xv.size());
  std::vector<T> invstd(C);
  std::vector<T> y(xv.size());
  for (std::size_t c = 0; c < C; ++c) {
    T mu, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(N);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      mu = static_cast<T>(m);
      var = static_cast<T>(ss / static_cast<double>(N));
      const T unbiased = static_cast<T>(ss / static_cast<double>(N - 1));
      stats.mean[c] = (T(1) - momentum) * stats.mean[c] + momentum * mu;
      stats.var[c] = (T(1) - momentum) * stats.var[c] + momentum * unbiased;
    } else {
      mu = stats.mean[c];
      var = stats.var[c];
    }
    invstd[c] = T(1) / std::sqrt(var + eps);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = (xv[off + i] - mu) * invstd[c];
        xhat[off + i] = h;
        y[off + i] = g[c] * h + be[c];
      }
    }
  }
  Tensor<T> out = Tensor<T>::make_result(x.shape(), std::move(y), "batchnorm2d", {x, gamma, beta});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    auto* gn = gamma.node();
    auto* bn = beta.node();
    o->backward = [o, xn, gn, bn, xhat = std::move(xhat), invstd = std::move(invstd), B, C,
                   HW, N, training] {
      for (std::size_t c = 0; c < C; ++c) {
        double sdy = 0.0, sdyx = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            sdy += o->grad[off + i];
            sdyx += o->grad[off + i] * xhat[off + i];
          }
        }
        if (gn->requires_grad) gn->ensure_grad()[c] += static_cast<T>(sdyx);
        if (bn->requires_grad) bn->ensure_grad()[c] += static_cast<T>(sdy);
        if (!xn->requires_grad) continue;
        auto& gx = xn->ensure_grad();
        const T k = gn->value[c] * invstd[c];
        const T mdy = static_cast<T>(sdy / static_cast<double>(N));
        const T mdyx = static_cast<T>(sdyx / static_cast<double>(N));
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) {
            gx[off + i] += training
                               ? k * (o->grad[off + i] - mdy - xhat[off + i] * mdyx)
                               : k * o->grad[off + i];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int kernel, int stride, int padding) {
  expect_rank("maxpool2d", x.shape(), 4);
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw ShapeError("maxpool2d: need kernel >= 1, stride >= 1, 0 <= padding <= kernel / 2");
  }
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H + 2 * padding < static_cast<std::size_t>(kernel) ||
      W + 2 * padding < static_cast<std::size_t>(kernel)) {
    throw ShapeError("maxpool2d: window larger than input " + shape_str(x.shape()));
  }
  const std::size_t Ho = (H + 2 * padding - kernel) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kernel) / stride + 1;
  const auto& xv = x.node()->value;
  std::vector<T> y(B * C * Ho * Wo);
  std::vector<std::size_t> arg(y.size());
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* p = xv.data() + bc * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        for (int i = 0; i < kernel; ++i) {
          const long iy = static_cast<long>(oy) * stride - padding + i;
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (int j = 0; j < kernel; ++j) {
            const long ix = static_cast<long>(ox) * stride - padding + j;
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (p[idx] > best) {
              best = p[idx];
              best_i = idx;
            }
          }
        }
        const std::size_t o = (bc * Ho + oy) * Wo + ox;
        y[o] = best;
        arg[o] = bc * H * W + best_i;
      }
    }
  }
  if (active_trace != nullptr) {
    for (std::size_t a : arg) active_trace->mix(a);
  }
  Tensor<T> out = Tensor<T>::make_result({B, C, Ho, Wo}, std::move(y), "maxpool2d", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, arg = std::move(arg)] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, int kernel, int stride) {
  expect_rank("avgpool2d", x.shape(), 4);
  if (kernel < 1 || stride < 1) throw ShapeError("avgpool2d: kernel and stride must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < static_cast<std::size_t>(kernel) || W < static_cast<std::size_t>(kernel)) {
    throw ShapeError("avgpool2d: window larger than input " + shape_str(x.shape()));
  }
  const std::size_t Ho = (H - kernel) / stride + 1, Wo = (W - kernel) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  const auto& xv = x.node()->value;
  std::vector<T> y(B * C * Ho * Wo, T(0));
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T acc = 0;
        for (int i = 0; i < kernel; ++i) {
          for (int j = 0; j < kernel; ++j) {
            acc += xv[bc * H * W + (oy * stride + i) * W + ox * stride + j];
          }
        }
        y[(bc * Ho + oy) * Wo + ox] = acc * inv;
      }
    }
  }
  Tensor<T> out = Tensor<T>::make_result({B, C, Ho, Wo}, std::move(y), "avgpool2d", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [=] {
      auto& g = xn->ensure_grad();
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const T go = o->grad[(bc * Ho + oy) * Wo + ox] * inv;
            for (int i = 0; i < kernel; ++i) {
              for (int j = 0; j < kernel; ++j) {
                g[bc * H * W + (oy * stride + i) * W + ox * stride + j] += go;
              }
            }
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& x) {
  expect_rank("global_avgpool", x.shape(), 4);
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const auto& xv = x.node()->value;
  std::vector<T> y(B * C);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    T acc = 0;
    for (std::size_t i = 0; i < HW; ++i) acc += xv[bc * HW + i];
    y[bc] = acc / static_cast<T>(HW);
  }
  Tensor<T> out = Tensor<T>::make_result({B, C}, std::move(y), "global_avgpool", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, B, C, HW] {
      auto& g = xn->ensure_grad();
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T go = o->grad[bc] / static_cast<T>(HW);
        for (std::size_t i = 0; i < HW; ++i) g[bc * HW + i] += go;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) mismatch("reshape", x.shape(), shape);
  Tensor<T> out = Tensor<T>::make_result(std::move(shape), x.node()->value, "reshape", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.rank() < 1) throw ShapeError("flatten: rank-0 tensor");
  return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

template <typename T>
Tensor<T> swap01(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("swap01: need rank >= 2, got " + shape_str(x.shape()));
  const std::size_t A = x.dim(0), Bd = x.dim(1), inner = x.numel() / (A * Bd);
  Shape s = x.shape();
  std::swap(s[0], s[1]);
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t b = 0; b < Bd; ++b) {
      std::copy_n(xv.begin() + (a * Bd + b) * inner, inner, y.begin() + (b * A + a) * inner);
    }
  }
  Tensor<T> out = Tensor<T>::make_result(std::move(s), std::move(y), "swap01", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, A, Bd, inner] {
      auto& g = xn->ensure_grad();
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t b = 0; b < Bd; ++b) {
          for (std::size_t i = 0; i < inner; ++i) {
            g[(a * Bd + b) * inner + i] += o->grad[(b * A + a) * inner + i];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> select0(const Tensor<T>& x, std::size_t index) {
  if (x.rank() < 2 || index >= x.dim(0)) {
    throw ShapeError("select0: index " + std::to_string(index) + " out of range for shape " +
                     shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / x.dim(0);
  Shape s(x.shape().begin() + 1, x.shape().end());
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.begin() + index * inner, xv.begin() + (index + 1) * inner);
  Tensor<T> out = Tensor<T>::make_result(std::move(s), std::move(y), "select0", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, index, inner] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < inner; ++i) g[index * inner + i] += o->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape s = first;
  s[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) mismatch("concat", first, p.shape());
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) mismatch("concat", first, p.shape());
    }
    s[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t row = s[axis] * inner;
  std::vector<T> y(numel(s));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.node()->value.begin() + o * w, w, y.begin() + o * row + offset);
    }
    offsets.push_back(offset);
    offset += w;
  }
  Tensor<T> out = Tensor<T>::make_result(std::move(s), std::move(y), "concat", parts);
  if (out.requires_grad()) {
    auto* o = out.node();
    std::vector<typename Tensor<T>::Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    o->backward = [o, nodes, offsets, outer, row] {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto* n = nodes[k];
        if (!n->requires_grad) continue;
        auto& g = n->ensure_grad();
        const std::size_t w = g.size() / outer;
        for (std::size_t q = 0; q < outer; ++q) {
          for (std::size_t i = 0; i < w; ++i) g[q * w + i] += o->grad[q * row + offsets[k] + i];
        }
      }
    };
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::size_t>& sizes,
                             std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("split: axis out of range for " + shape_str(x.shape()));
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != x.dim(axis)) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but axis has " +
                     std::to_string(x.dim(axis)) + " in shape " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t row = x.dim(axis) * inner;
  std::vector<Tensor<T>> outs;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    Shape sh = x.shape();
    sh[axis] = s;
    const std::size_t w = s * inner;
    std::vector<T> y(outer * w);
    for (std::size_t q = 0; q < outer; ++q) {
      std::copy_n(x.node()->value.begin() + q * row + offset, w, y.begin() + q * w);
    }
    Tensor<T> out = Tensor<T>::make_result(std::move(sh), std::move(y), "split", {x});
    if (out.requires_grad()) {
      auto* o = out.node();
      auto* xn = x.node();
      o->backward = [o, xn, outer, row, offset, w] {
        auto& g = xn->ensure_grad();
        for (std::size_t q = 0; q < outer; ++q) {
          for (std::size_t i = 0; i < w; ++i) g[q * row + offset + i] += o->grad[q * w + i];
        }
      };
    }
    outs.push_back(std::move(out));
    offset += w;
  }
  return outs;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  const auto& xv = x.node()->value;
  std::vector<T> mask(xv.size());
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? T(0) : keep_scale;
    y[i] = xv[i] * mask[i];
  }
  Tensor<T> out = Tensor<T>::make_result(x.shape(), std::move(y), "dropout", {x});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    o->backward = [o, xn, mask = std::move(mask)] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * mask[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) mismatch("mse", pred.shape(), target.shape());
  const auto& p = pred.node()->value;
  const auto& t = target.node()->value;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  const std::size_t n = p.size();
  Tensor<T> out =
      Tensor<T>::make_result({1}, {static_cast<T>(acc / static_cast<double>(n))}, "mse",
                             {pred, target});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* pn = pred.node();
    auto* tn = target.node();
    o->backward = [o, pn, tn, n] {
      const T k = T(2) * o->grad[0] / static_cast<T>(n);
      if (pn->requires_grad) {
        auto& g = pn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] += k * (pn->value[i] - tn->value[i]);
      }
      if (tn->requires_grad) {
        auto& g = tn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pn->value[i] - tn->value[i]);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> gru(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
              const Tensor<T>& b_ih, const Tensor<T>& b_hh, const Tensor<T>& h0) {
  expect_rank("gru", x.shape(), 3);
  const std::size_t T_ = x.dim(0), B = x.dim(1), I = x.dim(2);
  if (T_ < 1) throw ShapeError("gru: sequence must have at least one time step");
  expect_rank("gru", w_hh.shape(), 2);
  const std::size_t H = w_hh.dim(1);
  if (w_hh.dim(0) != 3 * H) mismatch("gru w_hh", w_hh.shape(), Shape{3 * H, H});
  if (w_ih.shape() != Shape{3 * H, I}) mismatch("gru w_ih", x.shape(), w_ih.shape());
  if (b_ih.shape() != Shape{3 * H}) mismatch("gru b_ih", w_ih.shape(), b_ih.shape());
  if (b_hh.shape() != Shape{3 * H}) mismatch("gru b_hh", w_hh.shape(), b_hh.shape());
  if (h0.defined() && h0.shape() != Shape{B, H}) mismatch("gru h0", Shape{B, H}, h0.shape());

  const auto& wih = w_ih.node()->value;
  const auto& whh = w_hh.node()->value;
  const auto Wr_z = cmat(whh, 2 * H, H);        // rows [r; z]
  const auto Wn = cmat(whh, H, H, 2 * H * H);   // candidate rows
  const auto bhh = cmat(b_hh.node()->value, 1, 3 * H);

  // Input projections for all steps at once: (T*B, 3H).
  Mat<T> gx = cmat(x.node()->value, T_ * B, I) * cmat(wih, 3 * H, I).transpose();
  gx.rowwise() += cmat(b_ih.node()->value, 1, 3 * H).row(0);

  std::vector<T> hseq(T_ * B * H);
  // Saved gate activations, each (T, B, H).
  std::vector<T> rs(T_ * B * H), zs(T_ * B * H), ns(T_ * B * H);
  Mat<T> h = h0.defined() ? Mat<T>(cmat(h0.node()->value, B, H)) : Mat<T>::Zero(B, H);
  Mat<T> ghrz(B, 2 * H), rh(B, H), ghn(B, H);
  for (std::size_t t = 0; t < T_; ++t) {
    ghrz.noalias() = h * Wr_z.transpose();
    ghrz.rowwise() += bhh.leftCols(2 * H).row(0);
    const std::size_t base = t * B * H;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) {
        const T r = sigmoid_scalar(gx(t * B + b, j) + ghrz(b, j));
        const T z = sigmoid_scalar(gx(t * B + b, H + j) + ghrz(b, H + j));
        rs[base + b * H + j] = r;
        zs[base + b * H + j] = z;
        rh(b, j) = r * h(b, j);
      }
    }
    ghn.noalias() = rh * Wn.transpose();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < H; ++j) {
        const T n = std::tanh(gx(t * B + b, 2 * H + j) + ghn(b, j) + bhh(0, 2 * H + j));
        const T z = zs[base + b * H + j];
        ns[base + b * H + j] = n;
        const T hn = (T(1) - z) * h(b, j) + z * n;
        hseq[base + b * H + j] = hn;
      }
    }
    h = cmat(hseq, B, H, base);
  }

  Tensor<T> out = Tensor<T>::make_result({T_, B, H}, std::move(hseq), "gru",
                                         {x, w_ih, w_hh, b_ih, b_hh, h0});
  if (out.requires_grad()) {
    auto* o = out.node();
    auto* xn = x.node();
    auto* wihn = w_ih.node();
    auto* whhn = w_hh.node();
    auto* bihn = b_ih.node();
    auto* bhhn = b_hh.node();
    auto* h0n = h0.defined() ? h0.node() : nullptr;
    o->backward = [=, rs = std::move(rs), zs = std::move(zs), ns = std::move(ns)] {
      const auto& whh_v = whhn->value;
      const auto Wrz = cmat(whh_v, 2 * H, H);
      const auto Wcand = cmat(whh_v, H, H, 2 * H * H);
      Mat<T> dgx(T_ * B, 3 * H);
      Mat<T> dWhh = Mat<T>::Zero(3 * H, H);
      Mat<T> dbhh = Mat<T>::Zero(1, 3 * H);
      Mat<T> dh_next = Mat<T>::Zero(B, H);
      Mat<T> hprev(B, H), rh_t(B, H), dan(B, H), drz(B, 2 * H), drh(B, H), dh_prev(B, H);
      for (std::size_t tt = T_; tt-- > 0;) {
        const std::size_t base = tt * B * H;
        if (tt > 0) {
          hprev = cmat(o->value, B, H, (tt - 1) * B * H);
        } else if (h0n) {
          hprev = cmat(h0n->value, B, H);
        } else {
          hprev.setZero();
        }
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t j = 0; j < H; ++j) {
            const std::size_t k = base + b * H + j;
            const T dh = o->grad[k] + dh_next(b, j);
            const T z = zs[k], n = ns[k], r = rs[k];
            dan(b, j) = dh * z * (T(1) - n * n);
            drz(b, H + j) = dh * (n - hprev(b, j)) * z * (T(1) - z);
            dh_prev(b, j) = dh * (T(1) - z);
            rh_t(b, j) = r * hprev(b, j);
          }
        }
        drh.noalias() = dan * Wcand;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t j = 0; j < H; ++j) {
            const T r = rs[base + b * H + j];
            drz(b, j) = drh(b, j) * hprev(b, j) * r * (T(1) - r);
            dh_prev(b, j) += drh(b, j) * r;
          }
        }
        dWhh.bottomRows(H).noalias() += dan.transpose() * rh_t;
        dWhh.topRows(2 * H).noalias() += drz.transpose() * hprev;
        dbhh.leftCols(2 * H) += drz.colwise().sum();
        dbhh.rightCols(H) += dan.colwise().sum();
        dh_prev.noalias() += drz * Wrz;
        dgx.block(static_cast<Index>(tt * B), 0, static_cast<Index>(B), static_cast<Index>(2 * H)) = drz;
        dgx.block(static_cast<Index>(tt * B), static_cast<Index>(2 * H), static_cast<Index>(B),
                  static_cast<Index>(H)) = dan;
        dh_next = dh_prev;
      }
      if (whhn->requires_grad) mmat(whhn->ensure_grad(), 3 * H, H) += dWhh;
      if (bhhn->requires_grad) mmat(bhhn->ensure_grad(), 1, 3 * H) += dbhh;
      if (bihn->requires_grad) mmat(bihn->ensure_grad(), 1, 3 * H) += dgx.colwise().sum();
      if (wihn->requires_grad) {
        mmat(wihn->ensure_grad(), 3 * H, I).noalias() +=
            dgx.transpose() * cmat(xn->value, T_ * B, I);
      }
      if (xn->requires_grad) {
        mmat(xn->ensure_grad(), T_ * B, I).noalias() += dgx * cmat(wihn->value, 3 * H, I);
      }
      if (h0n && h0n->requires_grad) mmat(h0n->ensure_grad(), B, H) += dh_next;
    };
  }
  return out;
}

#define VIBKIT_INSTANTIATE(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> tanh(const Tensor<T>&);                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                 BatchNormStats<T>&, bool, T, T);                          \
  template Tensor<T> maxpool2d(const Tensor<T>&, int, int, int);                           \
  template Tensor<T> avgpool2d(const Tensor<T>&, int, int);                                \
  template Tensor<T> global_avgpool(const Tensor<T>&);                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
  template Tensor<T> flatten(const Tensor<T>&);                                            \
  template Tensor<T> swap01(const Tensor<T>&);                                             \
  template Tensor<T> select0(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                   \
  template std::vector<Tensor<T>> split(const Tensor<T>&, const std::vector<std::size_t>&, \
                                        std::size_t);                                      \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                        \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> gru(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                         const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

VIBKIT_INSTANTIATE(float)
VIBKIT_INSTANTIATE(double)

}  // namespace vibkit::ad
