// SPDX-License-Identifier: Apache-2.0
#include "vqtimbre/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace vqt {

namespace {

using detail::make_result;
using detail::Node;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

// y = f(x) elementwise; dy/dx computed from (x, y).
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd f, Deriv d) {
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(y), {a}, [d](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& gx = in.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * d(in.data[i], self.data[i]);
    }
  });
}

void accumulate(Node& target, const std::vector<double>& g, double factor = 1.0) {
  if (!target.requires_grad) return;
  auto& gt = target.ensure_grad();
  for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += factor * g[i];
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(y), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(y), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(y), {a, b}, [](Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, logistic,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor log1p(const Tensor& a) {
  return unary("log1p", a, [](double x) { return std::log1p(x); },
               [](double x, double) { return 1.0 / (1.0 + x); });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a, stable_softplus,
               [](double x, double) { return logistic(x); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary("leaky_relu", a,
               [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double x) { return std::fabs(x); },
               [](double x, double) {
                 return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
               });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor stop_gradient(const Tensor& a) {
  auto out = Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  out.node()->op = "stop_gradient";
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = a.numel() ? 1.0 / static_cast<double>(a.numel()) : 0.0;
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("mean", {1}, {s * inv}, {a}, [inv](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (auto& v : g) v += self.grad[0] * inv;
  });
}

Tensor l1_norm(const Tensor& a) { return sum(abs(a)); }

Tensor squared_l2(const Tensor& a) { return sum(square(a)); }

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  const double norm = std::sqrt(s);
  return make_result("l2_norm", {1}, {norm}, {a}, [norm](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad || norm == 0.0) return;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[0] * in.data[i] / norm;
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  }
  std::vector<double> y(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(y), {a},
                     [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = a[i * c + j];
  return make_result("transpose", {c, r}, std::move(y), {a}, [r, c](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor row(const Tensor& a, std::size_t index) {
  require_rank("row", a, 2);
  const std::size_t c = a.dim(1);
  if (index >= a.dim(0)) {
    throw DimensionError("row: index " + std::to_string(index) +
                         " out of range for " + shape_str(a.shape()));
  }
  std::vector<double> y(a.data().begin() + index * c,
                        a.data().begin() + (index + 1) * c);
  return make_result("row", {c}, std::move(y), {a}, [index, c](Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t j = 0; j < c; ++j) g[index * c + j] += self.grad[j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t c = rows[0].numel();
  std::vector<double> y;
  y.reserve(rows.size() * c);
  std::vector<Tensor> inputs(rows.begin(), rows.end());
  for (const auto& r : rows) {
    if (r.numel() != c) {
      throw DimensionError("stack_rows: row " + shape_str(r.shape()) +
                           " vs " + shape_str(rows[0].shape()));
    }
    y.insert(y.end(), r.data().begin(), r.data().end());
  }
  return make_result("stack_rows", {rows.size(), c}, std::move(y),
                     std::move(inputs), [c](Node& self) {
                       for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                         auto& in = *self.inputs[i];
                         if (!in.requires_grad) continue;
                         auto& g = in.ensure_grad();
                         for (std::size_t j = 0; j < c; ++j)
                           g[j] += self.grad[i * c + j];
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  require_rank("gather_rows", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> y(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[i]) +
                           " out of range for " + shape_str(a.shape()));
    }
    std::copy_n(a.data().begin() + idx[i] * c, c, y.begin() + i * c);
  }
  return make_result("gather_rows", {idx.size(), c}, std::move(y), {a},
                     [idx, c](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[idx[i] * c + j] += self.grad[i * c + j];
                     });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t r = a.dim(0), ca = a.dim(1), cb = b.dim(1), c = ca + cb;
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().begin() + i * ca, ca, y.begin() + i * c);
    std::copy_n(b.data().begin() + i * cb, cb, y.begin() + i * c + ca);
  }
  return make_result("concat_cols", {r, c}, std::move(y), {a, b},
                     [r, ca, cb, c](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       for (std::size_t i = 0; i < r; ++i) {
                         if (na.requires_grad) {
                           auto& g = na.ensure_grad();
                           for (std::size_t j = 0; j < ca; ++j)
                             g[i * ca + j] += self.grad[i * c + j];
                         }
                         if (nb.requires_grad) {
                           auto& g = nb.ensure_grad();
                           for (std::size_t j = 0; j < cb; ++j)
                             g[i * cb + j] += self.grad[i * c + ca + j];
                         }
                       }
                     });
}

Tensor mul_rows(const Tensor& a, const Tensor& s) {
  require_rank("mul_rows", a, 2);
  if (s.numel() != a.dim(0)) {
    throw DimensionError("mul_rows: scales " + shape_str(s.shape()) +
                         " vs rows of " + shape_str(a.shape()));
  }
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = a[i * c + j] * s[i];
  return make_result("mul_rows", a.shape(), std::move(y), {a, s},
                     [r, c](Node& self) {
                       auto& na = *self.inputs[0];
                       auto& ns = *self.inputs[1];
                       if (na.requires_grad) {
                         auto& g = na.ensure_grad();
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             g[i * c + j] += self.grad[i * c + j] * ns.data[i];
                       }
                       if (ns.requires_grad) {
                         auto& g = ns.ensure_grad();
                         for (std::size_t i = 0; i < r; ++i) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < c; ++j)
                             acc += self.grad[i * c + j] * na.data[i * c + j];
                           g[i] += acc;
                         }
                       }
                     });
}

Tensor mean_last_axis(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("mean_last_axis: need rank >= 2, got " + shape_str(a.shape()));
  const std::size_t t = a.shape().back();
  const std::size_t outer = a.numel() / t;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> y(outer, 0.0);
  for (std::size_t i = 0; i < outer; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += a[i * t + j];
    y[i] = s / static_cast<double>(t);
  }
  return make_result("mean_last_axis", std::move(out_shape), std::move(y), {a},
                     [outer, t](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       const double inv = 1.0 / static_cast<double>(t);
                       for (std::size_t i = 0; i < outer; ++i)
                         for (std::size_t j = 0; j < t; ++j)
                           g[i * t + j] += self.grad[i] * inv;
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear", w, 2);
  const std::size_t out = w.dim(0), in = w.dim(1);
  const bool vec = x.rank() == 1;
  const std::size_t rows = vec ? 1 : x.dim(0);
  if ((vec ? x.dim(0) : (x.rank() == 2 ? x.dim(1) : 0)) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && b.numel() != out) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) +
                         " vs weight " + shape_str(w.shape()));
  }
  std::vector<double> y(rows * out);
  CMapMat X(x.data().data(), rows, in);
  CMapMat W(w.data().data(), out, in);
  MapMat Y(y.data(), rows, out);
  Y.noalias() = X * W.transpose();
  if (b.defined()) Y.rowwise() += CMapVec(b.data().data(), out).transpose();
  Shape shape = vec ? Shape{out} : Shape{rows, out};
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result("linear", std::move(shape), std::move(y), std::move(inputs),
                     [rows, in, out](Node& self) {
                       CMapMat G(self.grad.data(), rows, out);
                       auto& nx = *self.inputs[0];
                       auto& nw = *self.inputs[1];
                       if (nx.requires_grad) {
                         MapMat(nx.ensure_grad().data(), rows, in).noalias() +=
                             G * CMapMat(nw.data.data(), out, in);
                       }
                       if (nw.requires_grad) {
                         MapMat(nw.ensure_grad().data(), out, in).noalias() +=
                             G.transpose() * CMapMat(nx.data.data(), rows, in);
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         MapVec(self.inputs[2]->ensure_grad().data(), out) +=
                             G.colwise().sum().transpose();
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, t_in, c_out, k, stride, padding, t_out;
  bool batched;
};

// cols[(ci*k + j), b*t_out + t] = x[b, ci, t*stride + j - padding]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t width = g.batch * g.t_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t j = 0; j < g.k; ++j) {
      double* dst = cols + (ci * g.k + j) * width;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* src = x + (b * g.c_in + ci) * g.t_in;
        for (std::size_t t = 0; t < g.t_out; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride + j) -
                                     static_cast<std::ptrdiff_t>(g.padding);
          dst[b * g.t_out + t] =
              (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.t_in)) ? src[pos] : 0.0;
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* x) {
  const std::size_t width = g.batch * g.t_out;
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    for (std::size_t j = 0; j < g.k; ++j) {
      const double* src = cols + (ci * g.k + j) * width;
      for (std::size_t b = 0; b < g.batch; ++b) {
        double* dst = x + (b * g.c_in + ci) * g.t_in;
        for (std::size_t t = 0; t < g.t_out; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * g.stride + j) -
                                     static_cast<std::ptrdiff_t>(g.padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.t_in)) {
            dst[pos] += src[b * g.t_out + t];
          }
        }
      }
    }
  }
}

// [C x B*T] <-> [B x C x T]
void unfold_batch(const double* src, std::size_t c, std::size_t batch,
                  std::size_t t, double* dst) {
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(src + ch * batch * t + b * t, t, dst + (b * c + ch) * t);
}

void fold_batch(const double* src, std::size_t c, std::size_t batch,
                std::size_t t, double* dst) {
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(src + (b * c + ch) * t, t, dst + ch * batch * t + b * t);
}

ConvGeometry conv_geometry(const char* op, const Tensor& input,
                           const Tensor& kernels, std::size_t stride,
                           std::size_t padding) {
  if (kernels.rank() != 3) {
    throw DimensionError(std::string(op) + ": kernels must be [C_out x C_in x k], got " +
                         shape_str(kernels.shape()));
  }
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError(std::string(op) + ": input must be [C x T] or [B x C x T], got " +
                         shape_str(input.shape()));
  }
  if (stride == 0) throw DimensionError(std::string(op) + ": stride must be >= 1");
  ConvGeometry g{};
  g.batched = input.rank() == 3;
  g.batch = g.batched ? input.dim(0) : 1;
  g.c_out = kernels.dim(0);
  g.c_in = kernels.dim(1);
  g.k = kernels.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (g.k == 0) throw DimensionError(std::string(op) + ": kernel length must be >= 1");
  return g;
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  ConvGeometry g = conv_geometry("conv1d", input, kernels, stride, padding);
  const std::size_t c = input.dim(g.batched ? 1 : 0);
  g.t_in = input.shape().back();
  if (c != g.c_in) {
    throw DimensionError("conv1d: input " + shape_str(input.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  }
  if (g.t_in + 2 * padding < g.k) {
    throw DimensionError("conv1d: input " + shape_str(input.shape()) +
                         " shorter than kernel " + shape_str(kernels.shape()));
  }
  if (bias.defined() && bias.numel() != g.c_out) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  }
  g.t_out = (g.t_in + 2 * padding - g.k) / stride + 1;
  const std::size_t width = g.batch * g.t_out;
  const std::size_t depth = g.c_in * g.k;

  std::vector<double> cols(depth * width);
  im2col(input.data().data(), g, cols.data());
  std::vector<double> flat(g.c_out * width);
  MapMat(flat.data(), g.c_out, width).noalias() =
      CMapMat(kernels.data().data(), g.c_out, depth) * CMapMat(cols.data(), depth, width);
  if (bias.defined()) {
    MapMat(flat.data(), g.c_out, width).colwise() += CMapVec(bias.data().data(), g.c_out);
  }
  std::vector<double> y(flat.size());
  unfold_batch(flat.data(), g.c_out, g.batch, g.t_out, y.data());

  Shape shape = g.batched ? Shape{g.batch, g.c_out, g.t_out} : Shape{g.c_out, g.t_out};
  std::vector<Tensor> inputs{input, kernels};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv1d", std::move(shape), std::move(y), std::move(inputs),
                     [g, width, depth](Node& self) {
                       auto& nx = *self.inputs[0];
                       auto& nk = *self.inputs[1];
                       std::vector<double> gflat(g.c_out * width);
                       fold_batch(self.grad.data(), g.c_out, g.batch, g.t_out, gflat.data());
                       CMapMat G(gflat.data(), g.c_out, width);
                       if (nk.requires_grad) {
                         std::vector<double> cols(depth * width);
                         im2col(nx.data.data(), g, cols.data());
                         MapMat(nk.ensure_grad().data(), g.c_out, depth).noalias() +=
                             G * CMapMat(cols.data(), depth, width).transpose();
                       }
                       if (nx.requires_grad) {
                         std::vector<double> gcols(depth * width);
                         MapMat(gcols.data(), depth, width).noalias() =
                             CMapMat(nk.data.data(), g.c_out, depth).transpose() * G;
                         col2im(gcols.data(), g, nx.ensure_grad().data());
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         MapVec(self.inputs[2]->ensure_grad().data(), g.c_out) +=
                             G.rowwise().sum();
                       }
                     });
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding) {
  return conv1d(input, kernels, Tensor(), stride, padding);
}

Tensor transposed_conv1d(const Tensor& input, const Tensor& kernels,
                         std::size_t stride) {
  // Roles swap: `input` lives in conv1d's output space.
  ConvGeometry g = conv_geometry("transposed_conv1d", input, kernels, stride, 0);
  const std::size_t c = input.dim(g.batched ? 1 : 0);
  if (c != g.c_out) {
    throw DimensionError("transposed_conv1d: input " + shape_str(input.shape()) +
                         " vs kernels " + shape_str(kernels.shape()));
  }
  g.t_out = input.shape().back();
  if (g.t_out == 0) {
    throw DimensionError("transposed_conv1d: empty input " + shape_str(input.shape()));
  }
  g.t_in = (g.t_out - 1) * stride + g.k;
  const std::size_t width = g.batch * g.t_out;
  const std::size_t depth = g.c_in * g.k;

  std::vector<double> yflat(g.c_out * width);
  fold_batch(input.data().data(), g.c_out, g.batch, g.t_out, yflat.data());
  std::vector<double> cols(depth * width);
  MapMat(cols.data(), depth, width).noalias() =
      CMapMat(kernels.data().data(), g.c_out, depth).transpose() *
      CMapMat(yflat.data(), g.c_out, width);
  std::vector<double> out(g.batch * g.c_in * g.t_in, 0.0);
  col2im(cols.data(), g, out.data());

  Shape shape = g.batched ? Shape{g.batch, g.c_in, g.t_in} : Shape{g.c_in, g.t_in};
  return make_result("transposed_conv1d", std::move(shape), std::move(out),
                     {input, kernels}, [g, width, depth](Node& self) {
                       auto& ny = *self.inputs[0];
                       auto& nk = *self.inputs[1];
                       std::vector<double> gcols(depth * width);
                       im2col(self.grad.data(), g, gcols.data());
                       CMapMat GC(gcols.data(), depth, width);
                       if (ny.requires_grad) {
                         std::vector<double> gflat(g.c_out * width);
                         MapMat(gflat.data(), g.c_out, width).noalias() =
                             CMapMat(nk.data.data(), g.c_out, depth) * GC;
                         auto& gy = ny.ensure_grad();
                         std::vector<double> unfolded(gflat.size());
                         unfold_batch(gflat.data(), g.c_out, g.batch, g.t_out, unfolded.data());
                         for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += unfolded[i];
                       }
                       if (nk.requires_grad) {
                         std::vector<double> yflat(g.c_out * width);
                         fold_batch(ny.data.data(), g.c_out, g.batch, g.t_out, yflat.data());
                         MapMat(nk.ensure_grad().data(), g.c_out, depth).noalias() +=
                             CMapMat(yflat.data(), g.c_out, width) * GC.transpose();
                       }
                     });
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
  const std::size_t hid = p.hidden(), in = p.input();
  if (p.w_ih.rank() != 2 || p.w_ih.dim(0) != 3 * hid || p.w_hh.dim(0) != 3 * hid ||
      p.b_ih.numel() != 3 * hid || p.b_hh.numel() != 3 * hid) {
    throw DimensionError("gru_cell: inconsistent parameters w_ih " +
                         shape_str(p.w_ih.shape()) + ", w_hh " + shape_str(p.w_hh.shape()));
  }
  if (x.numel() != in || h.numel() != hid) {
    throw DimensionError("gru_cell: x " + shape_str(x.shape()) + ", h " +
                         shape_str(h.shape()) + " vs w_ih " + shape_str(p.w_ih.shape()));
  }
  // Pre-activations of the input and hidden projections.
  Eigen::VectorXd gi = CMapMat(p.w_ih.data().data(), 3 * hid, in) * CMapVec(x.data().data(), in) +
                       CMapVec(p.b_ih.data().data(), 3 * hid);
  Eigen::VectorXd gh = CMapMat(p.w_hh.data().data(), 3 * hid, hid) * CMapVec(h.data().data(), hid) +
                       CMapVec(p.b_hh.data().data(), 3 * hid);
  std::vector<double> r(hid), u(hid), n(hid), out(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    r[i] = logistic(gi[i] + gh[i]);
    u[i] = logistic(gi[hid + i] + gh[hid + i]);
    n[i] = std::tanh(gi[2 * hid + i] + r[i] * gh[2 * hid + i]);
    out[i] = (1.0 - u[i]) * n[i] + u[i] * h[i];
  }
  std::vector<double> hn(gh.data() + 2 * hid, gh.data() + 3 * hid);
  return make_result(
      "gru_cell", {hid}, std::move(out), {x, h, p.w_ih, p.w_hh, p.b_ih, p.b_hh},
      [hid, in, r = std::move(r), u = std::move(u), n = std::move(n),
       hn = std::move(hn)](Node& self) {
        auto& nx = *self.inputs[0];
        auto& nh = *self.inputs[1];
        Eigen::VectorXd dgi(3 * hid), dgh(3 * hid);
        std::vector<double> dh_direct(hid);
        for (std::size_t i = 0; i < hid; ++i) {
          const double go = self.grad[i];
          const double dn = go * (1.0 - u[i]) * (1.0 - n[i] * n[i]);
          const double du = go * (nh.data[i] - n[i]) * u[i] * (1.0 - u[i]);
          const double dr = dn * hn[i] * r[i] * (1.0 - r[i]);
          dgi[i] = dr;
          dgi[hid + i] = du;
          dgi[2 * hid + i] = dn;
          dgh[i] = dr;
          dgh[hid + i] = du;
          dgh[2 * hid + i] = dn * r[i];
          dh_direct[i] = go * u[i];
        }
        auto& nwi = *self.inputs[2];
        auto& nwh = *self.inputs[3];
        if (nx.requires_grad) {
          MapVec(nx.ensure_grad().data(), in) +=
              CMapMat(nwi.data.data(), 3 * hid, in).transpose() * dgi;
        }
        if (nh.requires_grad) {
          MapVec g(nh.ensure_grad().data(), hid);
          g += CMapMat(nwh.data.data(), 3 * hid, hid).transpose() * dgh;
          g += CMapVec(dh_direct.data(), hid);
        }
        if (nwi.requires_grad) {
          MapMat(nwi.ensure_grad().data(), 3 * hid, in).noalias() +=
              dgi * CMapVec(nx.data.data(), in).transpose();
        }
        if (nwh.requires_grad) {
          MapMat(nwh.ensure_grad().data(), 3 * hid, hid).noalias() +=
              dgh * CMapVec(nh.data.data(), hid).transpose();
        }
        if (self.inputs[4]->requires_grad)
          MapVec(self.inputs[4]->ensure_grad().data(), 3 * hid) += dgi;
        if (self.inputs[5]->requires_grad)
          MapVec(self.inputs[5]->ensure_grad().data(), 3 * hid) += dgh;
      });
}

Tensor gru_sequence(const Tensor& xs, Tensor& state, const GruParams& p) {
  require_rank("gru_sequence", xs, 2);
  const std::size_t steps = xs.dim(0);
  if (steps == 0) return Tensor::zeros({0, p.hidden()});
  std::vector<Tensor> outs;
  outs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    state = gru_cell(row(xs, t), state, p);
    outs.push_back(state);
  }
  return stack_rows(outs);
}

Tensor frame_signal(const Tensor& signal, std::span<const double> window,
                    std::size_t stride) {
  const std::size_t len = signal.numel(), l = window.size();
  if (l == 0 || stride == 0) throw DimensionError("frame_signal: empty window or zero stride");
  if (len < l) {
    throw DimensionError("frame_signal: signal of " + std::to_string(len) +
                         " samples is shorter than one window of " + std::to_string(l));
  }
  const std::size_t frames = (len - l) / stride + 1;
  std::vector<double> w(window.begin(), window.end());
  std::vector<double> y(frames * l);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < l; ++i) y[t * l + i] = signal[t * stride + i] * w[i];
  return make_result("frame_signal", {frames, l}, std::move(y), {signal},
                     [w = std::move(w), frames, stride](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       const std::size_t l = w.size();
                       for (std::size_t t = 0; t < frames; ++t)
                         for (std::size_t i = 0; i < l; ++i)
                           g[t * stride + i] += self.grad[t * l + i] * w[i];
                     });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank("softmax_rows", logits, 2);
  const std::size_t r = logits.dim(0), c = logits.dim(1);
  std::vector<double> p(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = logits[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (p[i * c + j] = std::exp(logits[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= z;
  }
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t r = logits.dim(0), c = logits.dim(1);
  if (labels.size() != r) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  auto p = softmax_rows(logits);
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= c) {
      throw DimensionError("softmax_cross_entropy: label " + std::to_string(lab[i]) +
                           " outside " + std::to_string(c) + " classes");
    }
    loss -= std::log(std::max(p[i * c + lab[i]], 1e-300));
  }
  loss /= static_cast<double>(r);
  return make_result("softmax_cross_entropy", {1}, {loss}, {logits},
                     [p = std::move(p), lab = std::move(lab), r, c](Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       const double s = self.grad[0] / static_cast<double>(r);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += s * (p[i * c + j] - (static_cast<int>(j) == lab[i] ? 1.0 : 0.0));
                     });
}

}  // namespace vqt
