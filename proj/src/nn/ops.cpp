// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/nn/kernels.hpp"

namespace gestigo::nn {

namespace {

template <class T>
using NodeP = std::shared_ptr<Node<T>>;

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw ArgumentError(fmt::format("{}: undefined tensor", op));
  if (t.rank() != rank)
    throw ShapeError(fmt::format("{}: expected rank {}, got shape {}", op, rank,
                                 shape_string(t.shape())));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", op, shape_string(a.shape()),
                                 shape_string(b.shape())));
}

template <class T>
Tensor<T> finish(Tensor<T> out, const char* op) {
  check_finite<T>(out.data(), op);
  return out;
}

int pool_start(int i, int in, int out) { return (i * in) / out; }
int pool_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  Node<T>* pa = a.node();
  Node<T>* pb = b.node();
  auto out = detail::make_result<T>(a.shape(), "add", {a.node_ptr(), b.node_ptr()},
                                    [pa, pb](Node<T>& self) {
                                      for (Node<T>* p : {pa, pb}) {
                                        if (!p->requires_grad) continue;
                                        auto& g = p->ensure_grad();
                                        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                      }
                                    });
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = pa->data[i] + pb->data[i];
  return finish(out, "add");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  Node<T>* pa = a.node();
  Node<T>* pb = b.node();
  auto out = detail::make_result<T>(a.shape(), "mul", {a.node_ptr(), b.node_ptr()},
                                    [pa, pb](Node<T>& self) {
                                      if (pa->requires_grad) {
                                        auto& g = pa->ensure_grad();
                                        for (std::size_t i = 0; i < g.size(); ++i)
                                          g[i] += self.grad[i] * pb->data[i];
                                      }
                                      if (pb->requires_grad) {
                                        auto& g = pb->ensure_grad();
                                        for (std::size_t i = 0; i < g.size(); ++i)
                                          g[i] += self.grad[i] * pa->data[i];
                                      }
                                    });
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = pa->data[i] * pb->data[i];
  return finish(out, "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Node<T>* pa = a.node();
  auto out = detail::make_result<T>(a.shape(), "scale", {a.node_ptr()},
                                    [pa, factor](Node<T>& self) {
                                      auto& g = pa->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                        g[i] += self.grad[i] * factor;
                                    });
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = pa->data[i] * factor;
  return finish(out, "scale");
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  Node<T>* pa = a.node();
  auto out = detail::make_result<T>({1}, "sum", {a.node_ptr()}, [pa](Node<T>& self) {
    auto& g = pa->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
  double s = 0.0;
  for (T v : pa->data) s += v;
  out.data()[0] = static_cast<T>(s);
  return finish(out, "sum");
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(a.numel())));
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  Node<T>* pa = a.node();
  auto out = detail::make_result<T>(a.shape(), "relu", {a.node_ptr()}, [pa](Node<T>& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (pa->data[i] > T(0)) g[i] += self.grad[i];
  });
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = pa->data[i] > T(0) ? pa->data[i] : T(0);
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError(fmt::format("reshape: {} to {}", shape_string(a.shape()), shape_string(shape)));
  Node<T>* pa = a.node();
  auto out = detail::make_result<T>(shape, "reshape", {a.node_ptr()}, [pa](Node<T>& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
  std::copy(pa->data.begin(), pa->data.end(), out.data().begin());
  return out;
}

template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError(fmt::format("flatten: shape {}", shape_string(a.shape())));
  return reshape(a, {a.dim(0), static_cast<int>(a.numel() / static_cast<std::size_t>(a.dim(0)))});
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() < 2) throw ShapeError(fmt::format("concat: shape {}", shape_string(s0)));
  Shape shape = s0;
  shape[1] = 0;
  std::vector<std::size_t> widths;
  std::vector<NodeP<T>> nodes;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = s0;
    a[1] = b[1] = 0;
    if (a != b)
      throw ShapeError(fmt::format("concat: shapes {} and {} differ outside axis 1",
                                   shape_string(s0), shape_string(p.shape())));
    shape[1] += p.dim(1);
    widths.push_back(p.numel() / static_cast<std::size_t>(p.dim(0)));
    nodes.push_back(p.node_ptr());
  }
  const auto batch = static_cast<std::size_t>(s0[0]);
  std::size_t row = 0;
  for (auto w : widths) row += w;
  std::vector<Node<T>*> raw;
  for (auto& n : nodes) raw.push_back(n.get());
  auto out = detail::make_result<T>(shape, "concat", nodes, [raw, widths, batch, row](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (raw[k]->requires_grad) {
        auto& g = raw[k]->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < widths[k]; ++i) g[b * widths[k] + i] += self.grad[b * row + off + i];
      }
      off += widths[k];
    }
  });
  auto y = out.data();
  std::size_t off = 0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(raw[k]->data.begin() + static_cast<std::ptrdiff_t>(b * widths[k]), widths[k],
                  y.begin() + static_cast<std::ptrdiff_t>(b * row + off));
    off += widths[k];
  }
  return out;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding, Exec exec) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3))
    throw ShapeError(fmt::format("conv2d: input {} incompatible with weight {}",
                                 shape_string(x.shape()), shape_string(w.shape())));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
    throw ShapeError(fmt::format("conv2d: bias {} for weight {}", shape_string(b.shape()),
                                 shape_string(w.shape())));
  if (stride <= 0 || padding < 0) throw ArgumentError("conv2d: bad stride or padding");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (g.in_h + 2 * padding < g.kernel || g.in_w + 2 * padding < g.kernel)
    throw ShapeError(fmt::format("conv2d: input {} smaller than kernel {}",
                                 shape_string(x.shape()), g.kernel));
  Node<T>* px = x.node();
  Node<T>* pw = w.node();
  Node<T>* pb = b.defined() ? b.node() : nullptr;
  std::vector<NodeP<T>> parents{x.node_ptr(), w.node_ptr()};
  if (pb) parents.push_back(b.node_ptr());
  auto out = detail::make_result<T>(
      {g.batch, g.out_channels, g.out_h(), g.out_w()}, "conv2d", parents,
      [g, px, pw, pb, exec](Node<T>& self) {
        T* dx = px->requires_grad ? px->ensure_grad().data() : nullptr;
        T* dw = pw->requires_grad ? pw->ensure_grad().data() : nullptr;
        T* db = (pb && pb->requires_grad) ? pb->ensure_grad().data() : nullptr;
        if (exec == Exec::kParallel)
          kernels::conv2d_backward(g, px->data.data(), pw->data.data(), self.grad.data(), dx, dw, db);
        else
          kernels::conv2d_backward_reference(g, px->data.data(), pw->data.data(), self.grad.data(),
                                             dx, dw, db);
      });
  const T* bias = pb ? pb->data.data() : nullptr;
  if (exec == Exec::kParallel)
    kernels::conv2d_forward(g, px->data.data(), pw->data.data(), bias, out.data().data());
  else
    kernels::conv2d_forward_reference(g, px->data.data(), pw->data.data(), bias, out.data().data());
  return finish(out, "conv2d");
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride) {
  require_rank(x, 4, "max_pool2d");
  if (kernel <= 0 || stride <= 0) throw ArgumentError("max_pool2d: bad kernel or stride");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < kernel || W < kernel)
    throw ShapeError(fmt::format("max_pool2d: input {} smaller than kernel {}",
                                 shape_string(x.shape()), kernel));
  const int oh = (H - kernel) / stride + 1;
  const int ow = (W - kernel) / stride + 1;
  auto argmax = std::make_shared<std::vector<std::size_t>>(
      static_cast<std::size_t>(B) * C * oh * ow);
  Node<T>* px = x.node();
  auto out = detail::make_result<T>({B, C, oh, ow}, "max_pool2d", {x.node_ptr()},
                                    [px, argmax](Node<T>& self) {
                                      auto& g = px->ensure_grad();
                                      for (std::size_t i = 0; i < argmax->size(); ++i)
                                        g[(*argmax)[i]] += self.grad[i];
                                    });
  auto y = out.data();
  std::size_t o = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const std::size_t base = static_cast<std::size_t>(bc) * H * W;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * stride) * W + ox * stride;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const std::size_t i = base + static_cast<std::size_t>(oy * stride + ky) * W + ox * stride + kx;
            if (px->data[i] > px->data[best]) best = i;
          }
        (*argmax)[o] = best;
        y[o] = px->data[best];
      }
  }
  return out;
}

template <class T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int out_h, int out_w) {
  require_rank(x, 4, "adaptive_avg_pool2d");
  if (out_h <= 0 || out_w <= 0) throw ArgumentError("adaptive_avg_pool2d: bad output size");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Node<T>* px = x.node();
  auto out = detail::make_result<T>(
      {B, C, out_h, out_w}, "adaptive_avg_pool2d", {x.node_ptr()},
      [px, B, C, H, W, out_h, out_w](Node<T>& self) {
        auto& g = px->ensure_grad();
        std::size_t o = 0;
        for (int bc = 0; bc < B * C; ++bc)
          for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j, ++o) {
              const int y0 = pool_start(i, H, out_h), y1 = pool_end(i, H, out_h);
              const int x0 = pool_start(j, W, out_w), x1 = pool_end(j, W, out_w);
              const T d = self.grad[o] / static_cast<T>((y1 - y0) * (x1 - x0));
              for (int yy = y0; yy < y1; ++yy)
                for (int xx = x0; xx < x1; ++xx)
                  g[static_cast<std::size_t>(bc) * H * W + static_cast<std::size_t>(yy) * W + xx] += d;
            }
      });
  auto y = out.data();
  std::size_t o = 0;
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j, ++o) {
        const int y0 = pool_start(i, H, out_h), y1 = pool_end(i, H, out_h);
        const int x0 = pool_start(j, W, out_w), x1 = pool_end(j, W, out_w);
        double s = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx)
            s += px->data[static_cast<std::size_t>(bc) * H * W + static_cast<std::size_t>(yy) * W + xx];
        y[o] = static_cast<T>(s / ((y1 - y0) * (x1 - x0)));
      }
  return out;
}

template <class T>
Tensor<T> adaptive_max_pool2d(const Tensor<T>& x, int out_h, int out_w) {
  require_rank(x, 4, "adaptive_max_pool2d");
  if (out_h <= 0 || out_w <= 0) throw ArgumentError("adaptive_max_pool2d: bad output size");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto argmax = std::make_shared<std::vector<std::size_t>>(
      static_cast<std::size_t>(B) * C * out_h * out_w);
  Node<T>* px = x.node();
  auto out = detail::make_result<T>({B, C, out_h, out_w}, "adaptive_max_pool2d", {x.node_ptr()},
                                    [px, argmax](Node<T>& self) {
                                      auto& g = px->ensure_grad();
                                      for (std::size_t i = 0; i < argmax->size(); ++i)
                                        g[(*argmax)[i]] += self.grad[i];
                                    });
  auto y = out.data();
  std::size_t o = 0;
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j, ++o) {
        const int y0 = pool_start(i, H, out_h), y1 = pool_end(i, H, out_h);
        const int x0 = pool_start(j, W, out_w), x1 = pool_end(j, W, out_w);
        std::size_t best = static_cast<std::size_t>(bc) * H * W + static_cast<std::size_t>(y0) * W + x0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) {
            const std::size_t k = static_cast<std::size_t>(bc) * H * W + static_cast<std::size_t>(yy) * W + xx;
            if (px->data[k] > px->data[best]) best = k;
          }
        (*argmax)[o] = best;
        y[o] = px->data[best];
      }
  return out;
}

template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps) {
  if (!x.defined() || (x.rank() != 2 && x.rank() != 4))
    throw ShapeError(fmt::format("batch_norm: expected [B,F] or [B,C,H,W], got {}",
                                 x.defined() ? shape_string(x.shape()) : "undefined"));
  const int B = x.dim(0);
  const int C = x.dim(1);
  const std::size_t inner = x.rank() == 4 ? static_cast<std::size_t>(x.dim(2)) * x.dim(3) : 1;
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var})
    if (t->rank() != 1 || t->dim(0) != C)
      throw ShapeError(fmt::format("batch_norm: parameter {} for input {}",
                                   shape_string(t->shape()), shape_string(x.shape())));
  const std::size_t count = static_cast<std::size_t>(B) * inner;
  if (training && count < 2)
    throw ShapeError(fmt::format("batch_norm: training needs more than one value per channel, got {}",
                                 shape_string(x.shape())));

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  const auto at = [C, inner](int b, int c, std::size_t i) {
    return (static_cast<std::size_t>(b) * C + c) * inner + i;
  };
  for (int c = 0; c < C; ++c) {
    double mu = 0.0;
    double var = 0.0;
    if (training) {
      for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) mu += x.data()[at(b, c, i)];
      mu /= static_cast<double>(count);
      for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = x.data()[at(b, c, i)] - mu;
          var += d * d;
        }
      var /= static_cast<double>(count);
      auto& rm = running_mean.storage()[static_cast<std::size_t>(c)];
      auto& rv = running_var.storage()[static_cast<std::size_t>(c)];
      const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * mu);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * unbiased);
    } else {
      mu = running_mean.data()[static_cast<std::size_t>(c)];
      var = running_var.data()[static_cast<std::size_t>(c)];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(c)] = static_cast<T>(is);
    for (int b = 0; b < B; ++b)
      for (std::size_t i = 0; i < inner; ++i)
        (*xhat)[at(b, c, i)] = static_cast<T>((x.data()[at(b, c, i)] - mu) * is);
  }

  Node<T>* px = x.node();
  Node<T>* pg = gamma.node();
  Node<T>* pb = beta.node();
  auto out = detail::make_result<T>(
      x.shape(), "batch_norm", {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [px, pg, pb, xhat, invstd, training, B, C, inner, count, at](Node<T>& self) {
        const auto& dy = self.grad;
        for (int c = 0; c < C; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (int b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = at(b, c, i);
              sum_dy += dy[k];
              sum_dy_xhat += dy[k] * (*xhat)[k];
            }
          if (pg->requires_grad) pg->ensure_grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
          if (pb->requires_grad) pb->ensure_grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
          if (!px->requires_grad) continue;
          auto& dx = px->ensure_grad();
          const double g = pg->data[static_cast<std::size_t>(c)];
          const double is = (*invstd)[static_cast<std::size_t>(c)];
          const double m = static_cast<double>(count);
          for (int b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = at(b, c, i);
              if (training)
                dx[k] += static_cast<T>(g * is / m *
                                        (m * dy[k] - sum_dy - (*xhat)[k] * sum_dy_xhat));
              else
                dx[k] += static_cast<T>(g * is * dy[k]);
            }
        }
      });
  auto y = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = at(b, c, i);
        y[k] = gamma.data()[static_cast<std::size_t>(c)] * (*xhat)[k] + beta.data()[static_cast<std::size_t>(c)];
      }
  return finish(out, "batch_norm");
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ArgumentError(fmt::format("dropout: p={} outside [0,1)", p));
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : *mask) m = rng.uniform() >= p ? keep_scale : T(0);
  Node<T>* px = x.node();
  auto out = detail::make_result<T>(x.shape(), "dropout", {x.node_ptr()}, [px, mask](Node<T>& self) {
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = px->data[i] * (*mask)[i];
  return out;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear weight");
  if (x.dim(1) != w.dim(1))
    throw ShapeError(fmt::format("linear: input {} incompatible with weight {}",
                                 shape_string(x.shape()), shape_string(w.shape())));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
    throw ShapeError(fmt::format("linear: bias {} for weight {}", shape_string(b.shape()),
                                 shape_string(w.shape())));
  const int B = x.dim(0), I = x.dim(1), O = w.dim(0);
  Node<T>* px = x.node();
  Node<T>* pw = w.node();
  Node<T>* pb = b.defined() ? b.node() : nullptr;
  std::vector<NodeP<T>> parents{x.node_ptr(), w.node_ptr()};
  if (pb) parents.push_back(b.node_ptr());
  auto out = detail::make_result<T>({B, O}, "linear", parents, [px, pw, pb, B, I, O](Node<T>& self) {
    if (px->requires_grad)
      kernels::gemm_nn(B, I, O, self.grad.data(), pw->data.data(), px->ensure_grad().data(), true);
    if (pw->requires_grad)
      kernels::gemm_tn(O, I, B, self.grad.data(), px->data.data(), pw->ensure_grad().data(), true);
    if (pb && pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (int n = 0; n < B; ++n)
        for (int o = 0; o < O; ++o) g[static_cast<std::size_t>(o)] += self.grad[static_cast<std::size_t>(n) * O + o];
    }
  });
  auto y = out.data();
  kernels::gemm_nt_acc(B, O, I, px->data.data(), pw->data.data(), y.data());
  if (pb)
    for (int n = 0; n < B; ++n)
      for (int o = 0; o < O; ++o) y[static_cast<std::size_t>(n) * O + o] += pb->data[static_cast<std::size_t>(o)];
  return finish(out, "linear");
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits, 2, "softmax");
  const int B = logits.dim(0), N = logits.dim(1);
  Node<T>* px = logits.node();
  auto out = detail::make_result<T>(logits.shape(), "softmax", {logits.node_ptr()},
                                    [px, B, N](Node<T>& self) {
                                      auto& g = px->ensure_grad();
                                      for (int b = 0; b < B; ++b) {
                                        const std::size_t r = static_cast<std::size_t>(b) * N;
                                        double dot = 0.0;
                                        for (int i = 0; i < N; ++i) dot += self.grad[r + i] * self.data[r + i];
                                        for (int i = 0; i < N; ++i)
                                          g[r + i] += static_cast<T>(self.data[r + i] * (self.grad[r + i] - dot));
                                      }
                                    });
  auto y = out.data();
  for (int b = 0; b < B; ++b) {
    const std::size_t r = static_cast<std::size_t>(b) * N;
    T m = px->data[r];
    for (int i = 1; i < N; ++i) m = std::max(m, px->data[r + i]);
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += std::exp(static_cast<double>(px->data[r + i] - m));
    for (int i = 0; i < N; ++i) y[r + i] = static_cast<T>(std::exp(static_cast<double>(px->data[r + i] - m)) / s);
  }
  return finish(out, "softmax");
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const int B = logits.dim(0), N = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(B))
    throw ShapeError(fmt::format("cross_entropy: {} labels for logits {}", labels.size(),
                                 shape_string(logits.shape())));
  for (int l : labels)
    if (l < 0 || l >= N) throw ArgumentError(fmt::format("cross_entropy: label {} outside [0,{})", l, N));
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  const std::vector<int> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const std::size_t r = static_cast<std::size_t>(b) * N;
    double m = logits.data()[r];
    for (int i = 1; i < N; ++i) m = std::max(m, static_cast<double>(logits.data()[r + i]));
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += std::exp(logits.data()[r + i] - m);
    const double lse = m + std::log(s);
    for (int i = 0; i < N; ++i) (*probs)[r + i] = std::exp(logits.data()[r + i] - lse);
    total += lse - logits.data()[r + static_cast<std::size_t>(lab[static_cast<std::size_t>(b)])];
  }
  Node<T>* px = logits.node();
  auto out = detail::make_result<T>({1}, "cross_entropy", {logits.node_ptr()},
                                    [px, probs, lab, B, N](Node<T>& self) {
                                      auto& g = px->ensure_grad();
                                      const double scale_g = self.grad[0] / B;
                                      for (int b = 0; b < B; ++b) {
                                        const std::size_t r = static_cast<std::size_t>(b) * N;
                                        for (int i = 0; i < N; ++i) {
                                          const double onehot = i == lab[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
                                          g[r + i] += static_cast<T>(scale_g * ((*probs)[r + i] - onehot));
                                        }
                                      }
                                    });
  out.data()[0] = static_cast<T>(total / B);
  return finish(out, "cross_entropy");
}

template <class T>
Tensor<T> homoscedastic_loss(const std::vector<Tensor<T>>& losses, const Tensor<T>& s) {
  if (losses.empty()) throw ArgumentError("homoscedastic_loss: no losses");
  if (s.rank() != 1 || static_cast<std::size_t>(s.dim(0)) != losses.size())
    throw ShapeError(fmt::format("homoscedastic_loss: {} losses but s has shape {}", losses.size(),
                                 shape_string(s.shape())));
  std::vector<NodeP<T>> parents{s.node_ptr()};
  std::vector<Node<T>*> raw;
  for (const auto& l : losses) {
    if (l.numel() != 1)
      throw ShapeError(fmt::format("homoscedastic_loss: loss of shape {}", shape_string(l.shape())));
    check_finite<T>(l.data(), "homoscedastic_loss input");
    parents.push_back(l.node_ptr());
    raw.push_back(l.node());
  }
  Node<T>* ps = s.node();
  auto out = detail::make_result<T>({1}, "homoscedastic_loss", parents, [ps, raw](Node<T>& self) {
    const double g = self.grad[0];
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const double w = std::exp(-static_cast<double>(ps->data[k]));
      if (raw[k]->requires_grad) raw[k]->ensure_grad()[0] += static_cast<T>(g * w);
      if (ps->requires_grad) ps->ensure_grad()[k] += static_cast<T>(g * (1.0 - w * raw[k]->data[0]));
    }
  });
  double total = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k)
    total += std::exp(-static_cast<double>(ps->data[k])) * raw[k]->data[0] + ps->data[k];
  out.data()[0] = static_cast<T>(total);
  return finish(out, "homoscedastic_loss");
}

std::vector<int> split_bounds(int total, int parts) {
  if (parts <= 0 || total < parts)
    throw ArgumentError(fmt::format("cannot split {} pixels into {} parts", total, parts));
  std::vector<int> bounds(static_cast<std::size_t>(parts) + 1);
  const int step = total / parts;
  for (int i = 0; i < parts; ++i) bounds[static_cast<std::size_t>(i)] = i * step;
  bounds.back() = total;
  return bounds;
}

template <class T>
Tensor<T> probs_to_pseudo(const std::vector<Tensor<T>>& probs, int size) {
  if (probs.empty()) throw ArgumentError("probs_to_pseudo: no streams");
  require_rank(probs[0], 2, "probs_to_pseudo");
  const int B = probs[0].dim(0), N = probs[0].dim(1);
  const int J = static_cast<int>(probs.size());
  for (const auto& p : probs) require_same(p, probs[0], "probs_to_pseudo");
  const auto rows = split_bounds(size, J);
  const auto cols = split_bounds(size, N);
  std::vector<NodeP<T>> parents;
  std::vector<Node<T>*> raw;
  for (const auto& p : probs) {
    parents.push_back(p.node_ptr());
    raw.push_back(p.node());
  }
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  auto out = detail::make_result<T>(
      {B, 3, size, size}, "probs_to_pseudo", parents, [raw, rows, cols, B, N, J, size, plane](Node<T>& self) {
        for (int j = 0; j < J; ++j) {
          if (!raw[static_cast<std::size_t>(j)]->requires_grad) continue;
          auto& g = raw[static_cast<std::size_t>(j)]->ensure_grad();
          for (int b = 0; b < B; ++b)
            for (int n = 0; n < N; ++n) {
              double acc = 0.0;
              for (int ch = 0; ch < 3; ++ch)
                for (int y = rows[static_cast<std::size_t>(j)]; y < rows[static_cast<std::size_t>(j) + 1]; ++y) {
                  const std::size_t base = (static_cast<std::size_t>(b) * 3 + ch) * plane + static_cast<std::size_t>(y) * size;
                  for (int x = cols[static_cast<std::size_t>(n)]; x < cols[static_cast<std::size_t>(n) + 1]; ++x)
                    acc += self.grad[base + static_cast<std::size_t>(x)];
                }
              g[static_cast<std::size_t>(b) * N + n] += static_cast<T>(acc);
            }
        }
      });
  auto y = out.data();
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < J; ++j)
      for (int n = 0; n < N; ++n) {
        const T v = raw[static_cast<std::size_t>(j)]->data[static_cast<std::size_t>(b) * N + n];
        for (int ch = 0; ch < 3; ++ch)
          for (int yy = rows[static_cast<std::size_t>(j)]; yy < rows[static_cast<std::size_t>(j) + 1]; ++yy) {
            const std::size_t base = (static_cast<std::size_t>(b) * 3 + ch) * plane + static_cast<std::size_t>(yy) * size;
            for (int x = cols[static_cast<std::size_t>(n)]; x < cols[static_cast<std::size_t>(n) + 1]; ++x)
              y[base + static_cast<std::size_t>(x)] = v;
          }
      }
  return out;
}

#define GESTIGO_OPS(T)                                                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                    \
  template Tensor<T> flatten(const Tensor<T>&);                                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,      \
                            Exec);                                                               \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int);                                     \
  template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, int, int);                            \
  template Tensor<T> adaptive_max_pool2d(const Tensor<T>&, int, int);                            \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                Tensor<T>&, Tensor<T>&, bool, double, double);                   \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> homoscedastic_loss(const std::vector<Tensor<T>>&, const Tensor<T>&);        \
  template Tensor<T> probs_to_pseudo(const std::vector<Tensor<T>>&, int);

GESTIGO_OPS(float)
GESTIGO_OPS(double)

#undef GESTIGO_OPS

}  // namespace gestigo::nn
