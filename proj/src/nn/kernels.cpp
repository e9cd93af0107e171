// SPDX-License-Identifier: Apache-2.0
#include "gestigo/nn/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gestigo::nn::kernels {

namespace {

constexpr int kBlockN = 512;
constexpr int kBlockK = 128;

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          T* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            out[ox] = (ix >= 0 && ix < g.in_w) ? xrow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_acc(const ConvGeometry& g, const T* col, T* dx) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    T* dxc = dx + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dxrow = dxc + static_cast<std::size_t>(iy) * g.in_w;
          const T* in = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.in_w) dxrow[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
  for (int j0 = 0; j0 < n; j0 += kBlockN) {
    const int j1 = std::min(n, j0 + kBlockN);
    for (int k0 = 0; k0 < k; k0 += kBlockK) {
      const int k1 = std::min(k, k0 + kBlockK);
      for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int kk = k0; kk < k1; ++kk) {
          const T aik = arow[kk];
          const T* brow = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
          for (int j = j0; j < j1; ++j) crow[j] += aik * brow[j];
        }
      }
    }
  }
}

template <class T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T s = T(0);
#pragma omp simd reduction(+ : s)
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      c[static_cast<std::size_t>(i) * n + j] += s;
    }
  }
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
  for (int j0 = 0; j0 < n; j0 += kBlockN) {
    const int j1 = std::min(n, j0 + kBlockN);
    for (int i = 0; i < m; ++i) {
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const T aki = a[static_cast<std::size_t>(kk) * m + i];
        const T* brow = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
        for (int j = j0; j < j1; ++j) crow[j] += aki * brow[j];
      }
    }
  }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_size = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_size = static_cast<std::size_t>(g.out_channels) * plane;
  const bool direct = g.kernel == 1 && g.stride == 1 && g.padding == 0;
#pragma omp parallel
  {
    std::vector<T> col(direct ? 0 : g.patch() * plane);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      const T* xn = x + n * in_size;
      T* yn = y + n * out_size;
      if (!direct) im2col(g, xn, col.data());
      gemm_nn(g.out_channels, static_cast<int>(plane), static_cast<int>(g.patch()), w,
              direct ? xn : col.data(), yn, false);
      if (bias)
        for (int o = 0; o < g.out_channels; ++o) {
          T* row = yn + o * plane;
          for (std::size_t i = 0; i < plane; ++i) row[i] += bias[o];
        }
    }
  }
}

template <class T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_size = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_size = static_cast<std::size_t>(g.out_channels) * plane;
  const std::size_t wsize = static_cast<std::size_t>(g.out_channels) * g.patch();
  const bool direct = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  const int threads = thread_count();
  std::vector<std::vector<T>> dw_part(static_cast<std::size_t>(threads));
  std::vector<std::vector<T>> db_part(static_cast<std::size_t>(threads));
#pragma omp parallel
  {
    const auto tid = static_cast<std::size_t>(thread_id());
    std::vector<T> col(g.patch() * plane);
    if (dw) dw_part[tid].assign(wsize, T(0));
    if (db) db_part[tid].assign(static_cast<std::size_t>(g.out_channels), T(0));
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      const T* xn = x + n * in_size;
      const T* dyn = dy + n * out_size;
      if (dw) {
        const T* cols = xn;
        if (!direct) {
          im2col(g, xn, col.data());
          cols = col.data();
        }
        gemm_nt_acc(g.out_channels, static_cast<int>(g.patch()), static_cast<int>(plane), dyn,
                    cols, dw_part[tid].data());
      }
      if (db)
        for (int o = 0; o < g.out_channels; ++o) {
          const T* row = dyn + o * plane;
          T s = T(0);
          for (std::size_t i = 0; i < plane; ++i) s += row[i];
          db_part[tid][static_cast<std::size_t>(o)] += s;
        }
      if (dx) {
        T* dxn = dx + n * in_size;
        if (direct) {
          gemm_tn(static_cast<int>(g.patch()), static_cast<int>(plane), g.out_channels, w, dyn,
                  dxn, true);
        } else {
          gemm_tn(static_cast<int>(g.patch()), static_cast<int>(plane), g.out_channels, w, dyn,
                  col.data(), false);
          col2im_acc(g, col.data(), dxn);
        }
      }
    }
  }
  for (int t = 0; t < threads; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    if (dw && !dw_part[ti].empty())
      for (std::size_t i = 0; i < wsize; ++i) dw[i] += dw_part[ti][i];
    if (db && !db_part[ti].empty())
      for (int o = 0; o < g.out_channels; ++o) db[o] += db_part[ti][static_cast<std::size_t>(o)];
  }
}

template <class T>
void conv2d_forward_reference(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T s = bias ? bias[o] : T(0);
          for (int c = 0; c < g.in_channels; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int iy = oy * g.stride - g.padding + ki;
                const int ix = ox * g.stride - g.padding + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                s += w[((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj] *
                     x[((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          y[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + oy) * ow + ox] = s;
        }
}

template <class T>
void conv2d_backward_reference(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                               T* dw, T* db) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T d = dy[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + oy) * ow + ox];
          if (db) db[o] += d;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int iy = oy * g.stride - g.padding + ki;
                const int ix = ox * g.stride - g.padding + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const std::size_t wi = ((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj;
                const std::size_t xi =
                    ((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix;
                if (dw) dw[wi] += d * x[xi];
                if (dx) dx[xi] += d * w[wi];
              }
        }
}

#define GESTIGO_KERNELS(T)                                                                      \
  template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                        \
  template void gemm_nt_acc<T>(int, int, int, const T*, const T*, T*);                          \
  template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);                        \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);       \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*,   \
                                   T*);                                                         \
  template void conv2d_forward_reference<T>(const ConvGeometry&, const T*, const T*, const T*,  \
                                            T*);                                                \
  template void conv2d_backward_reference<T>(const ConvGeometry&, const T*, const T*, const T*, \
                                             T*, T*, T*);

GESTIGO_KERNELS(float)
GESTIGO_KERNELS(double)

#undef GESTIGO_KERNELS

}  // namespace gestigo::nn::kernels
