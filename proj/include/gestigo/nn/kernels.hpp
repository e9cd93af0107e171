// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace gestigo::nn::kernels {

/// NCHW convolution with a square kernel, symmetric zero padding.
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  int out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  std::size_t patch() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

/// Row-major C[M,N] (+)= A[M,K] * B[K,N].
template <class T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
/// Row-major C[M,N] += A[M,K] * B[N,K]^T.
template <class T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c);
/// Row-major C[M,N] (+)= A[K,M]^T * B[K,N].
template <class T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// im2col + GEMM, OpenMP-parallel over the batch. `bias` may be null.
template <class T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

/// Accumulates into dx, dw, db; any of them may be null.
template <class T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db);

/// Direct nested-loop reference, single-threaded.
template <class T>
void conv2d_forward_reference(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

template <class T>
void conv2d_backward_reference(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                               T* dw, T* db);

}  // namespace gestigo::nn::kernels
