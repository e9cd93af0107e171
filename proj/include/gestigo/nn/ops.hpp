// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "gestigo/nn/tensor.hpp"
#include "gestigo/rng.hpp"

namespace gestigo::nn {

/// Which convolution kernel runs: OpenMP im2col+GEMM or the serial direct loop.
enum class Exec { kParallel, kSerial };

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// Sum of all elements, shape [1].
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);
/// [B, ...] -> [B, rest].
template <class T> Tensor<T> flatten(const Tensor<T>& a);
/// Concatenation along axis 1; all other dimensions must agree.
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// x [B,C,H,W], w [O,C,k,k], b [O] or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding, Exec exec = Exec::kParallel);
template <class T> Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride);
template <class T> Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int out_h, int out_w);
template <class T> Tensor<T> adaptive_max_pool2d(const Tensor<T>& x, int out_h, int out_w);

/// Batch normalization over [B,F] or [B,C,H,W] (per feature / channel).
/// Training mode normalizes with batch statistics and updates the running
/// buffers in place; eval mode uses the running buffers.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps);

/// Inverted dropout; identity when not training or p == 0.
template <class T> Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng);

/// x [B,I], w [O,I], b [O] or undefined.
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Row-wise softmax over [B,N].
template <class T> Tensor<T> softmax(const Tensor<T>& logits);

/// Mean over the batch of -log softmax(logits)[label]; labels are 0-based.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// sum_k exp(-s_k) * L_k + s_k over scalar losses L_k and s of shape [K].
template <class T>
Tensor<T> homoscedastic_loss(const std::vector<Tensor<T>>& losses, const Tensor<T>& s);

/// Start offsets of `parts` equal spans of `total`, remainder to the last
/// span; returns parts + 1 boundaries.
std::vector<int> split_bounds(int total, int parts);

/// Float pseudo-image [B,3,size,size] from j probability tensors [B,N]:
/// j horizontal bands, N vertical cells per band, cell value = probability
/// replicated over the three channels.
template <class T>
Tensor<T> probs_to_pseudo(const std::vector<Tensor<T>>& probs, int size);

}  // namespace gestigo::nn
