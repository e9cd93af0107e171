#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gestigo/nn/ops.hpp"
#include "gestigo/rng.hpp"

namespace gestigo::testing {

struct GradCheckResult {
  int probes = 0;
  int failures = 0;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::string worst;

  bool ok() const { return probes > 0 && failures == 0; }
};

/// Central finite differences against backward() on a float64 graph.
///
/// `loss` rebuilds the forward pass from the current tensor values and
/// returns a scalar. Every probe perturbs one element of one target by +-h.
/// A probe passes when |analytic - numeric| <= abs_tol or the relative
/// difference is <= rel_tol.
inline GradCheckResult grad_check(const std::function<nn::Tensor<double>()>& loss,
                                  std::vector<nn::Tensor<double>> targets, int probes_per_target,
                                  std::uint64_t seed, double h = 1e-3, double rel_tol = 1e-4,
                                  double abs_tol = 1e-6) {
  for (auto& t : targets) t.zero_grad();
  auto l = loss();
  nn::backward(l);
  std::vector<std::vector<double>> analytic;
  for (auto& t : targets) {
    std::vector<double> g(t.numel(), 0.0);
    if (t.has_grad()) g.assign(t.grad().begin(), t.grad().end());
    analytic.push_back(std::move(g));
  }

  GradCheckResult r;
  Rng rng(seed);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto data = targets[k].data();
    for (int p = 0; p < probes_per_target; ++p) {
      const auto i = static_cast<std::size_t>(rng.below(data.size()));
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double diff = std::abs(a - numeric);
      const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++r.probes;
      const bool pass = diff <= abs_tol || rel <= rel_tol;
      if (!pass) ++r.failures;
      if (!pass || (r.failures == 0 && diff > r.worst_abs)) {
        r.worst_abs = diff;
        r.worst_rel = rel;
        r.worst = fmt::format("target {} index {}: analytic {:.10g} numeric {:.10g}", k, i, a, numeric);
      }
    }
  }
  return r;
}

/// Random tensor with entries uniform in [lo, hi).
inline nn::Tensor<double> random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0,
                                        double hi = 1.0, bool requires_grad = true) {
  auto t = nn::Tensor<double>::zeros(shape, requires_grad);
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

/// sum(out * weights): a scalar whose gradient w.r.t. out is `weights`.
inline nn::Tensor<double> weighted_sum(const nn::Tensor<double>& out, const nn::Tensor<double>& weights) {
  return nn::sum(nn::mul(out, weights));
}

}  // namespace gestigo::testing
