#pragma once

// Central-difference gradient checking in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wsgic/params.hpp"
#include "wsgic/tensor.hpp"

namespace wsgic::testing {

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Relative error with a floor on the denominator so that gradients that are
// zero analytically are judged against an absolute scale of 1e-3 * tolerance.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "leaf[i]: analytic vs numeric"
};

// loss() must rebuild the graph from the current leaf values and return a
// scalar. Leaves are perturbed in place and restored afterwards.
inline GradCheckResult grad_check(std::vector<Tensor<double>> leaves,
                                  const std::function<Tensor<double>()>& loss,
                                  double h = kFiniteDifferenceStep) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  backward(loss());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);
    }
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[l][i], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "leaf " + std::to_string(l) + "[" + std::to_string(i) +
                       "]: " + std::to_string(analytic[l][i]) + " vs " + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline std::vector<Tensor<double>> store_leaves(ParameterStore<double>& store) {
  std::vector<Tensor<double>> out;
  for (auto& [_, p] : store) out.push_back(p.tensor);
  return out;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

}  // namespace wsgic::testing
