#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsgic/params.hpp"

namespace wsgic {

struct AdamOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

// One bias-corrected Adam update of a flat parameter block. step is 1-based.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t step, const AdamOptions& opt);

// Advances state.step and updates every trainable parameter that received a
// gradient. Parameters without a gradient buffer are skipped entirely.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const AdamOptions& opt);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm measured before clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm);

}  // namespace wsgic
