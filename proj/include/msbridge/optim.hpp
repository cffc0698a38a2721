#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msbridge/tensor.hpp"

namespace msbridge {

/// Bias-corrected Adam with a linear learning-rate warmup.
/// The warmup factor uses the pre-increment step counter, so the very
/// first update under warmup moves nothing while the moments warm up.
struct AdamState {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  int warmup_steps = 0;
  int64_t step = 0;

  std::vector<std::vector<float>> m;  // first moments, one per parameter
  std::vector<std::vector<float>> v;  // second moments

  static AdamState init(const std::vector<Tensor*>& params, float lr, int warmup = 0) {
    AdamState s;
    s.learning_rate = lr;
    s.warmup_steps = warmup;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
      s.m.emplace_back(static_cast<size_t>(p->numel()), 0.0f);
      s.v.emplace_back(static_cast<size_t>(p->numel()), 0.0f);
    }
    return s;
  }
};

/// One in-place Adam update over params, reading each tensor's populated
/// .grad. Throws TrainingError on a non-finite gradient, naming the
/// parameter by the given names (or its index).
inline void adam_step(const std::vector<Tensor*>& params, AdamState& state,
                      const std::vector<std::string>& names = {}) {
  if (params.size() != state.m.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->grad.has_value() ||
        params[p]->grad->size() != params[p]->data.size()) {
      throw ContractError("adam_step: parameter " + std::to_string(p) +
                          " has no populated gradient");
    }
    for (float g : *params[p]->grad) {
      if (!std::isfinite(g)) {
        const std::string name =
            p < names.size() ? names[p] : ("param[" + std::to_string(p) + "]");
        throw TrainingError("non-finite gradient in " + name);
      }
    }
  }

  const float warm = state.warmup_steps > 0
                         ? std::min(1.0f, static_cast<float>(state.step) /
                                              static_cast<float>(state.warmup_steps))
                         : 1.0f;
  const float lr_eff = state.learning_rate * warm;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const float bc1 = 1.0f - static_cast<float>(std::pow(state.beta1, t));
  const float bc2 = 1.0f - static_cast<float>(std::pow(state.beta2, t));

  for (size_t p = 0; p < params.size(); ++p) {
    std::vector<float>& m = state.m[p];
    std::vector<float>& v = state.v[p];
    const std::vector<float>& g = *params[p]->grad;
    std::vector<float>& w = params[p]->data;
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      w[i] -= lr_eff * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace msbridge
