#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msbridge/model.hpp"
#include "msbridge/rng.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

/// The three inference-time controls: the intermediate time tau, the
/// total Euler step count over the unit interval, and the guidance
/// weight. Sub-intervals get steps proportional to their length.
struct BridgeConfig {
  enum class EncodeGuidance { kGuided, kConditional };

  float tau = 0.45f;
  int steps = 50;
  float guidance_weight = 8.5f;
  bool use_ema = true;
  EncodeGuidance encode_guidance = EncodeGuidance::kGuided;

  void validate() const {
    if (!(tau > 0.0f && tau < 1.0f)) throw ConfigError("tau must lie in (0,1)");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(guidance_weight >= 0.0f)) throw ConfigError("guidance_weight must be non-negative");
  }
};

struct TranslationResult {
  Tensor z_tau;
  Tensor x_hat;
  DomainLabel source_label;
  DomainLabel target_label;
};

/// Steps allocated to a sub-interval: ceil(steps * |t1 - t0|), at least 1.
/// Products within float fuzz of an integer snap to it first.
inline int substeps(int steps, float t_start, float t_end) {
  const double frac = std::fabs(static_cast<double>(t_end) - static_cast<double>(t_start));
  const double p = static_cast<double>(steps) * frac;
  const double r = std::round(p);
  const int n = (std::fabs(p - r) < 1e-4 * steps) ? static_cast<int>(r)
                                                  : static_cast<int>(std::ceil(p));
  return std::max(1, n);
}

/// Classifier-free-guided velocity: v_null + w * (v_cond - v_null).
/// w = 1 collapses to the conditional field, w = 0 to the unconditional
/// one; both collapses are computed exactly (single forward).
inline Tensor guided_velocity(const VectorFieldModel& model, const Tensor& x, float t,
                              DomainLabel c, float w, bool use_ema = true) {
  if (model.is_null(c)) throw ContractError("guided_velocity: condition must be a real domain");
  if (w == 1.0f) return model.forward(x, t, c, use_ema);
  if (w == 0.0f) return model.forward(x, t, model.null_label(), use_ema);
  const Tensor vc = model.forward(x, t, c, use_ema);
  const Tensor vn = model.forward(x, t, model.null_label(), use_ema);
  Tensor out = vn;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] += w * (vc.data[i] - vn.data[i]);
  }
  return out;
}

/// Fixed-step explicit Euler over [t_start, t_end] for any velocity field
/// f(x, t) -> Tensor. h is signed, so the same routine integrates both
/// directions. The update x_{k+1} = x_k + h v(x_k, t_k) is carried in a
/// telescoped double accumulator (x_k = x_0 + h sum of velocities), so a
/// constant field lands on the exact endpoint for any step count. Throws
/// NumericError naming the step if the state diverges.
template <typename Field>
Tensor integrate_euler(Field&& field, Tensor x, float t_start, float t_end, int n_steps) {
  if (n_steps < 1) throw ContractError("integrate_euler: need at least one step");
  if (t_start == t_end) throw ContractError("integrate_euler: empty time interval");
  const double h = (static_cast<double>(t_end) - static_cast<double>(t_start)) /
                   static_cast<double>(n_steps);
  const Tensor x0 = x;
  std::vector<double> vsum(x.data.size(), 0.0);
  for (int k = 0; k < n_steps; ++k) {
    const float tk = static_cast<float>(static_cast<double>(t_start) + h * k);
    const Tensor v = field(x, tk);
    if (!v.same_shape(x)) {
      throw DimensionError("integrate_euler: field output " + shape_str(v.shape) +
                           " vs state " + shape_str(x.shape));
    }
    for (size_t i = 0; i < x.data.size(); ++i) {
      vsum[i] += static_cast<double>(v.data[i]);
      x.data[i] = static_cast<float>(static_cast<double>(x0.data[i]) + h * vsum[i]);
    }
    if (!x.all_finite()) {
      throw NumericError("integrate_euler: non-finite state at step " + std::to_string(k));
    }
  }
  return x;
}

/// Euler integration of the guided model field between two times in [0,1].
inline Tensor euler_integrate(const VectorFieldModel& model, const Tensor& x0, float t_start,
                              float t_end, const BridgeConfig& cfg, DomainLabel c) {
  cfg.validate();
  const int n = substeps(cfg.steps, t_start, t_end);
  return integrate_euler(
      [&](const Tensor& x, float t) {
        return guided_velocity(model, x, t, c, cfg.guidance_weight, cfg.use_ema);
      },
      x0, t_start, t_end, n);
}

/// Backward encoding: integrate from t = 1 down to t = tau under the
/// source condition, yielding the intermediate latent z_tau. Whether the
/// backward leg uses the guided or the plainly conditional field is a
/// config switch; default guided, matching the forward leg. The
/// conditional switch integrates the bare source-conditioned field, which
/// is the self-consistent time reversal and the better choice for deep
/// encodes.
inline Tensor encode(const VectorFieldModel& model, const Tensor& x1, DomainLabel source,
                     const BridgeConfig& cfg) {
  cfg.validate();
  model.validate_label(source, /*allow_null=*/false);
  if (!x1.all_finite()) throw NumericError("encode: non-finite input sample");
  const int n = substeps(cfg.steps, 1.0f, cfg.tau);
  if (cfg.encode_guidance == BridgeConfig::EncodeGuidance::kConditional) {
    return integrate_euler(
        [&](const Tensor& x, float t) { return model.forward(x, t, source, cfg.use_ema); }, x1,
        1.0f, cfg.tau, n);
  }
  return integrate_euler(
      [&](const Tensor& x, float t) {
        return guided_velocity(model, x, t, source, cfg.guidance_weight, cfg.use_ema);
      },
      x1, 1.0f, cfg.tau, n);
}

/// Full bridge translation: encode the source sample to z_tau, then
/// integrate forward from tau to 1 under the target condition.
inline TranslationResult translate(const VectorFieldModel& model, const Tensor& x1,
                                   DomainLabel source, DomainLabel target,
                                   const BridgeConfig& cfg) {
  model.validate_label(target, /*allow_null=*/false);
  TranslationResult r;
  r.source_label = source;
  r.target_label = target;
  r.z_tau = encode(model, x1, source, cfg);
  const int n = substeps(cfg.steps, cfg.tau, 1.0f);
  r.x_hat = integrate_euler(
      [&](const Tensor& x, float t) {
        return guided_velocity(model, x, t, target, cfg.guidance_weight, cfg.use_ema);
      },
      r.z_tau, cfg.tau, 1.0f, n);
  return r;
}

/// Standard generative sampling: draw from the Gaussian prior at t = 0
/// and integrate the guided field to t = 1 under the target condition.
inline Tensor sample_prior(const VectorFieldModel& model, DomainLabel target, int n_samples,
                           const BridgeConfig& cfg, Rng& rng) {
  cfg.validate();
  model.validate_label(target, /*allow_null=*/false);
  if (n_samples < 1) throw ContractError("sample_prior: need n >= 1");
  Tensor x0 = Tensor::randn({n_samples, model.data_dim()}, rng);
  const int n = substeps(cfg.steps, 0.0f, 1.0f);
  return integrate_euler(
      [&](const Tensor& x, float t) {
        return guided_velocity(model, x, t, target, cfg.guidance_weight, cfg.use_ema);
      },
      x0, 0.0f, 1.0f, n);
}

}  // namespace msbridge
