#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msbridge/autodiff.hpp"
#include "msbridge/model.hpp"
#include "msbridge/optim.hpp"
#include "msbridge/rng.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

struct TrainConfig {
  float learning_rate = 1e-4f;
  int batch_size = 128;
  int epochs = 1000;
  int warmup_steps = 100;
  float label_dropout = 0.2f;
  float ema_rate = 0.999f;
  uint64_t seed = 0;
  int log_interval = 1;      // loss-curve row every this many steps
  int checkpoint_every = 0;  // steps between checkpoints; 0 = every 10% of the run

  void validate() const {
    if (!(learning_rate > 0.0f)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
    if (!(label_dropout >= 0.0f && label_dropout <= 1.0f)) {
      throw ConfigError("label_dropout must lie in [0,1]");
    }
    if (!(ema_rate > 0.0f && ema_rate < 1.0f)) throw ConfigError("ema_rate must lie in (0,1)");
    if (log_interval < 1) throw ConfigError("log_interval must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  }
};

/// One supervised regression pair on the linear interpolant path:
/// x_t = (1-t) x0 + t x1 with x0 standard normal, target u = x1 - x0.
struct PathSample {
  Tensor x_t;
  float t = 0.0f;
  Tensor u_target;
  DomainLabel label;
};

inline PathSample sample_path(const Tensor& x1, Rng& rng) {
  PathSample s;
  s.t = rng.uniform(0.0f, 1.0f);
  s.x_t = x1;
  s.u_target = x1;
  for (size_t i = 0; i < x1.data.size(); ++i) {
    const float x0 = rng.normal();
    s.x_t.data[i] = (1.0f - s.t) * x0 + s.t * x1.data[i];
    s.u_target.data[i] = x1.data[i] - x0;
  }
  return s;
}

/// Classifier-free-guidance dropout: replaces a real domain label with the
/// null token (id = null_id) with probability p. The corpus labels are
/// never modified; this produces the view passed to the model.
inline DomainLabel apply_label_dropout(DomainLabel label, float p, int null_id, Rng& rng) {
  if (label.id == null_id) throw ContractError("label dropout applied to the null token");
  if (p > 0.0f && rng.bernoulli(p)) return DomainLabel{null_id};
  return label;
}

/// One optimizer step on a batch of path samples. Returns the scalar loss.
inline float train_step(VectorFieldModel& model, const std::vector<PathSample>& batch,
                        AdamState& opt) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const int b = static_cast<int>(batch.size());
  const int d = model.data_dim();
  Tensor xt = Tensor::zeros({b, d});
  Tensor u = Tensor::zeros({b, d});
  std::vector<float> t(static_cast<size_t>(b));
  std::vector<DomainLabel> c(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    const PathSample& s = batch[static_cast<size_t>(i)];
    if (s.x_t.numel() != d || s.u_target.numel() != d) {
      throw DimensionError("train_step: sample " + std::to_string(i) + " has " +
                           std::to_string(s.x_t.numel()) + " values, model expects " +
                           std::to_string(d));
    }
    std::copy(s.x_t.data.begin(), s.x_t.data.end(), xt.data.begin() + static_cast<size_t>(i) * d);
    std::copy(s.u_target.data.begin(), s.u_target.data.end(),
              u.data.begin() + static_cast<size_t>(i) * d);
    t[static_cast<size_t>(i)] = s.t;
    c[static_cast<size_t>(i)] = s.label;
  }

  Tape tape;
  Var pred = model.forward_train(tape, xt, t, c);
  Var loss = tape.mse_loss(pred, tape.constant(u));
  const float loss_value = tape.value(loss).data[0];
  if (!std::isfinite(loss_value)) {
    const Tensor& pv = tape.value(pred);
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < d; ++j) {
        if (!std::isfinite(pv.at(i, j)) || !std::isfinite(u.at(i, j))) {
          throw TrainingError("non-finite loss at batch index " + std::to_string(i));
        }
      }
    }
    throw TrainingError("non-finite loss");
  }
  tape.backward(loss);
  adam_step(model.parameters(), opt, model.parameter_names());
  model.ema_update();
  return loss_value;
}

struct TrainResult {
  std::vector<std::pair<int64_t, float>> loss_curve;  // (step, loss)
  int64_t total_steps = 0;
};

/// Full conditional flow-matching run over per-domain sample matrices
/// (datasets[k] is N_k x data_dim for domain k). Batch items pick their
/// domain uniformly, then a sample from that domain. checkpoint_fn, when
/// given, fires every checkpoint interval and after the final step.
inline TrainResult train(
    VectorFieldModel& model, const std::vector<Tensor>& datasets, const TrainConfig& cfg,
    const std::function<void(int64_t, const VectorFieldModel&)>& checkpoint_fn = {}) {
  cfg.validate();
  if (cfg.ema_rate != model.ema_rate()) {
    throw ConfigError("config ema_rate " + std::to_string(cfg.ema_rate) +
                      " differs from the model's " + std::to_string(model.ema_rate()));
  }
  if (datasets.size() < 2) throw ConfigError("training needs at least two domains");
  if (static_cast<int>(datasets.size()) != model.num_domains()) {
    throw ConfigError("got " + std::to_string(datasets.size()) + " datasets for a model with " +
                      std::to_string(model.num_domains()) + " domains");
  }
  int64_t total_n = 0;
  for (size_t k = 0; k < datasets.size(); ++k) {
    datasets[k].require_2d();
    if (datasets[k].shape[0] < cfg.batch_size) {
      throw ConfigError("domain " + std::to_string(k) + " has " +
                        std::to_string(datasets[k].shape[0]) + " samples, need at least " +
                        std::to_string(cfg.batch_size));
    }
    if (datasets[k].shape[1] != model.data_dim()) {
      throw ConfigError("domain " + std::to_string(k) + " sample width " +
                        std::to_string(datasets[k].shape[1]) + " vs model data_dim " +
                        std::to_string(model.data_dim()));
    }
    total_n += datasets[k].shape[0];
  }

  const int64_t steps_per_epoch = (total_n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t ckpt_every =
      cfg.checkpoint_every > 0 ? cfg.checkpoint_every : std::max<int64_t>(1, total_steps / 10);

  AdamState opt = AdamState::init(model.parameters(), cfg.learning_rate, cfg.warmup_steps);
  Rng rng(cfg.seed);
  const int k_domains = static_cast<int>(datasets.size());

  TrainResult result;
  result.total_steps = total_steps;
  std::vector<PathSample> batch(static_cast<size_t>(cfg.batch_size));
  for (int64_t step = 0; step < total_steps; ++step) {
    for (int i = 0; i < cfg.batch_size; ++i) {
      const int dom = rng.index(k_domains);
      const int row = rng.index(datasets[static_cast<size_t>(dom)].shape[0]);
      PathSample s = sample_path(datasets[static_cast<size_t>(dom)].row(row), rng);
      s.label = apply_label_dropout(DomainLabel{dom}, cfg.label_dropout, model.num_domains(), rng);
      batch[static_cast<size_t>(i)] = std::move(s);
    }
    const float loss = train_step(model, batch, opt);
    if (step % cfg.log_interval == 0 || step + 1 == total_steps) {
      result.loss_curve.emplace_back(step, loss);
    }
    if (checkpoint_fn && (step + 1) % ckpt_every == 0 && step + 1 != total_steps) {
      checkpoint_fn(step + 1, model);
    }
  }
  if (checkpoint_fn) checkpoint_fn(total_steps, model);
  return result;
}

}  // namespace msbridge
