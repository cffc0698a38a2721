#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msbridge/autodiff.hpp"
#include "msbridge/tensor.hpp"

namespace msbridge {

/// Domain condition. Valid ids are [0, K); id == K is the distinguished
/// unconditional (null) token used by classifier-free guidance.
struct DomainLabel {
  int id = 0;
};

/// Sinusoidal embedding of the scalar time. Frequencies span [1, base]
/// geometrically so t in [0,1] is resolved at several scales; every entry
/// lies in [-1, 1].
struct TimeEmbedding {
  int dim = 64;
  float base = 1000.0f;

  void write(float t, float* out) const {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and >= 2");
    const int half = dim / 2;
    for (int j = 0; j < half; ++j) {
      const float expo = half > 1 ? static_cast<float>(j) / static_cast<float>(half - 1) : 0.0f;
      const float freq = std::pow(base, expo);
      out[2 * j] = std::sin(t * freq);
      out[2 * j + 1] = std::cos(t * freq);
    }
  }

  std::vector<float> encode(float t) const {
    std::vector<float> v(static_cast<size_t>(dim));
    write(t, v.data());
    return v;
  }
};

/// The conditional velocity network v(x, c, t): an MLP over the
/// concatenation of sample features, sinusoidal time embedding and a
/// learned per-domain embedding, with an EMA shadow copy for inference.
/// The output head is zero-initialized, so the untrained field is
/// identically zero and the untrained flow is the identity map.
class VectorFieldModel {
 public:
  struct Layer {
    Tensor w;  // in x out
    Tensor b;  // 1 x out
  };

  VectorFieldModel(int data_dim, int num_domains, std::vector<int> hidden, uint64_t seed,
                   int time_dim = 64, int domain_dim = 16, float ema_rate = 0.999f,
                   float time_base = 1000.0f)
      : data_dim_(data_dim),
        num_domains_(num_domains),
        domain_dim_(domain_dim),
        ema_rate_(ema_rate),
        time_embed_{time_dim, time_base} {
    if (data_dim < 1) throw ConfigError("data_dim must be positive");
    if (num_domains < 1) throw ConfigError("need at least one domain");
    if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time embedding dim must be even and >= 2");
    if (!(ema_rate > 0.0f && ema_rate < 1.0f)) throw ConfigError("ema_rate must lie in (0,1)");
    Rng rng(seed);
    std::vector<int> widths;
    widths.push_back(input_dim());
    for (int h : hidden) {
      if (h < 1) throw ConfigError("hidden width must be positive");
      widths.push_back(h);
    }
    widths.push_back(data_dim);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      Layer layer;
      const bool last = l + 2 == widths.size();
      if (last) {
        layer.w = Tensor::zeros({widths[l], widths[l + 1]});
      } else {
        const float bound = std::sqrt(6.0f / static_cast<float>(widths[l]));
        layer.w = Tensor::zeros({widths[l], widths[l + 1]});
        for (float& x : layer.w.data) x = rng.uniform(-bound, bound);
      }
      layer.b = Tensor::zeros({1, widths[l + 1]});
      layer.w.requires_grad = true;
      layer.b.requires_grad = true;
      layers_.push_back(std::move(layer));
    }
    embedding_ = Tensor::randn({num_domains + 1, domain_dim}, rng, 0.2f);
    embedding_.requires_grad = true;
    ema_layers_ = layers_;
    ema_embedding_ = embedding_;
    strip_grad_flags(ema_layers_, ema_embedding_);
  }

  int data_dim() const { return data_dim_; }
  int num_domains() const { return num_domains_; }
  int input_dim() const { return data_dim_ + time_embed_.dim + domain_dim_; }
  float ema_rate() const { return ema_rate_; }
  int time_dim() const { return time_embed_.dim; }
  float time_base() const { return time_embed_.base; }
  int domain_dim() const { return domain_dim_; }
  const TimeEmbedding& time_embedding() const { return time_embed_; }
  DomainLabel null_label() const { return DomainLabel{num_domains_}; }
  bool is_null(DomainLabel c) const { return c.id == num_domains_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& ema_layers() { return ema_layers_; }
  const std::vector<Layer>& ema_layers() const { return ema_layers_; }
  Tensor& embedding() { return embedding_; }
  const Tensor& embedding() const { return embedding_; }
  Tensor& ema_embedding() { return ema_embedding_; }
  const Tensor& ema_embedding() const { return ema_embedding_; }

  std::vector<int> hidden_widths() const {
    std::vector<int> h;
    for (size_t l = 0; l + 1 < layers_.size(); ++l) h.push_back(layers_[l].w.shape[1]);
    return h;
  }

  /// Trainable parameters in a stable order (layer w, b, ..., embedding).
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> ps;
    for (Layer& l : layers_) {
      ps.push_back(&l.w);
      ps.push_back(&l.b);
    }
    ps.push_back(&embedding_);
    return ps;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (size_t l = 0; l < layers_.size(); ++l) {
      names.push_back("layer" + std::to_string(l) + ".w");
      names.push_back("layer" + std::to_string(l) + ".b");
    }
    names.push_back("embedding");
    return names;
  }

  void validate_label(DomainLabel c, bool allow_null) const {
    const int max_id = allow_null ? num_domains_ : num_domains_ - 1;
    if (c.id < 0 || c.id > max_id) {
      throw LabelError("domain id " + std::to_string(c.id) + " outside [0, " +
                       std::to_string(max_id) + "]");
    }
  }

  /// Plain batched forward pass: x is batch x data_dim, t and c one entry
  /// per row. No tape; pure in the parameters it reads.
  Tensor forward(const Tensor& x, const std::vector<float>& t,
                 const std::vector<DomainLabel>& c, bool use_ema) const {
    const Tensor input = assemble_input(x, t, c, use_ema ? ema_embedding_ : embedding_);
    const std::vector<Layer>& ls = use_ema ? ema_layers_ : layers_;
    Tensor h = input;
    for (size_t l = 0; l < ls.size(); ++l) {
      h = add_rowvec(matmul(h, ls[l].w), ls[l].b);
      if (l + 1 < ls.size()) h = silu(h);
    }
    return h;
  }

  /// Convenience for a batch sharing one time and one label.
  Tensor forward(const Tensor& x, float t, DomainLabel c, bool use_ema) const {
    const int batch = x.rows();
    return forward(x, std::vector<float>(static_cast<size_t>(batch), t),
                   std::vector<DomainLabel>(static_cast<size_t>(batch), c), use_ema);
  }

  /// Recorded forward over the live (non-EMA) parameters; gradients flow
  /// into the layer weights and the domain-embedding table.
  Var forward_train(Tape& tape, const Tensor& x, const std::vector<float>& t,
                    const std::vector<DomainLabel>& c) {
    check_inputs(x, t, c);
    std::vector<int> ids(c.size());
    for (size_t i = 0; i < c.size(); ++i) ids[i] = c[i].id;
    Var xin = tape.constant(x);
    Var temb = tape.constant(time_matrix(t));
    Var demb = tape.embed_rows(tape.leaf(embedding_), ids);
    Var h = tape.concat_cols({xin, temb, demb});
    for (size_t l = 0; l < layers_.size(); ++l) {
      h = tape.add_rowvec(tape.matmul(h, tape.leaf(layers_[l].w)), tape.leaf(layers_[l].b));
      if (l + 1 < layers_.size()) h = tape.silu(h);
    }
    return h;
  }

  /// ema <- rate * ema + (1 - rate) * params, per element.
  void ema_update() {
    for (size_t l = 0; l < layers_.size(); ++l) {
      blend(ema_layers_[l].w.data, layers_[l].w.data);
      blend(ema_layers_[l].b.data, layers_[l].b.data);
    }
    blend(ema_embedding_.data, embedding_.data);
  }

 private:
  void blend(std::vector<float>& ema, const std::vector<float>& live) const {
    for (size_t i = 0; i < ema.size(); ++i) {
      ema[i] = ema_rate_ * ema[i] + (1.0f - ema_rate_) * live[i];
    }
  }

  static void strip_grad_flags(std::vector<Layer>& ls, Tensor& emb) {
    for (Layer& l : ls) {
      l.w.requires_grad = false;
      l.w.grad.reset();
      l.b.requires_grad = false;
      l.b.grad.reset();
    }
    emb.requires_grad = false;
    emb.grad.reset();
  }

  void check_inputs(const Tensor& x, const std::vector<float>& t,
                    const std::vector<DomainLabel>& c) const {
    x.require_2d();
    if (x.shape[1] != data_dim_) {
      throw DimensionError("forward: sample width " + std::to_string(x.shape[1]) +
                           " does not match data_dim " + std::to_string(data_dim_));
    }
    if (static_cast<size_t>(x.shape[0]) != t.size() || t.size() != c.size()) {
      throw DimensionError("forward: batch " + std::to_string(x.shape[0]) + ", |t| " +
                           std::to_string(t.size()) + ", |c| " + std::to_string(c.size()));
    }
    if (!x.all_finite()) throw NumericError("forward: non-finite sample input");
    for (float ti : t) {
      if (!(ti >= -1e-5f && ti <= 1.0f + 1e-5f)) {
        throw ContractError("forward: t = " + std::to_string(ti) + " outside [0,1]");
      }
    }
    for (DomainLabel ci : c) validate_label(ci, /*allow_null=*/true);
  }

  Tensor time_matrix(const std::vector<float>& t) const {
    Tensor m = Tensor::zeros({static_cast<int>(t.size()), time_embed_.dim});
    for (size_t i = 0; i < t.size(); ++i) {
      time_embed_.write(t[i], m.data.data() + i * static_cast<size_t>(time_embed_.dim));
    }
    return m;
  }

  Tensor assemble_input(const Tensor& x, const std::vector<float>& t,
                        const std::vector<DomainLabel>& c, const Tensor& table) const {
    check_inputs(x, t, c);
    const Tensor temb = time_matrix(t);
    std::vector<int> ids(c.size());
    for (size_t i = 0; i < c.size(); ++i) ids[i] = c[i].id;
    const Tensor demb = embed_rows(table, ids);
    return concat_cols({&x, &temb, &demb});
  }

  int data_dim_;
  int num_domains_;
  int domain_dim_;
  float ema_rate_;
  TimeEmbedding time_embed_;
  std::vector<Layer> layers_;
  std::vector<Layer> ema_layers_;
  Tensor embedding_;
  Tensor ema_embedding_;
};

}  // namespace msbridge
