#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msbridge/tensor.hpp"

namespace msbridge {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode tape. Ops append nodes in topological order; backward()
/// replays the recorded rules once, in reverse, and writes gradients into
/// the registered leaf tensors. A tape is consumed by backward and cannot
/// be replayed.
class Tape {
 public:
  Var leaf(Tensor& param) {
    auto it = leaf_index_.find(&param);
    if (it != leaf_index_.end()) return Var{it->second};
    Node node;
    node.value = param;  // snapshot; the live tensor is only touched at backward
    node.target = &param;
    node.needs_grad = param.requires_grad;
    int id = push(std::move(node));
    leaf_index_.emplace(&param, id);
    return Var{id};
  }

  Var constant(Tensor value) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = false;
    return Var{push(std::move(node))};
  }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }

  Var matmul(Var a, Var b) {
    Node node;
    node.value = msbridge::matmul(val(a), val(b));
    node.needs_grad = needs(a) || needs(b);
    if (node.needs_grad) {
      node.backward = [a, b](Tape& t, int self) {
        const Tensor& av = t.val(a);
        const Tensor& bv = t.val(b);
        const std::vector<float>& gc = t.nodes_[self].grad;
        const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        if (t.needs(a)) {
          std::vector<float>& ga = t.grad_buf(a);
          // dA[i,q] += sum_j dC[i,j] * B[q,j]
          for (int i = 0; i < m; ++i) {
            const float* gcrow = gc.data() + static_cast<size_t>(i) * n;
            float* garow = ga.data() + static_cast<size_t>(i) * k;
            for (int q = 0; q < k; ++q) {
              const float* brow = bv.data.data() + static_cast<size_t>(q) * n;
              float acc = 0.0f;
              for (int j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
              garow[q] += acc;
            }
          }
        }
        if (t.needs(b)) {
          std::vector<float>& gb = t.grad_buf(b);
          // dB[q,j] += sum_i A[i,q] * dC[i,j]
          for (int i = 0; i < m; ++i) {
            const float* arow = av.data.data() + static_cast<size_t>(i) * k;
            const float* gcrow = gc.data() + static_cast<size_t>(i) * n;
            for (int q = 0; q < k; ++q) {
              const float aiq = arow[q];
              float* gbrow = gb.data() + static_cast<size_t>(q) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += aiq * gcrow[j];
            }
          }
        }
      };
    }
    return Var{push(std::move(node))};
  }

  Var add(Var a, Var b) {
    Node node;
    node.value = msbridge::add(val(a), val(b));
    node.needs_grad = needs(a) || needs(b);
    if (node.needs_grad) {
      node.backward = [a, b](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        if (t.needs(a)) t.axpy(1.0f, gc, t.grad_buf(a));
        if (t.needs(b)) t.axpy(1.0f, gc, t.grad_buf(b));
      };
    }
    return Var{push(std::move(node))};
  }

  Var sub(Var a, Var b) {
    Node node;
    node.value = msbridge::sub(val(a), val(b));
    node.needs_grad = needs(a) || needs(b);
    if (node.needs_grad) {
      node.backward = [a, b](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        if (t.needs(a)) t.axpy(1.0f, gc, t.grad_buf(a));
        if (t.needs(b)) t.axpy(-1.0f, gc, t.grad_buf(b));
      };
    }
    return Var{push(std::move(node))};
  }

  Var mul(Var a, Var b) {
    Node node;
    node.value = msbridge::mul(val(a), val(b));
    node.needs_grad = needs(a) || needs(b);
    if (node.needs_grad) {
      node.backward = [a, b](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        if (t.needs(a)) {
          std::vector<float>& ga = t.grad_buf(a);
          const std::vector<float>& bv = t.val(b).data;
          for (size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * bv[i];
        }
        if (t.needs(b)) {
          std::vector<float>& gb = t.grad_buf(b);
          const std::vector<float>& av = t.val(a).data;
          for (size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * av[i];
        }
      };
    }
    return Var{push(std::move(node))};
  }

  Var scale(Var a, float s) {
    Node node;
    node.value = msbridge::scale(val(a), s);
    node.needs_grad = needs(a);
    if (node.needs_grad) {
      node.backward = [a, s](Tape& t, int self) {
        t.axpy(s, t.nodes_[self].grad, t.grad_buf(a));
      };
    }
    return Var{push(std::move(node))};
  }

  Var silu(Var a) {
    Node node;
    node.value = msbridge::silu(val(a));
    node.needs_grad = needs(a);
    if (node.needs_grad) {
      node.backward = [a](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        const std::vector<float>& xv = t.val(a).data;
        std::vector<float>& ga = t.grad_buf(a);
        for (size_t i = 0; i < gc.size(); ++i) {
          const float s = detail::sigmoid(xv[i]);
          ga[i] += gc[i] * s * (1.0f + xv[i] * (1.0f - s));
        }
      };
    }
    return Var{push(std::move(node))};
  }

  Var tanh(Var a) {
    Node node;
    node.value = msbridge::tanh(val(a));
    node.needs_grad = needs(a);
    if (node.needs_grad) {
      node.backward = [a](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        const std::vector<float>& yv = t.nodes_[self].value.data;
        std::vector<float>& ga = t.grad_buf(a);
        for (size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * (1.0f - yv[i] * yv[i]);
      };
    }
    return Var{push(std::move(node))};
  }

  Var add_rowvec(Var m, Var r) {
    Node node;
    node.value = msbridge::add_rowvec(val(m), val(r));
    node.needs_grad = needs(m) || needs(r);
    if (node.needs_grad) {
      node.backward = [m, r](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        const int rows = t.nodes_[self].value.shape[0];
        const int cols = t.nodes_[self].value.shape[1];
        if (t.needs(m)) t.axpy(1.0f, gc, t.grad_buf(m));
        if (t.needs(r)) {
          std::vector<float>& gr = t.grad_buf(r);
          for (int i = 0; i < rows; ++i) {
            const float* row = gc.data() + static_cast<size_t>(i) * cols;
            for (int j = 0; j < cols; ++j) gr[j] += row[j];
          }
        }
      };
    }
    return Var{push(std::move(node))};
  }

  Var concat_cols(const std::vector<Var>& parts) {
    std::vector<const Tensor*> vals;
    vals.reserve(parts.size());
    bool any = false;
    for (Var p : parts) {
      vals.push_back(&val(p));
      any = any || needs(p);
    }
    Node node;
    node.value = msbridge::concat_cols(vals);
    node.needs_grad = any;
    if (node.needs_grad) {
      node.backward = [parts](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        const int rows = t.nodes_[self].value.shape[0];
        const int total = t.nodes_[self].value.shape[1];
        int col0 = 0;
        for (Var p : parts) {
          const int pc = t.val(p).shape[1];
          if (t.needs(p)) {
            std::vector<float>& gp = t.grad_buf(p);
            for (int i = 0; i < rows; ++i) {
              const float* src = gc.data() + static_cast<size_t>(i) * total + col0;
              float* dst = gp.data() + static_cast<size_t>(i) * pc;
              for (int j = 0; j < pc; ++j) dst[j] += src[j];
            }
          }
          col0 += pc;
        }
      };
    }
    return Var{push(std::move(node))};
  }

  Var embed_rows(Var table, std::vector<int> ids) {
    Node node;
    node.value = msbridge::embed_rows(val(table), ids);
    node.needs_grad = needs(table);
    if (node.needs_grad) {
      node.backward = [table, ids = std::move(ids)](Tape& t, int self) {
        const std::vector<float>& gc = t.nodes_[self].grad;
        const int d = t.nodes_[self].value.shape[1];
        std::vector<float>& gt = t.grad_buf(table);
        for (size_t i = 0; i < ids.size(); ++i) {
          const float* src = gc.data() + i * d;
          float* dst = gt.data() + static_cast<size_t>(ids[i]) * d;
          for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
      };
    }
    return Var{push(std::move(node))};
  }

  /// Scalar mean of squared differences.
  Var mse_loss(Var pred, Var target) {
    Node node;
    node.value = Tensor::scalar(msbridge::mse(val(pred), val(target)));
    node.needs_grad = needs(pred) || needs(target);
    if (node.needs_grad) {
      node.backward = [pred, target](Tape& t, int self) {
        const float g = t.nodes_[self].grad[0];
        const std::vector<float>& pv = t.val(pred).data;
        const std::vector<float>& tv = t.val(target).data;
        const float inv_n = 1.0f / static_cast<float>(pv.size());
        if (t.needs(pred)) {
          std::vector<float>& gp = t.grad_buf(pred);
          for (size_t i = 0; i < pv.size(); ++i) gp[i] += g * 2.0f * (pv[i] - tv[i]) * inv_n;
        }
        if (t.needs(target)) {
          std::vector<float>& gt = t.grad_buf(target);
          for (size_t i = 0; i < pv.size(); ++i) gt[i] -= g * 2.0f * (pv[i] - tv[i]) * inv_n;
        }
      };
    }
    return Var{push(std::move(node))};
  }

  /// Populates .grad on every requires_grad leaf reachable from loss.
  /// The tape is consumed; a second call is a contract violation.
  void backward(Var loss) {
    if (consumed_) throw ContractError("backward: tape already consumed");
    const int root = check(loss);
    if (nodes_[root].value.numel() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(nodes_[root].value.shape));
    }
    consumed_ = true;
    grad_buf(loss).assign(1, 1.0f);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
    for (auto& [param, id] : leaf_index_) {
      if (!param->requires_grad) continue;
      Node& n = nodes_[id];
      if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.numel()), 0.0f);
      param->grad = n.grad;
    }
  }

  bool consumed() const { return consumed_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<float> grad;  // allocated lazily during backward
    Tensor* target = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  int push(Node&& n) {
    nodes_.emplace_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw ContractError("invalid tape handle");
    }
    return v.id;
  }

  const Tensor& val(Var v) const { return nodes_[check(v)].value; }
  bool needs(Var v) const { return nodes_[check(v)].needs_grad; }

  std::vector<float>& grad_buf(Var v) {
    Node& n = nodes_[check(v)];
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.numel()), 0.0f);
    return n.grad;
  }

  static void axpy(float a, const std::vector<float>& x, std::vector<float>& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
  }

  std::vector<Node> nodes_;
  std::unordered_map<Tensor*, int> leaf_index_;
  bool consumed_ = false;
};

}  // namespace msbridge
