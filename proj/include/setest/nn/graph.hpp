#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setest/nn/kernels.hpp"
#include "setest/nn/params.hpp"
#include "setest/nn/tensor.hpp"
#include "setest/rng.hpp"

namespace setest::nn {

using NodeId = std::size_t;

enum class OpKind {
  input,
  variable,
  param,
  matmul,
  add,
  add_bias,
  mul,
  scale,
  gelu,
  softmax_rows,
  layer_norm,
  gather_rows,
  assemble_rows,
  causal_attention,
  dropout,
  sum,
  mse,
};

/// Contiguous run of rows forming one independent sequence.
struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Reference to row `row` of the `part`-th source of assemble_rows.
struct RowRef {
  std::size_t part = 0;
  std::size_t row = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is a topological order by construction and backward is a single reverse
/// sweep.
class Graph {
 public:
  /// With `track_grad` false no backward closures are recorded (inference).
  explicit Graph(bool track_grad = true) : track_(track_grad) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId input(Tensor value) { return push(OpKind::input, {}, std::move(value), false); }

  /// Leaf that receives a gradient (used for input-gradient checks).
  NodeId variable(Tensor value) { return push(OpKind::variable, {}, std::move(value), true); }

  NodeId param(const ParamStore& store, std::size_t index) {
    NodeId id = push(OpKind::param, {}, store[index].value, store[index].trainable);
    nodes_[id].param_index = static_cast<long>(index);
    return id;
  }

  NodeId param(const ParamStore& store, std::string_view name) {
    return param(store, store.index(name));
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of the last backward() target with respect to node `id`. Nodes
  /// the loss does not depend on report zeros.
  Tensor grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.has_grad) return n.grad;
    return Tensor::matrix(n.value.rows(), n.value.cols());
  }

  NodeId matmul(NodeId a, NodeId b) {
    Tensor out = kernels::matmul(value(a), value(b));
    NodeId id = push(OpKind::matmul, {a, b}, std::move(out));
    record(id, [a, b](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      if (g.wants(a)) g.accum(a).mat().noalias() += dy.mat() * g.value(b).mat().transpose();
      if (g.wants(b)) g.accum(b).mat().noalias() += g.value(a).mat().transpose() * dy.mat();
    });
    return id;
  }

  NodeId add(NodeId a, NodeId b) {
    Tensor out = kernels::add(value(a), value(b));
    NodeId id = push(OpKind::add, {a, b}, std::move(out));
    record(id, [a, b](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      if (g.wants(a)) g.accum(a).mat() += dy.mat();
      if (g.wants(b)) g.accum(b).mat() += dy.mat();
    });
    return id;
  }

  /// x (n x m) + bias (1 x m) broadcast over rows.
  NodeId add_bias(NodeId x, NodeId bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    if (bv.size() != xv.cols()) {
      throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match input " +
                           shape_string(xv.shape()));
    }
    Tensor out = Tensor::uninit(xv.rows(), xv.cols());
    out.mat() = xv.mat().rowwise() + bv.flat();
    NodeId id = push(OpKind::add_bias, {x, bias}, std::move(out));
    record(id, [x, bias](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      if (g.wants(x)) g.accum(x).mat() += dy.mat();
      if (g.wants(bias)) {
        Tensor& gb = g.accum(bias);
        gb.flat() += dy.mat().colwise().sum();
      }
    });
    return id;
  }

  /// Affine layer: x W + b.
  NodeId linear(NodeId x, NodeId weight, NodeId bias) { return add_bias(matmul(x, weight), bias); }

  NodeId mul(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "mul");
    Tensor out = Tensor::uninit(value(a).rows(), value(a).cols());
    out.mat() = value(a).mat().cwiseProduct(value(b).mat());
    NodeId id = push(OpKind::mul, {a, b}, std::move(out));
    record(id, [a, b](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      if (g.wants(a)) g.accum(a).mat() += dy.mat().cwiseProduct(g.value(b).mat());
      if (g.wants(b)) g.accum(b).mat() += dy.mat().cwiseProduct(g.value(a).mat());
    });
    return id;
  }

  NodeId scale(NodeId x, double s) {
    Tensor out = Tensor::uninit(value(x).rows(), value(x).cols());
    out.mat() = value(x).mat() * s;
    NodeId id = push(OpKind::scale, {x}, std::move(out));
    record(id, [x, s](Graph& g, NodeId self) {
      if (g.wants(x)) g.accum(x).mat() += g.nodes_[self].grad.mat() * s;
    });
    return id;
  }

  NodeId gelu(NodeId x) {
    if (!track_ || !wants(x)) return push(OpKind::gelu, {x}, kernels::gelu(value(x)));
    const Tensor& xv = value(x);
    Tensor out = Tensor::uninit(xv.rows(), xv.cols());
    auto slope = std::make_shared<Tensor>(Tensor::uninit(xv.rows(), xv.cols()));
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kernels::kGeluC * (v + kernels::kGeluA * v * v * v));
      out[i] = 0.5 * v * (1.0 + t);
      (*slope)[i] = 0.5 * (1.0 + t) +
                    0.5 * v * (1.0 - t * t) * kernels::kGeluC * (1.0 + 3.0 * kernels::kGeluA * v * v);
    }
    NodeId id = push(OpKind::gelu, {x}, std::move(out));
    record(id, [x, slope](Graph& g, NodeId self) {
      g.accum(x).mat() += g.nodes_[self].grad.mat().cwiseProduct(slope->mat());
    });
    return id;
  }

  NodeId softmax_rows(NodeId x) {
    NodeId id = push(OpKind::softmax_rows, {x}, kernels::softmax_rows(value(x)));
    record(id, [x](Graph& g, NodeId self) {
      if (!g.wants(x)) return;
      const Tensor& y = g.nodes_[self].value;
      const Tensor& dy = g.nodes_[self].grad;
      Tensor& gx = g.accum(x);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row_span(r);
        auto dr = dy.row_span(r);
        auto gr = gx.row_span(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * dr[c];
        for (std::size_t c = 0; c < yr.size(); ++c) gr[c] += yr[c] * (dr[c] - dot);
      }
    });
    return id;
  }

  /// Row-wise layer normalization followed by the affine map gamma * xhat + beta.
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta) {
    const Tensor& xv = value(x);
    const std::size_t cols = xv.cols();
    if (value(gamma).size() != cols || value(beta).size() != cols) {
      throw DimensionError("layer_norm: affine parameters " + shape_string(value(gamma).shape()) +
                           "/" + shape_string(value(beta).shape()) + " do not match input " +
                           shape_string(xv.shape()));
    }
    auto stats = std::make_shared<kernels::LayerNormStats>();
    auto xhat = std::make_shared<Tensor>(kernels::layer_norm_rows(xv, stats.get()));
    Tensor out = Tensor::uninit(xv.rows(), cols);
    out.mat() = (xhat->mat().array().rowwise() * value(gamma).flat().array()).rowwise() +
                value(beta).flat().array();
    NodeId id = push(OpKind::layer_norm, {x, gamma, beta}, std::move(out));
    record(id, [x, gamma, beta, stats, xhat](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      const std::size_t rows = dy.rows();
      const std::size_t n = dy.cols();
      if (g.wants(gamma)) {
        g.accum(gamma).flat() += dy.mat().cwiseProduct(xhat->mat()).colwise().sum();
      }
      if (g.wants(beta)) {
        g.accum(beta).flat() += dy.mat().colwise().sum();
      }
      if (!g.wants(x)) return;
      const Tensor& gam = g.value(gamma);
      Tensor& gx = g.accum(x);
      std::vector<double> dxhat(n);
      for (std::size_t r = 0; r < rows; ++r) {
        auto dr = dy.row_span(r);
        auto hr = xhat->row_span(r);
        double m1 = 0.0;
        double m2 = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          dxhat[c] = dr[c] * gam[c];
          m1 += dxhat[c];
          m2 += dxhat[c] * hr[c];
        }
        m1 /= static_cast<double>(n);
        m2 /= static_cast<double>(n);
        auto gr = gx.row_span(r);
        const double rstd = stats->rstd[r];
        for (std::size_t c = 0; c < n; ++c) gr[c] += rstd * (dxhat[c] - m1 - hr[c] * m2);
      }
    });
    return id;
  }

  /// Embedding lookup: out[i] = table[indices[i]].
  NodeId gather_rows(NodeId table, std::vector<std::size_t> indices) {
    Tensor out = kernels::embedding_lookup(value(table), indices);
    NodeId id = push(OpKind::gather_rows, {table}, std::move(out));
    record(id, [table, idx = std::move(indices)](Graph& g, NodeId self) {
      if (!g.wants(table)) return;
      const Tensor& dy = g.nodes_[self].grad;
      Tensor& gt = g.accum(table);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = dy.row_span(i);
        auto dst = gt.row_span(idx[i]);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    });
    return id;
  }

  /// Builds a matrix whose i-th row is row layout[i].row of parts[layout[i].part].
  NodeId assemble_rows(std::vector<NodeId> parts, std::vector<RowRef> layout) {
    if (parts.empty() || layout.empty()) throw ContractError("assemble_rows: empty input");
    const std::size_t cols = value(parts[0]).cols();
    for (NodeId p : parts) {
      if (value(p).cols() != cols) {
        throw DimensionError("assemble_rows: column mismatch " + shape_string(value(parts[0]).shape()) +
                             " vs " + shape_string(value(p).shape()));
      }
    }
    Tensor out = Tensor::uninit(layout.size(), cols);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& ref = layout[i];
      if (ref.part >= parts.size() || ref.row >= value(parts[ref.part]).rows()) {
        throw RangeError("assemble_rows: row reference out of range");
      }
      auto src = value(parts[ref.part]).row_span(ref.row);
      std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    std::vector<NodeId> inputs = parts;
    NodeId id = push(OpKind::assemble_rows, std::move(inputs), std::move(out));
    record(id, [parts = std::move(parts), layout = std::move(layout)](Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      for (std::size_t i = 0; i < layout.size(); ++i) {
        NodeId p = parts[layout[i].part];
        if (!g.wants(p)) continue;
        auto src = dy.row_span(i);
        auto dst = g.accum(p).row_span(layout[i].row);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    });
    return id;
  }

  /// Multi-head scaled dot-product attention with a causal mask, applied
  /// independently to each segment of rows. q, k, v are (n x d); heads split
  /// the columns into n_heads blocks of d / n_heads.
  NodeId causal_attention(NodeId q, NodeId k, NodeId v, std::vector<Segment> segments,
                          std::size_t n_heads) {
    const Tensor& qv = value(q);
    const Tensor& kv = value(k);
    const Tensor& vv = value(v);
    require_same_shape(qv, kv, "causal_attention");
    require_same_shape(qv, vv, "causal_attention");
    const std::size_t n = qv.rows();
    const std::size_t d = qv.cols();
    if (n_heads == 0 || d % n_heads != 0) {
      throw DimensionError("causal_attention: width " + std::to_string(d) +
                           " not divisible by head count " + std::to_string(n_heads));
    }
    std::size_t covered = 0;
    for (const auto& s : segments) {
      if (s.start != covered || s.length == 0) {
        throw ContractError("causal_attention: segments must tile the rows contiguously");
      }
      covered += s.length;
    }
    if (covered != n) throw ContractError("causal_attention: segments do not cover all rows");

    const std::size_t dk = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    const auto ei = [](std::size_t x) { return static_cast<Eigen::Index>(x); };
    auto probs = std::make_shared<std::vector<RowMatrix>>();
    probs->reserve(segments.size() * n_heads);
    Tensor out = Tensor::uninit(n, d);
    for (const auto& s : segments) {
      const auto L = ei(s.length);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const auto Q = qv.mat().block(ei(s.start), ei(h * dk), L, ei(dk));
        const auto K = kv.mat().block(ei(s.start), ei(h * dk), L, ei(dk));
        const auto V = vv.mat().block(ei(s.start), ei(h * dk), L, ei(dk));
        RowMatrix P = (Q * K.transpose()) * scale;
        for (Eigen::Index i = 0; i < L; ++i) {
          kernels::softmax_inplace(std::span<double>(P.row(i).data(), static_cast<std::size_t>(i + 1)));
          for (Eigen::Index j = i + 1; j < L; ++j) P(i, j) = 0.0;
        }
        out.mat().block(ei(s.start), ei(h * dk), L, ei(dk)).noalias() = P * V;
        probs->push_back(std::move(P));
      }
    }
    NodeId id = push(OpKind::causal_attention, {q, k, v}, std::move(out));
    record(id, [q, k, v, segments = std::move(segments), probs, n_heads, dk, scale, ei](
                   Graph& g, NodeId self) {
      const Tensor& dy = g.nodes_[self].grad;
      const bool wq = g.wants(q), wk = g.wants(k), wv = g.wants(v);
      if (!wq && !wk && !wv) return;
      Tensor* gq = wq ? &g.accum(q) : nullptr;
      Tensor* gk = wk ? &g.accum(k) : nullptr;
      Tensor* gv = wv ? &g.accum(v) : nullptr;
      const Tensor& qv = g.value(q);
      const Tensor& kv = g.value(k);
      const Tensor& vv = g.value(v);
      std::size_t pi = 0;
      for (const auto& s : segments) {
        const auto L = ei(s.length);
        for (std::size_t h = 0; h < n_heads; ++h, ++pi) {
          const RowMatrix& P = (*probs)[pi];
          const auto r0 = ei(s.start);
          const auto c0 = ei(h * dk);
          const auto dZ = dy.mat().block(r0, c0, L, ei(dk));
          if (gv) gv->mat().block(r0, c0, L, ei(dk)).noalias() += P.transpose() * dZ;
          if (!gq && !gk) continue;
          RowMatrix dP = dZ * vv.mat().block(r0, c0, L, ei(dk)).transpose();
          // dS = P * (dP - rowsum(dP * P)); masked entries have P == 0.
          for (Eigen::Index i = 0; i < L; ++i) {
            const double dot = P.row(i).dot(dP.row(i));
            dP.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
          }
          if (gq) {
            gq->mat().block(r0, c0, L, ei(dk)).noalias() +=
                (dP * kv.mat().block(r0, c0, L, ei(dk))) * scale;
          }
          if (gk) {
            gk->mat().block(r0, c0, L, ei(dk)).noalias() +=
                (dP.transpose() * qv.mat().block(r0, c0, L, ei(dk))) * scale;
          }
        }
      }
    });
    return id;
  }

  /// Inverted dropout with drop probability p; identity when p == 0.
  NodeId dropout(NodeId x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw ContractError("dropout probability must be < 1");
    const Tensor& xv = value(x);
    auto mask = std::make_shared<Tensor>(Tensor::uninit(xv.rows(), xv.cols()));
    const double keep = 1.0 / (1.0 - p);
    for (auto& m : mask->values()) m = rng.uniform() < p ? 0.0 : keep;
    Tensor out = Tensor::uninit(xv.rows(), xv.cols());
    out.mat() = xv.mat().cwiseProduct(mask->mat());
    NodeId id = push(OpKind::dropout, {x}, std::move(out));
    record(id, [x, mask](Graph& g, NodeId self) {
      if (g.wants(x)) g.accum(x).mat() += g.nodes_[self].grad.mat().cwiseProduct(mask->mat());
    });
    return id;
  }

  NodeId sum(NodeId x) {
    NodeId id = push(OpKind::sum, {x}, Tensor::scalar(value(x).mat().sum()));
    record(id, [x](Graph& g, NodeId self) {
      if (g.wants(x)) g.accum(x).mat().array() += g.nodes_[self].grad[0];
    });
    return id;
  }

  /// Mean squared error against a constant target, averaged over all entries.
  NodeId mse(NodeId pred, Tensor target) {
    const Tensor& pv = value(pred);
    require_same_shape(pv, target, "mse");
    auto tgt = std::make_shared<Tensor>(std::move(target));
    const double n = static_cast<double>(pv.size());
    const double loss = (pv.mat() - tgt->mat()).squaredNorm() / n;
    NodeId id = push(OpKind::mse, {pred}, Tensor::scalar(loss));
    record(id, [pred, tgt, n](Graph& g, NodeId self) {
      if (!g.wants(pred)) return;
      const double s = 2.0 * g.nodes_[self].grad[0] / n;
      g.accum(pred).mat() += (g.value(pred).mat() - tgt->mat()) * s;
    });
    return id;
  }

  /// Reverse sweep from a scalar node. Gradients of earlier calls are cleared.
  void backward(NodeId loss) {
    if (!track_) throw ContractError("backward called on an inference-only graph");
    const Node& l = nodes_.at(loss);
    if (l.value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_string(l.value.shape()));
    }
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    accum(loss)[0] = 1.0;
    for (NodeId id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.has_grad && n.back) n.back(*this, id);
    }
  }

  /// Gradients for every parameter of `store`, in store order. Parameters not
  /// reached from the loss get zeros.
  std::vector<Tensor> param_grads(const ParamStore& store) const {
    std::vector<Tensor> out;
    out.reserve(store.size());
    for (const auto& p : store) out.emplace_back(p.value.shape(), 0.0);
    for (const auto& n : nodes_) {
      if (n.kind != OpKind::param || !n.has_grad) continue;
      Tensor& dst = out.at(static_cast<std::size_t>(n.param_index));
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
    return out;
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    long param_index = -1;
    std::function<void(Graph&, NodeId)> back;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, bool leaf_requires = false) {
    bool req = leaf_requires;
    for (NodeId i : inputs) req = req || nodes_.at(i).requires_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Tensor(), false, req && track_, -1, {}});
    return nodes_.size() - 1;
  }

  template <class F>
  void record(NodeId id, F&& f) {
    if (track_ && nodes_[id].requires_grad) nodes_[id].back = std::forward<F>(f);
  }

  bool wants(NodeId id) const { return nodes_[id].requires_grad; }

  Tensor& accum(NodeId id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }

  bool track_;
  std::vector<Node> nodes_;
};

}  // namespace setest::nn
