#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "langsamp/kernels.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

// Reverse-mode autodiff over a tape of row-major matrices. Nodes are appended
// in construction order, which is a valid topological order, so backward() is
// a single reverse sweep. Ops are free functions that append one node each
// and register a closure pulling from the node's grad into its inputs' grads.
template <typename Scalar>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int add_node(Mat<Scalar> value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.grad = Mat<Scalar>::Zero(node.value.rows(), node.value.cols());
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int id, std::function<void(Graph&)> fn) {
    nodes_.at(static_cast<std::size_t>(id)).back = std::move(fn);
  }

  const Mat<Scalar>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  Mat<Scalar>& grad(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.requires_grad) throw ValueError("Graph::grad: node does not require grad");
    return n.grad;
  }
  bool requires_grad(int id) const {
    return nodes_.at(static_cast<std::size_t>(id)).requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root must
  // be a scalar (1x1) node.
  void backward(int root) {
    Node& r = nodes_.at(static_cast<std::size_t>(root));
    if (!r.requires_grad) throw ValueError("Graph::backward: root does not require grad");
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw ShapeError("Graph::backward: root must be a 1x1 scalar node");
    r.grad(0, 0) = Scalar(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.back) n.back(*this);
    }
  }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    std::function<void(Graph&)> back;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// Lightweight handle to a tape node.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const Mat<Scalar>& value() const { return graph->value(id); }
  const Mat<Scalar>& grad() const { return graph->grad(id); }
  bool requires_grad() const { return graph->requires_grad(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
Var<Scalar> leaf(Graph<Scalar>& g, Mat<Scalar> value, bool requires_grad = false) {
  return {&g, g.add_node(std::move(value), requires_grad)};
}

namespace detail {

template <typename Scalar>
Graph<Scalar>& same_graph(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw ValueError("autograd: operands must live on the same graph");
  return *a.graph;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = detail::same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("add: operand shapes must match");
  const bool req = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(a.value() + b.value(), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, bid = b.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      if (gg.requires_grad(aid)) gg.grad(aid) += go;
      if (gg.requires_grad(bid)) gg.grad(bid) += go;
    });
  }
  return {&g, id};
}

// Broadcasts a 1 x m row vector over every row of a.
template <typename Scalar>
Var<Scalar> add_rowvec(Var<Scalar> a, Var<Scalar> row) {
  Graph<Scalar>& g = detail::same_graph(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_rowvec: row operand must be 1 x cols(a)");
  Mat<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  const bool req = a.requires_grad() || row.requires_grad();
  const int id = g.add_node(std::move(out), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, rid = row.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      if (gg.requires_grad(aid)) gg.grad(aid) += go;
      if (gg.requires_grad(rid)) gg.grad(rid).row(0) += go.colwise().sum();
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = detail::same_graph(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions must match");
  const bool req = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(a.value() * b.value(), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, bid = b.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      if (gg.requires_grad(aid)) gg.grad(aid).noalias() += go * gg.value(bid).transpose();
      if (gg.requires_grad(bid)) gg.grad(bid).noalias() += gg.value(aid).transpose() * go;
    });
  }
  return {&g, id};
}

// a * b^T without materializing the transpose on the tape.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = detail::same_graph(a, b);
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts must match");
  const bool req = a.requires_grad() || b.requires_grad();
  const int id = g.add_node(a.value() * b.value().transpose(), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, bid = b.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      if (gg.requires_grad(aid)) gg.grad(aid).noalias() += go * gg.value(bid);
      if (gg.requires_grad(bid)) gg.grad(bid).noalias() += go.transpose() * gg.value(aid);
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  Graph<Scalar>& g = *a.graph;
  const bool req = a.requires_grad();
  const int id = g.add_node(Mat<Scalar>(a.value() * c), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, c](Graph<Scalar>& gg) {
      gg.grad(aid) += gg.grad(id) * c;
    });
  }
  return {&g, id};
}

// Row lookup (embedding gather). Backward scatter-adds, so rows that are
// never gathered receive exactly zero gradient.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<int> rows) {
  Graph<Scalar>& g = *a.graph;
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  Mat<Scalar> out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows())
      throw ValueError("gather_rows: row index " + std::to_string(rows[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  const bool req = a.requires_grad();
  const int id = g.add_node(std::move(out), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, idx = std::move(rows)](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      Mat<Scalar>& ga = gg.grad(aid);
      for (std::size_t i = 0; i < idx.size(); ++i)
        ga.row(idx[i]) += go.row(static_cast<Eigen::Index>(i));
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> col_block(Var<Scalar> a, Eigen::Index start, Eigen::Index len) {
  Graph<Scalar>& g = *a.graph;
  if (start < 0 || len <= 0 || start + len > a.cols())
    throw ShapeError("col_block: block out of range");
  const bool req = a.requires_grad();
  const int id = g.add_node(Mat<Scalar>(a.value().middleCols(start, len)), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id, start, len](Graph<Scalar>& gg) {
      gg.grad(aid).middleCols(start, len) += gg.grad(id);
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Graph<Scalar>& g = *parts[0].graph;
  Eigen::Index total = 0;
  bool req = false;
  for (const auto& p : parts) {
    detail::same_graph(parts[0], p);
    if (p.rows() != parts[0].rows()) throw ShapeError("concat_cols: row counts must match");
    total += p.cols();
    req = req || p.requires_grad();
  }
  Mat<Scalar> out(parts[0].rows(), total);
  Eigen::Index off = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(off);
    widths.push_back(p.cols());
    off += p.cols();
  }
  const int id = g.add_node(std::move(out), req);
  if (req) {
    g.set_backward(id, [id, ids = std::move(ids), offsets = std::move(offsets),
                        widths = std::move(widths)](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (gg.requires_grad(ids[i]))
          gg.grad(ids[i]) += go.middleCols(offsets[i], widths[i]);
    });
  }
  return {&g, id};
}

// Sums scalar (or same-shape) nodes; used to aggregate per-instance losses.
template <typename Scalar>
Var<Scalar> sum_vars(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("sum_vars: no operands");
  Graph<Scalar>& g = *parts[0].graph;
  Mat<Scalar> out = parts[0].value();
  bool req = parts[0].requires_grad();
  std::vector<int> ids{parts[0].id};
  for (std::size_t i = 1; i < parts.size(); ++i) {
    detail::same_graph(parts[0], parts[i]);
    if (parts[i].rows() != parts[0].rows() || parts[i].cols() != parts[0].cols())
      throw ShapeError("sum_vars: operand shapes must match");
    out += parts[i].value();
    req = req || parts[i].requires_grad();
    ids.push_back(parts[i].id);
  }
  const int id = g.add_node(std::move(out), req);
  if (req) {
    g.set_backward(id, [id, ids = std::move(ids)](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      for (int nid : ids)
        if (gg.requires_grad(nid)) gg.grad(nid) += go;
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  Graph<Scalar>& g = *a.graph;
  const bool req = a.requires_grad();
  const int id = g.add_node(softmax_rows(a.value()), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& p = gg.value(id);
      const Mat<Scalar>& go = gg.grad(id);
      Mat<Scalar>& ga = gg.grad(aid);
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const Scalar dot = go.row(r).cwiseProduct(p.row(r)).sum();
        ga.row(r).array() += (go.row(r).array() - dot) * p.row(r).array();
      }
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> layer_norm_rows(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps) {
  Graph<Scalar>& g = detail::same_graph(x, gamma);
  detail::same_graph(x, beta);
  if (gamma.rows() != 1 || beta.rows() != 1 || gamma.cols() != x.cols() ||
      beta.cols() != x.cols())
    throw ShapeError("layer_norm: gamma and beta must be 1 x cols(x)");
  if (!(eps > Scalar(0))) throw ValueError("layer_norm: eps must be positive");
  check_finite(x.value(), "layer_norm");

  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Scalar inv_d = Scalar(1) / Scalar(d);
  Mat<Scalar> xhat(n, d);
  Mat<Scalar> inv_std(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar mean = x.value().row(r).sum() * inv_d;
    const Scalar var = (x.value().row(r).array() - mean).square().sum() * inv_d;
    inv_std(r, 0) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r, 0);
  }
  Mat<Scalar> out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);

  const bool req = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  const int id = g.add_node(std::move(out), req);
  if (req) {
    g.set_backward(id, [id, xid = x.id, gid = gamma.id, bid = beta.id,
                        xhat = std::move(xhat), inv_std = std::move(inv_std),
                        inv_d](Graph<Scalar>& gg) {
      const Mat<Scalar>& go = gg.grad(id);
      if (gg.requires_grad(bid)) gg.grad(bid).row(0) += go.colwise().sum();
      if (gg.requires_grad(gid))
        gg.grad(gid).row(0) += go.cwiseProduct(xhat).colwise().sum();
      if (gg.requires_grad(xid)) {
        Mat<Scalar>& gx = gg.grad(xid);
        const auto gamma_row = gg.value(gid).row(0).array();
        for (Eigen::Index r = 0; r < go.rows(); ++r) {
          const auto h = (go.row(r).array() * gamma_row).eval();
          const Scalar mean_h = h.sum() * inv_d;
          const Scalar mean_hx = (h * xhat.row(r).array()).sum() * inv_d;
          gx.row(r).array() +=
              inv_std(r, 0) * (h - mean_h - xhat.row(r).array() * mean_hx);
        }
      }
    });
  }
  return {&g, id};
}

template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  Graph<Scalar>& g = *a.graph;
  const bool req = a.requires_grad();
  const int id = g.add_node(gelu(a.value()), req);
  if (req) {
    g.set_backward(id, [id, aid = a.id](Graph<Scalar>& gg) {
      const Mat<Scalar>& x = gg.value(aid);
      gg.grad(aid).array() +=
          gg.grad(id).array() *
          x.unaryExpr([](Scalar v) { return gelu_grad_scalar(v); }).array();
    });
  }
  return {&g, id};
}

// Fused sum of cross entropies over all rows; produces a 1x1 node. The
// backward pass is the classic softmax-minus-one-hot form.
template <typename Scalar>
Var<Scalar> cross_entropy_sum(Var<Scalar> logits, std::vector<int> targets) {
  Graph<Scalar>& g = *logits.graph;
  Mat<Scalar> loss(1, 1);
  loss(0, 0) = cross_entropy_sum(logits.value(), std::span<const int>(targets));
  Mat<Scalar> probs = softmax_rows(logits.value());
  const bool req = logits.requires_grad();
  const int id = g.add_node(std::move(loss), req);
  if (req) {
    g.set_backward(id, [id, lid = logits.id, probs = std::move(probs),
                        targets = std::move(targets)](Graph<Scalar>& gg) {
      const Scalar go = gg.grad(id)(0, 0);
      Mat<Scalar>& gl = gg.grad(lid);
      gl += probs * go;
      for (Eigen::Index r = 0; r < gl.rows(); ++r)
        gl(r, targets[static_cast<std::size_t>(r)]) -= go;
    });
  }
  return {&g, id};
}

}  // namespace langsamp
