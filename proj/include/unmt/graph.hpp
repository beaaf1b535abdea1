#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "unmt/common.hpp"
#include "unmt/tensor.hpp"

namespace unmt {

using NodeId = int;

enum class Op {
  leaf,
  matmul,
  add,            // elementwise, or row-broadcast of the second operand
  multiply,       // elementwise
  tanh_fn,
  sigmoid_fn,
  concat,         // n-ary, along rows (axis 0) or columns (axis 1)
  row_lookup,
  scale,
  dropout_mask,   // elementwise multiply by a pregenerated mask
  softmax_rows,
  cross_entropy,
  reshape,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::multiply: return "multiply";
    case Op::tanh_fn: return "tanh";
    case Op::sigmoid_fn: return "sigmoid";
    case Op::concat: return "concat";
    case Op::row_lookup: return "row-lookup";
    case Op::scale: return "scalar-scale";
    case Op::dropout_mask: return "dropout-mask-apply";
    case Op::softmax_rows: return "softmax-rows";
    case Op::cross_entropy: return "cross-entropy";
    case Op::reshape: return "reshape";
  }
  return "?";
}

// Reverse-mode computation tape. Nodes are appended in topological order and
// evaluated eagerly; backward() walks the tape in exact reverse order.
// Parameter leaves reference external tensors, so recompute() re-reads them,
// which is what finite_difference_check() relies on.
//
// A Graph belongs to one thread of control; distinct graphs over shared
// read-only parameters may run concurrently.
template <class T>
class Graph {
 public:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> in;
    int axis = 0;        // concat
    int index = -1;      // row_lookup row, cross_entropy target
    T factor = T(0);     // scale
    Tensor<T> value;     // owned value; unused for bound parameter leaves
    Tensor<T> grad;
    const Tensor<T>* bound = nullptr;
    Tensor<T>* mutable_bound = nullptr;
    bool is_param = false;
    std::string name;
  };

  explicit Graph(double probability_floor = 1e-12)
      : prob_floor_(probability_floor) {}

  // --- leaves ---------------------------------------------------------

  NodeId parameter(Tensor<T>& storage, std::string name) {
    NodeId id = add_leaf(&storage, std::move(name));
    nodes_[id].mutable_bound = &storage;
    return id;
  }

  NodeId parameter(const Tensor<T>& storage, std::string name) {
    return add_leaf(&storage, std::move(name));
  }

  NodeId input(Tensor<T> value, std::string name = "") {
    require(value.numel() > 0, "graph input '", name, "' is empty");
    require(value.all_finite(), "graph input '", name, "' is not finite");
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  // --- primitives -----------------------------------------------------

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    require(A.cols() == B.rows(), "matmul: inner dimensions differ (",
            A.shape_str(), " vs ", B.shape_str(), ")");
    return push(Op::matmul, {a, b});
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    const bool same = A.same_shape(B);
    const bool broadcast = B.rows() == 1 && A.cols() == B.cols();
    require(same || broadcast, "add: shape mismatch (", A.shape_str(), " vs ",
            B.shape_str(), ")");
    return push(Op::add, {a, b});
  }

  NodeId multiply(NodeId a, NodeId b) {
    require(val(a).same_shape(val(b)), "multiply: shape mismatch (",
            val(a).shape_str(), " vs ", val(b).shape_str(), ")");
    return push(Op::multiply, {a, b});
  }

  NodeId tanh_of(NodeId a) { return push(Op::tanh_fn, {a}); }

  NodeId sigmoid_of(NodeId a) { return push(Op::sigmoid_fn, {a}); }

  NodeId concat(const std::vector<NodeId>& parts, int axis) {
    require(!parts.empty(), "concat: no inputs");
    require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
    const Tensor<T>& first = val(parts[0]);
    for (NodeId p : parts) {
      const Tensor<T>& t = val(p);
      if (axis == 0) {
        require(t.cols() == first.cols(), "concat rows: column count differs (",
                first.shape_str(), " vs ", t.shape_str(), ")");
      } else {
        require(t.rows() == first.rows(), "concat cols: row count differs (",
                first.shape_str(), " vs ", t.shape_str(), ")");
      }
    }
    return push(Op::concat, parts, axis);
  }

  NodeId row_lookup(NodeId matrix, int row) {
    const Tensor<T>& M = val(matrix);
    require(row >= 0 && static_cast<std::size_t>(row) < M.rows(),
            "row-lookup: row ", row, " out of range for ", M.shape_str());
    NodeId id = push_unevaluated(Op::row_lookup, {matrix});
    nodes_[id].index = row;
    evaluate(id);
    return id;
  }

  NodeId scale(NodeId a, T factor) {
    NodeId id = push_unevaluated(Op::scale, {a});
    nodes_[id].factor = factor;
    evaluate(id);
    return id;
  }

  NodeId dropout_apply(NodeId a, NodeId mask) {
    require(val(a).same_shape(val(mask)), "dropout-mask-apply: shape mismatch (",
            val(a).shape_str(), " vs ", val(mask).shape_str(), ")");
    return push(Op::dropout_mask, {a, mask});
  }

  NodeId softmax_rows(NodeId a) {
    require(val(a).cols() >= 1 && val(a).numel() > 0,
            "softmax-rows: empty row");
    return push(Op::softmax_rows, {a});
  }

  NodeId cross_entropy(NodeId probabilities, int target_index) {
    const Tensor<T>& p = val(probabilities);
    require(p.rows() == 1, "cross-entropy: expected a probability row, got ",
            p.shape_str());
    require(target_index >= 0 &&
                static_cast<std::size_t>(target_index) < p.cols(),
            "cross-entropy: target index ", target_index,
            " out of range for row of length ", p.cols());
    NodeId id = push_unevaluated(Op::cross_entropy, {probabilities});
    nodes_[id].index = target_index;
    evaluate(id);
    return id;
  }

  NodeId reshape(NodeId a, std::size_t rows, std::size_t cols) {
    require(val(a).numel() == rows * cols, "reshape: cannot view ",
            val(a).shape_str(), " as ", rows, "x", cols);
    NodeId id = push_unevaluated(Op::reshape, {a});
    nodes_[id].index = static_cast<int>(rows);
    evaluate(id);
    return id;
  }

  // --- evaluation and differentiation ----------------------------------

  const Tensor<T>& value(NodeId id) const { return val(id); }

  const Tensor<T>& gradient(NodeId id) const { return nodes_[id].grad; }

  void set_output(NodeId id) {
    require(val(id).is_scalar(), "graph output must be scalar, node #", id,
            " has shape ", val(id).shape_str());
    output_ = id;
  }

  NodeId output() const { return output_; }

  std::size_t size() const { return nodes_.size(); }

  double probability_floor() const { return prob_floor_; }

  // Re-evaluates every non-leaf node in tape order, re-reading bound
  // parameter storage.
  void recompute() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::leaf) evaluate(static_cast<NodeId>(i));
    }
  }

  // Gradients of the scalar output with respect to every node; parameters
  // never touched by the output keep zero gradients.
  void backward() {
    require(output_ >= 0, "backward: no output designated");
    require(val(output_).is_scalar(), "backward: output is not scalar");
    for (auto& n : nodes_) {
      const Tensor<T>& v = n.bound ? *n.bound : n.value;
      n.grad = Tensor<T>(v.rows(), v.cols());
    }
    nodes_[output_].grad[0] = T(1);
    for (NodeId id = output_; id >= 0; --id) {
      accumulate_inputs(id);
    }
  }

  struct FdReport {
    double max_rel_error = 0.0;
    std::string parameter;
    std::size_t flat_index = 0;
  };

  // Central finite differences over every mutable parameter entry, compared
  // against backward(). Relative error uses max(|analytic|, |numeric|, 1e-8).
  FdReport finite_difference_check(double step) {
    require(output_ >= 0, "finite differences: no output designated");
    backward();
    FdReport report;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      Node& n = nodes_[id];
      if (!n.is_param) continue;
      require(n.mutable_bound != nullptr,
              "finite differences: parameter '", n.name,
              "' is bound read-only");
      Tensor<T>& storage = *n.mutable_bound;
      for (std::size_t i = 0; i < storage.numel(); ++i) {
        const T saved = storage[i];
        storage[i] = saved + static_cast<T>(step);
        recompute();
        const double up = static_cast<double>(val(output_)[0]);
        storage[i] = saved - static_cast<T>(step);
        recompute();
        const double down = static_cast<double>(val(output_)[0]);
        storage[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = static_cast<double>(n.grad[i]);
        const double denom =
            std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(analytic - numeric) / denom;
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.parameter = n.name;
          report.flat_index = i;
        }
      }
    }
    recompute();
    return report;
  }

 private:
  std::vector<Node> nodes_;
  NodeId output_ = -1;
  double prob_floor_;

  NodeId add_leaf(const Tensor<T>* storage, std::string name) {
    require(storage->numel() > 0, "parameter '", name, "' is empty");
    require(storage->all_finite(), "parameter '", name, "' is not finite");
    Node n;
    n.op = Op::leaf;
    n.bound = storage;
    n.is_param = true;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  const Tensor<T>& val(NodeId id) const {
    const Node& n = nodes_[id];
    return n.bound ? *n.bound : n.value;
  }

  NodeId push_unevaluated(Op op, std::vector<NodeId> in, int axis = 0) {
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.axis = axis;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId push(Op op, std::vector<NodeId> in, int axis = 0) {
    NodeId id = push_unevaluated(op, std::move(in), axis);
    evaluate(id);
    return id;
  }

  void evaluate(NodeId id) {
    Node& n = nodes_[id];
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const Tensor<T>& A = val(n.in[0]);
        const Tensor<T>& B = val(n.in[1]);
        n.value = Tensor<T>(A.rows(), B.cols());
        add_matmul(n.value, A, false, B, false);
        break;
      }
      case Op::add: {
        const Tensor<T>& A = val(n.in[0]);
        const Tensor<T>& B = val(n.in[1]);
        n.value = A;
        if (A.same_shape(B)) {
          for (std::size_t i = 0; i < A.numel(); ++i) n.value[i] += B[i];
        } else {
          for (std::size_t r = 0; r < A.rows(); ++r) {
            for (std::size_t c = 0; c < A.cols(); ++c) {
              n.value.at(r, c) += B[c];
            }
          }
        }
        break;
      }
      case Op::multiply:
      case Op::dropout_mask: {
        const Tensor<T>& A = val(n.in[0]);
        const Tensor<T>& B = val(n.in[1]);
        n.value = A;
        for (std::size_t i = 0; i < A.numel(); ++i) n.value[i] *= B[i];
        break;
      }
      case Op::tanh_fn: {
        n.value = val(n.in[0]);
        for (T& v : n.value.data) v = std::tanh(v);
        break;
      }
      case Op::sigmoid_fn: {
        n.value = val(n.in[0]);
        for (T& v : n.value.data) v = T(1) / (T(1) + std::exp(-v));
        break;
      }
      case Op::concat: {
        if (n.axis == 0) {
          std::size_t rows = 0;
          const std::size_t cols = val(n.in[0]).cols();
          for (NodeId p : n.in) rows += val(p).rows();
          n.value = Tensor<T>(rows, cols);
          std::size_t r0 = 0;
          for (NodeId p : n.in) {
            const Tensor<T>& t = val(p);
            std::copy(t.data.begin(), t.data.end(),
                      n.value.data.begin() + r0 * cols);
            r0 += t.rows();
          }
        } else {
          std::size_t cols = 0;
          const std::size_t rows = val(n.in[0]).rows();
          for (NodeId p : n.in) cols += val(p).cols();
          n.value = Tensor<T>(rows, cols);
          std::size_t c0 = 0;
          for (NodeId p : n.in) {
            const Tensor<T>& t = val(p);
            for (std::size_t r = 0; r < rows; ++r) {
              std::copy(t.data.begin() + r * t.cols(),
                        t.data.begin() + (r + 1) * t.cols(),
                        n.value.data.begin() + r * cols + c0);
            }
            c0 += t.cols();
          }
        }
        break;
      }
      case Op::row_lookup: {
        const Tensor<T>& M = val(n.in[0]);
        n.value = Tensor<T>(1, M.cols());
        const std::size_t r = static_cast<std::size_t>(n.index);
        std::copy(M.data.begin() + r * M.cols(),
                  M.data.begin() + (r + 1) * M.cols(), n.value.data.begin());
        break;
      }
      case Op::scale: {
        n.value = val(n.in[0]);
        for (T& v : n.value.data) v *= n.factor;
        break;
      }
      case Op::softmax_rows: {
        const Tensor<T>& A = val(n.in[0]);
        n.value = A;
        for (std::size_t r = 0; r < A.rows(); ++r) {
          T* row = n.value.data.data() + r * A.cols();
          T mx = row[0];
          for (std::size_t c = 1; c < A.cols(); ++c) mx = std::max(mx, row[c]);
          T sum = T(0);
          for (std::size_t c = 0; c < A.cols(); ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
          }
          for (std::size_t c = 0; c < A.cols(); ++c) row[c] /= sum;
        }
        break;
      }
      case Op::cross_entropy: {
        const Tensor<T>& p = val(n.in[0]);
        const double q = std::max(static_cast<double>(p[n.index]), prob_floor_);
        n.value = Tensor<T>(1, 1);
        n.value[0] = static_cast<T>(-std::log(q));
        break;
      }
      case Op::reshape: {
        const Tensor<T>& A = val(n.in[0]);
        const std::size_t rows = static_cast<std::size_t>(n.index);
        n.value = A;
        n.value.shape = {rows, A.numel() / rows};
        break;
      }
    }
    if (n.op != Op::leaf) {
      require(n.value.all_finite(), "non-finite values produced by ",
              op_name(n.op), " node #", id);
    }
  }

  void accumulate_inputs(NodeId id) {
    Node& n = nodes_[id];
    const Tensor<T>& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        // dA += g * B^T ; dB += A^T * g
        add_matmul(nodes_[n.in[0]].grad, g, false, val(n.in[1]), true);
        add_matmul(nodes_[n.in[1]].grad, val(n.in[0]), true, g, false);
        break;
      }
      case Op::add: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        Tensor<T>& db = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        if (db.same_shape(g)) {
          for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i];
        } else {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
              db[c] += g.at(r, c);
            }
          }
        }
        break;
      }
      case Op::multiply:
      case Op::dropout_mask: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        Tensor<T>& db = nodes_[n.in[1]].grad;
        const Tensor<T>& A = val(n.in[0]);
        const Tensor<T>& B = val(n.in[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * B[i];
          db[i] += g[i] * A[i];
        }
        break;
      }
      case Op::tanh_fn: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * (T(1) - n.value[i] * n.value[i]);
        }
        break;
      }
      case Op::sigmoid_fn: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) {
          da[i] += g[i] * n.value[i] * (T(1) - n.value[i]);
        }
        break;
      }
      case Op::concat: {
        if (n.axis == 0) {
          std::size_t r0 = 0;
          for (NodeId p : n.in) {
            Tensor<T>& dp = nodes_[p].grad;
            const std::size_t cols = dp.cols();
            for (std::size_t i = 0; i < dp.numel(); ++i) {
              dp[i] += g.data[r0 * cols + i];
            }
            r0 += dp.rows();
          }
        } else {
          std::size_t c0 = 0;
          for (NodeId p : n.in) {
            Tensor<T>& dp = nodes_[p].grad;
            for (std::size_t r = 0; r < dp.rows(); ++r) {
              for (std::size_t c = 0; c < dp.cols(); ++c) {
                dp.at(r, c) += g.at(r, c0 + c);
              }
            }
            c0 += dp.cols();
          }
        }
        break;
      }
      case Op::row_lookup: {
        Tensor<T>& dm = nodes_[n.in[0]].grad;
        const std::size_t r = static_cast<std::size_t>(n.index);
        for (std::size_t c = 0; c < g.cols(); ++c) dm.at(r, c) += g[c];
        break;
      }
      case Op::scale: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.factor;
        break;
      }
      case Op::softmax_rows: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        const Tensor<T>& y = n.value;
        for (std::size_t r = 0; r < y.rows(); ++r) {
          T dot = T(0);
          for (std::size_t c = 0; c < y.cols(); ++c) {
            dot += g.at(r, c) * y.at(r, c);
          }
          for (std::size_t c = 0; c < y.cols(); ++c) {
            da.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
          }
        }
        break;
      }
      case Op::cross_entropy: {
        Tensor<T>& dp = nodes_[n.in[0]].grad;
        const Tensor<T>& p = val(n.in[0]);
        const double q = static_cast<double>(p[n.index]);
        if (q >= prob_floor_) {
          dp[n.index] += g[0] * static_cast<T>(-1.0 / q);
        }
        break;
      }
      case Op::reshape: {
        Tensor<T>& da = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        break;
      }
    }
  }

  // out += op(A) * op(B), plain loops; tensors are toy-sized.
  static void add_matmul(Tensor<T>& out, const Tensor<T>& A, bool ta,
                         const Tensor<T>& B, bool tb) {
    const std::size_t n = ta ? A.cols() : A.rows();
    const std::size_t k = ta ? A.rows() : A.cols();
    const std::size_t m = tb ? B.rows() : B.cols();
    if (!ta && !tb) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* arow = A.data.data() + i * k;
        T* orow = out.data.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T a = arow[kk];
          if (a == T(0)) continue;
          const T* brow = B.data.data() + kk * m;
          for (std::size_t j = 0; j < m; ++j) orow[j] += a * brow[j];
        }
      }
    } else if (ta && !tb) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = A.data.data() + kk * n;
        const T* brow = B.data.data() + kk * m;
        for (std::size_t i = 0; i < n; ++i) {
          const T a = arow[i];
          if (a == T(0)) continue;
          T* orow = out.data.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) orow[j] += a * brow[j];
        }
      }
    } else if (!ta && tb) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* arow = A.data.data() + i * k;
        T* orow = out.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          const T* brow = B.data.data() + j * k;
          T acc = T(0);
          for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
          orow[j] += acc;
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        T* orow = out.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          T acc = T(0);
          for (std::size_t kk = 0; kk < k; ++kk) {
            acc += A.at(kk, i) * B.at(j, kk);
          }
          orow[j] += acc;
        }
      }
    }
  }
};

}  // namespace unmt
