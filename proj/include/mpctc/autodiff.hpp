#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mpctc/common.hpp"

namespace mpctc {

// Dense row-major matrix of doubles. Vectors are 1 x n rows, scalars 1 x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor row(std::vector<double> v) {
    Tensor t;
    t.rows = 1;
    t.cols = static_cast<int>(v.size());
    t.data = std::move(v);
    return t;
  }

  std::size_t size() const { return data.size(); }
  double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

Tensor random_normal(int rows, int cols, double stddev, Rng& rng);

namespace detail {
struct Node;
}

// Handle to a node of the computation graph. Copies share the node.
class Value {
 public:
  Value() = default;

  // Leaf carrying data; gradients flow into it when requires_grad is set.
  static Value leaf(Tensor t, bool requires_grad);
  static Value constant(Tensor t) { return leaf(std::move(t), false); }
  static Value scalar(double v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& tensor() const;
  // Handle semantics: mutates the shared node's payload in place.
  Tensor& mutable_tensor() const;
  int rows() const { return tensor().rows; }
  int cols() const { return tensor().cols; }
  double item() const;  // 1 x 1 only

  bool requires_grad() const;
  void set_requires_grad(bool flag);  // leaves only

  // Gradient accumulated by the most recent backward pass over this graph.
  const Tensor& grad() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Value(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- Operator set -------------------------------------------------------

Value matmul(const Value& a, const Value& b);     // (m,k)x(k,n)
Value matmul_nt(const Value& a, const Value& b);  // (m,k)x(n,k)^T
Value add(const Value& a, const Value& b);        // same shape
Value sub(const Value& a, const Value& b);
Value add_row_bias(const Value& x, const Value& bias);  // bias 1 x cols
Value add_const(const Value& x, Tensor c);  // same shape or 1 x cols
Value scale(const Value& x, double s);
Value hadamard(const Value& a, const Value& b);
Value sigmoid(const Value& x);
Value tanh_op(const Value& x);
Value gelu(const Value& x);
Value softmax_lastdim(const Value& x);
Value log_softmax_lastdim(const Value& x);
Value layernorm(const Value& x, const Value& gain, const Value& bias);
Value embedding_lookup(const Value& table, const std::vector<int>& ids);
Value concat_rows(const std::vector<Value>& parts);
Value slice_rows(const Value& x, int begin, int count);
Value mean(const Value& x);  // scalar mean over all entries

// Mean negative log-likelihood over (row, label) pairs.
Value cross_entropy(const Value& logits,
                    const std::vector<std::pair<int, int>>& row_labels);
Value cross_entropy(const Value& logits, int label);  // single-row logits

// softmax(q k^T / sqrt(d) + mask) v; returns the output and the attention
// weights. mask, when present, is added to the scores (use -inf to forbid).
std::pair<Value, Value> scaled_dot_attention(const Value& q, const Value& k,
                                             const Value& v,
                                             const Tensor* additive_mask);

struct GruParams {
  Value w_reset, u_reset, b_reset;
  Value w_update, u_update, b_update;
  Value w_cand, u_cand, b_cand;
};

// One step of a gated recurrent cell: x is 1 x d_in, h is 1 x d_hidden.
Value gated_recurrent_cell(const Value& x, const Value& h,
                           const GruParams& p);

// Generic escape hatch for lattice losses: a scalar node whose gradient
// w.r.t. `input` was computed analytically by the caller.
Value custom_scalar(const Value& input, double value, Tensor grad_wrt_input);

// ---- Backward pass ------------------------------------------------------

// Reverse-mode accumulation from a scalar root. Gradients of every node in
// the graph are reset at the start of the pass, then summed over fan-out.
void backward(const Value& root);

struct Parameter {
  std::string name;
  Value value;
};

class ParameterSet {
 public:
  Value add(const std::string& name, Tensor init, bool requires_grad = true);
  Value get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t total_entries() const;

  // Toggles requires_grad on every parameter (freezing an embedder).
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  void absorb(const std::string& prefix, const ParameterSet& other);

 private:
  std::vector<Parameter> items_;
  std::map<std::string, int> index_;
  bool frozen_ = false;
};

using GradientMap = std::map<std::string, Tensor>;

// backward() from root, then gradients keyed by parameter name; parameters
// that do not participate in the graph get zero entries.
GradientMap backward(const Value& root, const ParameterSet& params);

struct SgdState {
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::map<std::string, Tensor> velocity;
};

// p <- p - lr * (momentum * v + g). Throws ContractError naming the
// parameter if a gradient contains NaN.
void sgd_step(ParameterSet& params, const GradientMap& grads, SgdState& state);

}  // namespace mpctc
