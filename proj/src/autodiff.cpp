#include "mpctc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mpctc/kernels.hpp"

namespace mpctc {

Tensor random_normal(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.data) x = dist(rng);
  return t;
}

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and pushes contributions into parents' grads.
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> make_op(Tensor value,
                              std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = false;
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")";
}

void require(bool cond, const std::string& op, const Tensor& a,
             const Tensor& b) {
  if (!cond) {
    throw ShapeError(op + ": incompatible operands " + shape_str(a) + " and " +
                     shape_str(b));
  }
}

void accumulate(Node& p, const Tensor& delta) {
  if (!p.requires_grad) return;
  if (p.grad.size() != delta.size()) {
    p.grad = Tensor::zeros(delta.rows, delta.cols);
  }
  for (std::size_t i = 0; i < delta.size(); ++i) p.grad.data[i] += delta.data[i];
}

}  // namespace

Value Value::leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  return Value(std::move(n));
}

const Tensor& Value::tensor() const {
  if (!node_) throw ContractError("use of an undefined value");
  return node_->value;
}

Tensor& Value::mutable_tensor() const {
  if (!node_) throw ContractError("use of an undefined value");
  return node_->value;
}

double Value::item() const {
  const Tensor& t = tensor();
  if (t.rows != 1 || t.cols != 1) {
    throw ShapeError("item() requires a 1x1 value, got " + shape_str(t));
  }
  return t.data[0];
}

bool Value::requires_grad() const { return node_ && node_->requires_grad; }

void Value::set_requires_grad(bool flag) {
  if (!node_) throw ContractError("use of an undefined value");
  if (!node_->is_leaf) {
    throw ContractError("requires_grad can be toggled on leaves only");
  }
  node_->requires_grad = flag;
}

const Tensor& Value::grad() const {
  if (!node_) throw ContractError("use of an undefined value");
  return node_->grad;
}

// ---- ops ------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  const Tensor& ta = a.tensor();
  const Tensor& tb = b.tensor();
  require(ta.cols == tb.rows, "matmul", ta, tb);
  Tensor out(ta.rows, tb.cols);
  kernels::matmul(ta.data.data(), tb.data.data(), out.data.data(), ta.rows,
                  ta.cols, tb.cols);
  return Value(make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const int m = pa.value.rows, k = pa.value.cols, n = pb.value.cols;
    if (pa.requires_grad) {
      Tensor da(m, k);  // dA = dC * B^T
      kernels::matmul_nt(self.grad.data.data(), pb.value.data.data(),
                         da.data.data(), m, n, k);
      accumulate(pa, da);
    }
    if (pb.requires_grad) {
      Tensor db(k, n);  // dB = A^T * dC
      kernels::matmul_tn(pa.value.data.data(), self.grad.data.data(),
                         db.data.data(), m, k, n);
      accumulate(pb, db);
    }
  }));
}

Value matmul_nt(const Value& a, const Value& b) {
  const Tensor& ta = a.tensor();
  const Tensor& tb = b.tensor();
  require(ta.cols == tb.cols, "matmul_nt", ta, tb);
  Tensor out(ta.rows, tb.rows);
  kernels::matmul_nt(ta.data.data(), tb.data.data(), out.data.data(), ta.rows,
                     ta.cols, tb.rows);
  return Value(make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const int m = pa.value.rows, k = pa.value.cols, n = pb.value.rows;
    if (pa.requires_grad) {
      Tensor da(m, k);  // dA = dC * B
      kernels::matmul(self.grad.data.data(), pb.value.data.data(),
                      da.data.data(), m, n, k);
      accumulate(pa, da);
    }
    if (pb.requires_grad) {
      Tensor db(n, k);  // dB = dC^T * A
      kernels::matmul_tn(self.grad.data.data(), pa.value.data.data(),
                         db.data.data(), m, n, k);
      accumulate(pb, db);
    }
  }));
}

Value add(const Value& a, const Value& b) {
  const Tensor& ta = a.tensor();
  const Tensor& tb = b.tensor();
  require(ta.same_shape(tb), "add", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  return Value(make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  }));
}

Value sub(const Value& a, const Value& b) { return add(a, scale(b, -1.0)); }

Value add_row_bias(const Value& x, const Value& bias) {
  const Tensor& tx = x.tensor();
  const Tensor& tb = bias.tensor();
  require(tb.rows == 1 && tb.cols == tx.cols, "add_row_bias", tx, tb);
  Tensor out = tx;
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) out.at(r, c) += tb.at(0, c);
  }
  return Value(make_op(std::move(out), {x.node(), bias.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& pb = *self.parents[1];
    if (pb.requires_grad) {
      Tensor db(1, self.grad.cols);
      for (int r = 0; r < self.grad.rows; ++r) {
        for (int c = 0; c < self.grad.cols; ++c) {
          db.at(0, c) += self.grad.at(r, c);
        }
      }
      accumulate(pb, db);
    }
  }));
}

Value add_const(const Value& x, Tensor c) {
  const Tensor& tx = x.tensor();
  const bool row_broadcast = c.rows == 1 && c.cols == tx.cols;
  require(tx.same_shape(c) || row_broadcast, "add_const", tx, c);
  Tensor out = tx;
  for (int r = 0; r < out.rows; ++r) {
    for (int col = 0; col < out.cols; ++col) {
      out.at(r, col) += row_broadcast ? c.at(0, col) : c.at(r, col);
    }
  }
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
  }));
}

Value scale(const Value& x, double s) {
  Tensor out = x.tensor();
  for (auto& v : out.data) v *= s;
  return Value(make_op(std::move(out), {x.node()}, [s](Node& self) {
    Tensor d = self.grad;
    for (auto& v : d.data) v *= s;
    accumulate(*self.parents[0], d);
  }));
}

Value hadamard(const Value& a, const Value& b) {
  const Tensor& ta = a.tensor();
  const Tensor& tb = b.tensor();
  require(ta.same_shape(tb), "hadamard", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
  return Value(make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= pb.value.data[i];
      accumulate(pa, d);
    }
    if (pb.requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= pa.value.data[i];
      accumulate(pb, d);
    }
  }));
}

Value sigmoid(const Value& x) {
  Tensor out = x.tensor();
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = self.value.data[i];
      d.data[i] *= y * (1.0 - y);
    }
    accumulate(*self.parents[0], d);
  }));
}

Value tanh_op(const Value& x) {
  Tensor out = x.tensor();
  for (auto& v : out.data) v = std::tanh(v);
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = self.value.data[i];
      d.data[i] *= 1.0 - y * y;
    }
    accumulate(*self.parents[0], d);
  }));
}

Value gelu(const Value& x) {
  Tensor out = x.tensor();
  for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    Tensor d = self.grad;
    const Tensor& in = self.parents[0]->value;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = in.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      d.data[i] *= cdf + v * pdf;
    }
    accumulate(*self.parents[0], d);
  }));
}

Value softmax_lastdim(const Value& x) {
  const Tensor& tx = x.tensor();
  Tensor out = tx;
  for (int r = 0; r < out.rows; ++r) {
    double hi = kNegInf;
    for (int c = 0; c < out.cols; ++c) hi = std::max(hi, out.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < out.cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - hi);
      sum += out.at(r, c);
    }
    for (int c = 0; c < out.cols; ++c) out.at(r, c) /= sum;
  }
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    // dx = y * (dy - sum(dy * y)) per row
    Tensor d = self.grad;
    for (int r = 0; r < d.rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < d.cols; ++c) dot += d.at(r, c) * self.value.at(r, c);
      for (int c = 0; c < d.cols; ++c) {
        d.at(r, c) = self.value.at(r, c) * (d.at(r, c) - dot);
      }
    }
    accumulate(*self.parents[0], d);
  }));
}

Value log_softmax_lastdim(const Value& x) {
  const Tensor& tx = x.tensor();
  Tensor out = tx;
  if (out.rows > 0) {
    std::vector<double> lse(out.rows);
    kernels::row_logsumexp(tx.data.data(), lse.data(), tx.rows, tx.cols);
    for (int r = 0; r < out.rows; ++r) {
      for (int c = 0; c < out.cols; ++c) out.at(r, c) -= lse[r];
    }
  }
  return Value(make_op(std::move(out), {x.node()}, [](Node& self) {
    // dx = dy - softmax(x) * sum(dy) per row
    Tensor d = self.grad;
    for (int r = 0; r < d.rows; ++r) {
      double total = 0.0;
      for (int c = 0; c < d.cols; ++c) total += d.at(r, c);
      for (int c = 0; c < d.cols; ++c) {
        d.at(r, c) -= std::exp(self.value.at(r, c)) * total;
      }
    }
    accumulate(*self.parents[0], d);
  }));
}

Value layernorm(const Value& x, const Value& gain, const Value& bias) {
  const Tensor& tx = x.tensor();
  const Tensor& tg = gain.tensor();
  const Tensor& tb = bias.tensor();
  require(tg.rows == 1 && tg.cols == tx.cols, "layernorm", tx, tg);
  require(tb.rows == 1 && tb.cols == tx.cols, "layernorm", tx, tb);
  constexpr double eps = 1e-5;
  Tensor out(tx.rows, tx.cols);
  for (int r = 0; r < tx.rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < tx.cols; ++c) mu += tx.at(r, c);
    mu /= tx.cols;
    double var = 0.0;
    for (int c = 0; c < tx.cols; ++c) {
      const double d = tx.at(r, c) - mu;
      var += d * d;
    }
    var /= tx.cols;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < tx.cols; ++c) {
      out.at(r, c) =
          (tx.at(r, c) - mu) * inv_sigma * tg.at(0, c) + tb.at(0, c);
    }
  }
  return Value(make_op(std::move(out), {x.node(), gain.node(), bias.node()},
                       [](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const Tensor& tx = px.value;
    const Tensor& tg = pg.value;
    constexpr double eps = 1e-5;
    Tensor dx(tx.rows, tx.cols);
    Tensor dg(1, tx.cols);
    Tensor db(1, tx.cols);
    for (int r = 0; r < tx.rows; ++r) {
      double mu = 0.0;
      for (int c = 0; c < tx.cols; ++c) mu += tx.at(r, c);
      mu /= tx.cols;
      double var = 0.0;
      for (int c = 0; c < tx.cols; ++c) {
        const double d = tx.at(r, c) - mu;
        var += d * d;
      }
      var /= tx.cols;
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      // xhat = (x - mu) / sigma; dxhat = dy * gain
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int c = 0; c < tx.cols; ++c) {
        const double xhat = (tx.at(r, c) - mu) * inv_sigma;
        const double dy = self.grad.at(r, c);
        const double dxhat = dy * tg.at(0, c);
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
        dg.at(0, c) += dy * xhat;
        db.at(0, c) += dy;
      }
      mean_dxhat /= tx.cols;
      mean_dxhat_xhat /= tx.cols;
      for (int c = 0; c < tx.cols; ++c) {
        const double xhat = (tx.at(r, c) - mu) * inv_sigma;
        const double dxhat = self.grad.at(r, c) * tg.at(0, c);
        dx.at(r, c) =
            (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_sigma;
      }
    }
    accumulate(px, dx);
    accumulate(pg, dg);
    accumulate(pb, db);
  }));
}

Value embedding_lookup(const Value& table, const std::vector<int>& ids) {
  const Tensor& tt = table.tensor();
  for (int id : ids) {
    if (id < 0 || id >= tt.rows) {
      throw ShapeError("embedding_lookup: id " + std::to_string(id) +
                       " outside table with " + std::to_string(tt.rows) +
                       " rows");
    }
  }
  Tensor out(static_cast<int>(ids.size()), tt.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (int c = 0; c < tt.cols; ++c) {
      out.at(static_cast<int>(r), c) = tt.at(ids[r], c);
    }
  }
  return Value(make_op(std::move(out), {table.node()}, [ids](Node& self) {
    Node& pt = *self.parents[0];
    if (!pt.requires_grad) return;
    Tensor dt(pt.value.rows, pt.value.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (int c = 0; c < dt.cols; ++c) {
        dt.at(ids[r], c) += self.grad.at(static_cast<int>(r), c);
      }
    }
    accumulate(pt, dt);
  }));
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  int cols = -1;
  int rows = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    const Tensor& t = p.tensor();
    if (cols < 0) cols = t.cols;
    if (t.cols != cols) {
      throw ShapeError("concat_rows: column counts differ");
    }
    rows += t.rows;
    parents.push_back(p.node());
  }
  Tensor out(rows, cols);
  int at_row = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.tensor();
    std::copy(t.data.begin(), t.data.end(),
              out.data.begin() + std::size_t(at_row) * cols);
    at_row += t.rows;
  }
  return Value(make_op(std::move(out), std::move(parents), [](Node& self) {
    int at_row = 0;
    for (auto& p : self.parents) {
      const int r = p->value.rows;
      if (p->requires_grad && r > 0) {
        Tensor d(r, p->value.cols);
        std::copy(self.grad.data.begin() + std::size_t(at_row) * d.cols,
                  self.grad.data.begin() + std::size_t(at_row + r) * d.cols,
                  d.data.begin());
        accumulate(*p, d);
      }
      at_row += r;
    }
  }));
}

Value slice_rows(const Value& x, int begin, int count) {
  const Tensor& tx = x.tensor();
  if (begin < 0 || count < 0 || begin + count > tx.rows) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " +
                     std::to_string(tx.rows) + " rows");
  }
  Tensor out(count, tx.cols);
  std::copy(tx.data.begin() + std::size_t(begin) * tx.cols,
            tx.data.begin() + std::size_t(begin + count) * tx.cols,
            out.data.begin());
  return Value(make_op(std::move(out), {x.node()}, [begin](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor d(px.value.rows, px.value.cols);
    std::copy(self.grad.data.begin(), self.grad.data.end(),
              d.data.begin() + std::size_t(begin) * d.cols);
    accumulate(px, d);
  }));
}

Value mean(const Value& x) {
  const Tensor& tx = x.tensor();
  if (tx.size() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : tx.data) acc += v;
  const double inv = 1.0 / static_cast<double>(tx.size());
  return Value(make_op(Tensor::scalar(acc * inv), {x.node()},
                       [inv](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    Tensor d = Tensor::full(px.value.rows, px.value.cols,
                            self.grad.data[0] * inv);
    accumulate(px, d);
  }));
}

Value cross_entropy(const Value& logits,
                    const std::vector<std::pair<int, int>>& row_labels) {
  const Tensor& tl = logits.tensor();
  if (row_labels.empty()) {
    throw ContractError("cross_entropy needs at least one (row, label) pair");
  }
  for (auto [r, lab] : row_labels) {
    if (r < 0 || r >= tl.rows || lab < 0 || lab >= tl.cols) {
      throw ShapeError("cross_entropy: (row, label) outside logits");
    }
  }
  std::vector<double> lse(tl.rows);
  kernels::row_logsumexp(tl.data.data(), lse.data(), tl.rows, tl.cols);
  double total = 0.0;
  for (auto [r, lab] : row_labels) total += lse[r] - tl.at(r, lab);
  const double inv = 1.0 / static_cast<double>(row_labels.size());
  return Value(make_op(Tensor::scalar(total * inv), {logits.node()},
                       [row_labels, lse, inv](Node& self) {
    Node& pl = *self.parents[0];
    if (!pl.requires_grad) return;
    const double up = self.grad.data[0] * inv;
    Tensor d(pl.value.rows, pl.value.cols);
    for (auto [r, lab] : row_labels) {
      for (int c = 0; c < d.cols; ++c) {
        d.at(r, c) += up * std::exp(pl.value.at(r, c) - lse[r]);
      }
      d.at(r, lab) -= up;
    }
    accumulate(pl, d);
  }));
}

Value cross_entropy(const Value& logits, int label) {
  return cross_entropy(logits, {{0, label}});
}

std::pair<Value, Value> scaled_dot_attention(const Value& q, const Value& k,
                                             const Value& v,
                                             const Tensor* additive_mask) {
  const int d = q.cols();
  require(k.cols() == d, "scaled_dot_attention", q.tensor(), k.tensor());
  require(k.rows() == v.rows(), "scaled_dot_attention", k.tensor(),
          v.tensor());
  Value scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(double(d)));
  if (additive_mask != nullptr) {
    scores = add_const(scores, *additive_mask);
  }
  Value weights = softmax_lastdim(scores);
  return {matmul(weights, v), weights};
}

Value gated_recurrent_cell(const Value& x, const Value& h,
                           const GruParams& p) {
  Value r = sigmoid(add_row_bias(add(matmul(x, p.w_reset), matmul(h, p.u_reset)),
                                 p.b_reset));
  Value z = sigmoid(add_row_bias(
      add(matmul(x, p.w_update), matmul(h, p.u_update)), p.b_update));
  Value cand = tanh_op(add_row_bias(
      add(matmul(x, p.w_cand), hadamard(r, matmul(h, p.u_cand))), p.b_cand));
  // h' = cand + z * (h - cand)
  return add(cand, hadamard(z, sub(h, cand)));
}

Value custom_scalar(const Value& input, double value, Tensor grad_wrt_input) {
  require(input.tensor().same_shape(grad_wrt_input), "custom_scalar",
          input.tensor(), grad_wrt_input);
  return Value(make_op(Tensor::scalar(value), {input.node()},
                       [g = std::move(grad_wrt_input)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor d = g;
    const double up = self.grad.data[0];
    for (auto& x : d.data) x *= up;
    accumulate(p, d);
  }));
}

// ---- backward --------------------------------------------------------------

namespace {

// Runs the reverse pass and returns the set of nodes it visited.
std::unordered_set<Node*> backward_impl(const Value& root) {
  if (!root.defined()) throw ContractError("backward on an undefined value");
  const Tensor& rt = root.tensor();
  if (rt.rows != 1 || rt.cols != 1) {
    throw ContractError("backward root must be scalar, got " +
                        shape_str(rt));
  }

  // Iterative post-order topological sort (deterministic: parents visited in
  // construction order).
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  for (Node* n : topo) {
    n->grad = Tensor::zeros(n->value.rows, n->value.cols);
  }
  root.node()->grad = Tensor::scalar(1.0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (!n->requires_grad || n->is_leaf || !n->backward_fn) continue;
    n->backward_fn(*n);
  }
  return visited;
}

}  // namespace

void backward(const Value& root) { backward_impl(root); }

Value ParameterSet::add(const std::string& name, Tensor init,
                        bool requires_grad) {
  if (index_.count(name)) {
    throw ContractError("duplicate parameter name: " + name);
  }
  Value v = Value::leaf(std::move(init), requires_grad && !frozen_);
  index_[name] = static_cast<int>(items_.size());
  items_.push_back({name, v});
  return v;
}

Value ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("unknown parameter: " + name);
  }
  return items_[it->second].value;
}

bool ParameterSet::has(const std::string& name) const {
  return index_.count(name) > 0;
}

std::size_t ParameterSet::total_entries() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.tensor().size();
  return n;
}

void ParameterSet::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : items_) p.value.set_requires_grad(!frozen);
}

void ParameterSet::absorb(const std::string& prefix,
                          const ParameterSet& other) {
  for (const auto& p : other.items()) {
    const std::string name = prefix + p.name;
    if (index_.count(name)) {
      throw ContractError("duplicate parameter name: " + name);
    }
    index_[name] = static_cast<int>(items_.size());
    items_.push_back({name, p.value});
  }
}

GradientMap backward(const Value& root, const ParameterSet& params) {
  const std::unordered_set<Node*> visited = backward_impl(root);
  GradientMap grads;
  for (const auto& p : params.items()) {
    if (!p.value.requires_grad()) continue;
    if (visited.count(p.value.node().get())) {
      grads[p.name] = p.value.grad();
    } else {
      // Parameter did not participate in this graph.
      grads[p.name] =
          Tensor::zeros(p.value.tensor().rows, p.value.tensor().cols);
    }
  }
  return grads;
}

void sgd_step(ParameterSet& params, const GradientMap& grads,
              SgdState& state) {
  for (auto& p : params.items()) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    for (double x : g.data) {
      if (std::isnan(x)) {
        throw ContractError("NaN gradient in parameter " + p.name);
      }
    }
    Tensor& data = p.value.mutable_tensor();
    if (state.momentum != 0.0) {
      Tensor& v = state.velocity.try_emplace(p.name, Tensor::zeros(g.rows,
                                                                   g.cols))
                      .first->second;
      for (std::size_t i = 0; i < data.size(); ++i) {
        v.data[i] = state.momentum * v.data[i] + g.data[i];
        data.data[i] -= state.learning_rate * v.data[i];
      }
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) {
        data.data[i] -= state.learning_rate * g.data[i];
      }
    }
  }
}

}  // namespace mpctc
