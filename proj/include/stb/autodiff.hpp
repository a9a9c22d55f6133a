#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stb/tensor.hpp"

namespace stb {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns the storage.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const;
  size_t size() const;
  Tape* tape() const { return tape_; }
  size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* t, size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  size_t id_ = static_cast<size_t>(-1);
};

// Recorded operation graph for one forward pass. Nodes are appended in
// execution order, so parents always precede children; the backward sweep
// walks ids in reverse and therefore visits each node exactly once.
// Every recorded value is checked for NaN/Inf on entry.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  Var input(Tensor value) { return record("input", std::move(value), nullptr); }
  Var record(const char* op, Tensor value, BackwardFn fn);

  const Tensor& value(size_t id) const { return nodes_[id].value; }
  const Shape& shape(size_t id) const { return nodes_[id].value.shape(); }

  // Gradient accumulator, allocated and zeroed on first touch.
  Tensor& grad_acc(size_t id);
  bool grad_touched(size_t id) const { return nodes_[id].grad_set; }

  // Gradient of v after backward(); exact zeros if v never participated.
  Tensor grad(const Var& v) const;

  // Reverse sweep from a scalar loss.
  void backward(const Var& loss);

  // Labels non-finite-value errors with caller context (e.g. fusion layer).
  void set_context(std::string ctx) { context_ = std::move(ctx); }
  const std::string& context() const { return context_; }

  size_t node_count() const { return nodes_.size(); }
  // Largest single tensor recorded; used by allocation-scaling audits.
  size_t max_tensor_elems() const { return max_elems_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_set = false;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  size_t max_elems_ = 0;
  std::string context_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Shape& Var::shape() const { return tape_->shape(id_); }
inline size_t Var::size() const { return value().size(); }

// ---- Operations ------------------------------------------------------
// All ops evaluate eagerly and push a backward closure. Shape errors report
// both shapes. Unless stated otherwise, inputs must share one tape.

Var add(Var a, Var b);                 // same shape
Var sub(Var a, Var b);                 // same shape
Var mul(Var a, Var b);                 // elementwise, same shape
Var scale(Var a, double c);
Var add_rowvec(Var x, Var b);          // b: [d], broadcast over leading dims

// a: [..., m, k]; b: [k, n] (shared) or [..., k, n] (batched, equal leading).
Var matmul(Var a, Var b);
Var transpose_last2(Var a);
Var reshape(Var a, Shape s);
// NumPy-style right-aligned broadcast; source dims must be 1 or match.
Var broadcast_to(Var a, Shape target);
Var concat_last(const std::vector<Var>& parts);
Var slice_last(Var a, size_t lo, size_t hi);  // columns [lo, hi) of last dim

Var relu(Var a);
Var sigmoid(Var a);
Var softmax_last(Var a);               // max-subtraction stabilized
Var layer_norm(Var x, Var gain, Var bias, double eps);

Var sum_all(Var a);                    // -> scalar
Var mean_all(Var a);                   // -> scalar
Var sum_squares(Var a);                // -> scalar
Var mean_abs(Var a);                   // -> scalar; subgradient 0 at 0

// table: [R, d]; out: [rows.size(), d]. Backward scatter-adds into table.
Var gather_rows(Var table, const std::vector<size_t>& rows);
// h: [N, d]; out[p] = dot(h[u_p], h[v_p]).
Var pair_dot(Var h, const std::vector<std::pair<int, int>>& pairs);

}  // namespace stb
