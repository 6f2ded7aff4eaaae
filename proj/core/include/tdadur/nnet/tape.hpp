#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tdadur/nnet/tensor.hpp"

namespace tdadur::nn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode automatic differentiation over a linear record of operations.
//
// Parameters enter as borrowed leaves: the tape reads the caller's tensor in
// place and, when a gradient sink is given, accumulates into it on
// backward(). A tape is single-use and not thread-safe; independent tapes
// may share the same read-only parameters.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Owned leaf whose gradient can be read back with grad().
  Var variable(Tensor value);
  // Borrowed leaf; `value` must outlive the tape. `grad_sink` may be null.
  Var leaf(const Tensor& value, Tensor* grad_sink);

  // Seeds d(loss)/d(loss) = 1 and propagates to every leaf. `loss` must hold
  // a single element.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id()); }
  // Gradient accumulated on a node by backward(); empty if none reached it.
  const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op-construction interface. A null `backward` marks an operation that
  // cannot be differentiated; backward() raises if a gradient reaches it.
  Var record(const char* name, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  // Zero-initialised on first use.
  Tensor& grad_mut(std::size_t id);

 private:
  struct Node {
    const char* name = "";
    Tensor own;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    Tensor* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// Matrix products. a: [n,k]; b: [k,m] (matmul) or [m,k] (matmul_nt).
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a: [n,m] plus a row vector of m entries broadcast over rows.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
// a times a single-element variable.
Var mul_scalar(Var a, Var s);
Var reciprocal(Var a);
Var square(Var a);
Var exp(Var a);
Var log1p(Var a);
// max(exp(a) - 1, floor); the floor keeps sums strictly positive.
Var expm1_floor(Var a, double floor);
Var relu(Var a);
// tanh approximation of GELU.
Var gelu(Var a);

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t width);
// Rows of `table` selected by `ids`.
Var gather_rows(Var table, std::span<const int> ids);

// Sum of all entries, as a [1,1] tensor.
Var sum(Var a);
// Sum over rows i of weights[i] * (logsumexp(logits_i) - logits_i[targets[i]]).
Var cross_entropy_rows(Var logits, std::span<const int> targets, std::span<const double> weights);

// Plain (non-differentiable) kernels shared with inference code.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out);
void softmax_inplace(std::span<double> row);

}  // namespace tdadur::nn
