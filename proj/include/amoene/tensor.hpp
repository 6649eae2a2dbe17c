#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same buffer, which is what
// lets a Graph write gradients back into model parameters. Graphs are
// rebuilt on every forward pass and never outlive a single training step.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amoene/error.hpp"

namespace amoene {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim() const { return shape().size(); }
  // 1-D tensors read as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero buffer on first use.
  std::span<double> grad_buffer();
  void zero_grad();

  // Deep copy, detached from any graph.
  Tensor clone() const;
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    const void* graph = nullptr;
    std::size_t producer = 0;
  };
  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

enum class Mode { train, eval };

enum class OpKind {
  matmul,
  add,
  mul,
  scale,
  relu,
  gelu,
  sigmoid,
  softmax_rows,
  layernorm_rows,
  batchnorm_features,
  dropout,
  mean_rows,
  stack_rows,
  slice_cols,
  concat_cols,
  group_scores,
  group_mix,
  sum,
};

std::string to_string(OpKind kind);

// Running statistics owned by a batchnorm layer; updated in train mode.
struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormStats identity(std::size_t features);
};

struct OpParams {
  double rate = 0.0;          // dropout
  double factor = 1.0;        // scale, group_scores
  std::size_t begin = 0;      // slice_cols
  std::size_t end = 0;        // slice_cols
  std::size_t group = 0;      // mean_rows, group_scores, group_mix; 0 = all rows
  double eps = 1e-5;          // layernorm_rows
  BatchNormStats* stats = nullptr;
};

class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Computes op_kind on inputs and records the node. Input conventions:
  //   matmul          [m,k] x [k,n]
  //   add             same shape, or [r,c] + [c] row broadcast
  //   layernorm_rows  x, optional gamma [c], optional beta [c]
  //   batchnorm       x [n,f], gamma [f], beta [f]; params.stats required
  //   stack_rows      K tensors [b,m] -> [b*K, m], row b*K+k from input k
  //   group_scores    Q, K of [g*k, d] -> [g*k, k] scaled by params.factor
  //   group_mix       A [g*k, k], V [g*k, d] -> [g*k, d]
  Tensor apply(OpKind kind, std::span<const Tensor> inputs, Mode mode = Mode::train,
               std::uint64_t seed = 0, const OpParams& params = {});
  Tensor apply(OpKind kind, std::initializer_list<Tensor> inputs, Mode mode = Mode::train,
               std::uint64_t seed = 0, const OpParams& params = {});

  // Records an externally computed node (loss functions live outside this
  // module). fn must accumulate into the inputs' grad buffers.
  Tensor record(Tensor output, std::vector<Tensor> inputs, BackwardFn fn);

  // Reverse sweep from a scalar loss. Gradients accumulate into every
  // requires_grad tensor reachable from the loss.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Convenience wrappers.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor relu(Graph& g, const Tensor& a);
Tensor gelu(Graph& g, const Tensor& a);
Tensor sigmoid(Graph& g, const Tensor& a);
Tensor softmax_rows(Graph& g, const Tensor& a);
Tensor sum(Graph& g, const Tensor& a);

// Standard normal CDF and the exact GELU x*Phi(x).
double normal_cdf(double x);
double gelu_value(double x);

// Finite-difference gradient check. The scalar probed is sum(w * f(inputs))
// with fixed pseudo-random weights w so that ops whose plain sum is constant
// (softmax, normalization) still produce informative gradients. Returns the
// max over elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), numeric from a
// five-point central difference.
using GraphFunction = std::function<Tensor(Graph&, std::span<const Tensor>)>;

double grad_check(const GraphFunction& fn, std::span<const Tensor> inputs, double eps = 1e-5,
                  std::uint64_t weight_seed = 7);
double grad_check(OpKind kind, std::span<const Tensor> inputs, double eps = 1e-5,
                  Mode mode = Mode::train, std::uint64_t seed = 0, OpParams params = {});

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update. grads[i] pairs with params[i]; an empty
// gradient span is treated as zero.
void adam_step(std::span<Tensor> params, std::span<const std::span<const double>> grads,
               AdamState& state);
// Same, reading each parameter's accumulated grad buffer.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace amoene
