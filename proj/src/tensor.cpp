#include "amoene/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "amoene/random.hpp"

namespace amoene {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
  if (shape_size(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return 1;
  if (s.size() != 2) throw ShapeError("expected a matrix, got " + shape_string(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() != 2) throw ShapeError("expected a matrix, got " + shape_string(s));
  return s[1];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::layernorm_rows: return "layernorm_rows";
    case OpKind::batchnorm_features: return "batchnorm_features";
    case OpKind::dropout: return "dropout";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::group_scores: return "group_scores";
    case OpKind::group_mix: return "group_mix";
    case OpKind::sum: return "sum";
  }
  return "unknown";
}

BatchNormStats BatchNormStats::identity(std::size_t features) {
  BatchNormStats s;
  s.running_mean.assign(features, 0.0);
  s.running_var.assign(features, 1.0);
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double gelu_value(double x) { return x * normal_cdf(x); }

// ---------------------------------------------------------------- ops

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct OpResult {
  Tensor output;
  Graph::BackwardFn backward;
};

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

void require_arity(OpKind kind, std::span<const Tensor> in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi)
    throw ShapeError(to_string(kind) + ": wrong number of inputs (" + std::to_string(in.size()) + ")");
}

// Accumulate into t's grad buffer if it participates in differentiation.
template <typename F>
void accumulate(Tensor t, F&& f) {
  if (!t.defined() || !t.requires_grad()) return;
  auto g = t.grad_buffer();
  f(g);
}

OpResult op_matmul(std::span<const Tensor> in) {
  require_arity(OpKind::matmul, in, 2, 2);
  const Tensor a = in[0], b = in[1];
  if (a.dim() != 2 || b.dim() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data(), B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  return {Tensor({m, n}, std::move(out)), [a, b, m, k, n](std::span<const double> G) {
            accumulate(a, [&](std::span<double> ga) {
              const auto B = b.data();
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                  double s = 0.0;
                  for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
                  ga[i * k + p] += s;
                }
            });
            accumulate(b, [&](std::span<double> gb) {
              const auto A = a.data();
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                  const double aip = A[i * k + p];
                  if (aip == 0.0) continue;
                  for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
                }
            });
          }};
}

OpResult op_add(std::span<const Tensor> in) {
  require_arity(OpKind::add, in, 2, 2);
  const Tensor a = in[0], b = in[1];
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return {Tensor(a.shape(), std::move(out)), [a, b](std::span<const double> G) {
              accumulate(a, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i]; });
              accumulate(b, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i]; });
            }};
  }
  // row broadcast: b is [c] or [1,c]
  if (a.dim() == 2 && b.rows() == 1 && b.cols() == a.cols() && b.dim() <= 2) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] + b[j];
    return {Tensor(a.shape(), std::move(out)), [a, b, r, c](std::span<const double> G) {
              accumulate(a, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i]; });
              accumulate(b, [&](std::span<double> g) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j];
              });
            }};
  }
  throw ShapeError("add: incompatible shapes " + shape_string(a.shape()) + " + " + shape_string(b.shape()));
}

OpResult op_mul(std::span<const Tensor> in) {
  require_arity(OpKind::mul, in, 2, 2);
  const Tensor a = in[0], b = in[1];
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return {Tensor(a.shape(), std::move(out)), [a, b](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * b[i]; });
            accumulate(b, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * a[i]; });
          }};
}

template <typename F, typename D>
OpResult elementwise(OpKind kind, std::span<const Tensor> in, F f, D df) {
  require_arity(kind, in, 1, 1);
  const Tensor a = in[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return {Tensor(a.shape(), std::move(out)), [a, df](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) {
              for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * df(a[i]);
            });
          }};
}

OpResult op_softmax_rows(std::span<const Tensor> in) {
  require_arity(OpKind::softmax_rows, in, 1, 1);
  const Tensor a = in[0];
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.data().data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  Tensor o(a.shape(), std::move(out));
  return {o, [a, o, r, c](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) {
              const auto Y = o.data();
              for (std::size_t i = 0; i < r; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * Y[i * c + j];
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += Y[i * c + j] * (G[i * c + j] - dot);
              }
            });
          }};
}

// Shared backward for normalizations: given xhat, inverse std and the
// gradient w.r.t. xhat along one normalized axis of length n.
inline void normalize_backward(std::size_t n, const double* xhat, const double* dxhat, double inv_std,
                               std::size_t stride, double* dx, std::size_t dx_stride) {
  double mean_d = 0.0, mean_dx = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    mean_d += dxhat[j * stride];
    mean_dx += dxhat[j * stride] * xhat[j * stride];
  }
  mean_d /= static_cast<double>(n);
  mean_dx /= static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j)
    dx[j * dx_stride] += inv_std * (dxhat[j * stride] - mean_d - xhat[j * stride] * mean_dx);
}

OpResult op_layernorm_rows(std::span<const Tensor> in, const OpParams& p) {
  require_arity(OpKind::layernorm_rows, in, 1, 3);
  const Tensor x = in[0];
  const std::size_t r = x.rows(), c = x.cols();
  const Tensor gamma = in.size() > 1 ? in[1] : Tensor();
  const Tensor beta = in.size() > 2 ? in[2] : Tensor();
  if (gamma.defined() && gamma.size() != c) throw ShapeError("layernorm_rows: gamma length mismatch");
  if (beta.defined() && beta.size() != c) throw ShapeError("layernorm_rows: beta length mismatch");
  if (p.eps < 0.0) throw ShapeError("layernorm_rows: eps must be non-negative");
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.data().data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + p.eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xi[j] - mean) * is;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = h * (gamma.defined() ? gamma[j] : 1.0) + (beta.defined() ? beta[j] : 0.0);
    }
  }
  return {Tensor(x.shape(), std::move(out)), [x, gamma, beta, xhat, inv_std, r, c](std::span<const double> G) {
            accumulate(gamma, [&](std::span<double> g) {
              for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j] * (*xhat)[i * c + j];
            });
            accumulate(beta, [&](std::span<double> g) {
              for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j];
            });
            accumulate(x, [&](std::span<double> g) {
              std::vector<double> dxhat(c);
              for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j)
                  dxhat[j] = G[i * c + j] * (gamma.defined() ? gamma[j] : 1.0);
                normalize_backward(c, xhat->data() + i * c, dxhat.data(), (*inv_std)[i], 1,
                                   g.data() + i * c, 1);
              }
            });
          }};
}

OpResult op_batchnorm(std::span<const Tensor> in, Mode mode, const OpParams& p) {
  require_arity(OpKind::batchnorm_features, in, 3, 3);
  const Tensor x = in[0], gamma = in[1], beta = in[2];
  if (x.dim() != 2) throw ShapeError("batchnorm_features: expected [n,f] input");
  const std::size_t n = x.rows(), f = x.cols();
  if (gamma.size() != f || beta.size() != f) throw ShapeError("batchnorm_features: parameter length mismatch");
  if (p.stats == nullptr) throw ShapeError("batchnorm_features: running statistics required");
  BatchNormStats& st = *p.stats;
  if (st.running_mean.size() != f || st.running_var.size() != f)
    throw ShapeError("batchnorm_features: running statistics length mismatch");

  std::vector<double> out(x.size());
  if (mode == Mode::eval) {
    std::vector<double> is(f);
    for (std::size_t j = 0; j < f; ++j) is[j] = 1.0 / std::sqrt(st.running_var[j] + st.eps);
    const auto rm = st.running_mean;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j)
        out[i * f + j] = gamma[j] * (x[i * f + j] - rm[j]) * is[j] + beta[j];
    return {Tensor(x.shape(), std::move(out)), [x, gamma, beta, is, rm, n, f](std::span<const double> G) {
              accumulate(x, [&](std::span<double> g) {
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < f; ++j) g[i * f + j] += G[i * f + j] * gamma[j] * is[j];
              });
              accumulate(gamma, [&](std::span<double> g) {
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < f; ++j) g[j] += G[i * f + j] * (x[i * f + j] - rm[j]) * is[j];
              });
              accumulate(beta, [&](std::span<double> g) {
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < f; ++j) g[j] += G[i * f + j];
              });
            }};
  }

  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(f);
  for (std::size_t j = 0; j < f; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * f + j];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x[i * f + j] - mean) * (x[i * f + j] - mean);
    const double var = ss / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + st.eps);
    (*inv_std)[j] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (x[i * f + j] - mean) * is;
      (*xhat)[i * f + j] = h;
      out[i * f + j] = gamma[j] * h + beta[j];
    }
    const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
    st.running_mean[j] = (1.0 - st.momentum) * st.running_mean[j] + st.momentum * mean;
    st.running_var[j] = (1.0 - st.momentum) * st.running_var[j] + st.momentum * unbiased;
  }
  return {Tensor(x.shape(), std::move(out)), [x, gamma, beta, xhat, inv_std, n, f](std::span<const double> G) {
            accumulate(gamma, [&](std::span<double> g) {
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < f; ++j) g[j] += G[i * f + j] * (*xhat)[i * f + j];
            });
            accumulate(beta, [&](std::span<double> g) {
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < f; ++j) g[j] += G[i * f + j];
            });
            accumulate(x, [&](std::span<double> g) {
              std::vector<double> dxhat(x.size());
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < f; ++j) dxhat[i * f + j] = G[i * f + j] * gamma[j];
              for (std::size_t j = 0; j < f; ++j)
                normalize_backward(n, xhat->data() + j, dxhat.data() + j, (*inv_std)[j], f, g.data() + j, f);
            });
          }};
}

OpResult op_dropout(std::span<const Tensor> in, std::uint64_t seed, const OpParams& p) {
  require_arity(OpKind::dropout, in, 1, 1);
  const Tensor a = in[0];
  Rng rng(seed);
  const double keep = 1.0 - p.rate;
  auto mask = std::make_shared<std::vector<double>>(a.size());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    (*mask)[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    out[i] = a[i] * (*mask)[i];
  }
  return {Tensor(a.shape(), std::move(out)), [a, mask](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) {
              for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * (*mask)[i];
            });
          }};
}

OpResult op_mean_rows(std::span<const Tensor> in, const OpParams& p) {
  require_arity(OpKind::mean_rows, in, 1, 1);
  const Tensor a = in[0];
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t group = p.group == 0 ? r : p.group;
  if (r % group != 0) throw ShapeError("mean_rows: row count not divisible by group size");
  const std::size_t groups = r / group;
  std::vector<double> out(groups * c, 0.0);
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[(i / group) * c + j] += a[i * c + j] * inv;
  return {Tensor({groups, c}, std::move(out)), [a, r, c, group, inv](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) {
              for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += G[(i / group) * c + j] * inv;
            });
          }};
}

OpResult op_stack_rows(std::span<const Tensor> in) {
  if (in.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t b = in[0].rows(), m = in[0].cols(), k = in.size();
  for (const auto& t : in)
    if (t.rows() != b || t.cols() != m)
      throw ShapeError("stack_rows: ragged inputs " + shape_string(t.shape()) + " vs " +
                       shape_string(in[0].shape()));
  std::vector<double> out(b * k * m);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(in[s].data().data() + i * m, m, out.data() + (i * k + s) * m);
  std::vector<Tensor> inputs(in.begin(), in.end());
  return {Tensor({b * k, m}, std::move(out)), [inputs, b, k, m](std::span<const double> G) {
            for (std::size_t s = 0; s < k; ++s)
              accumulate(inputs[s], [&](std::span<double> g) {
                for (std::size_t i = 0; i < b; ++i)
                  for (std::size_t j = 0; j < m; ++j) g[i * m + j] += G[(i * k + s) * m + j];
              });
          }};
}

OpResult op_slice_cols(std::span<const Tensor> in, const OpParams& p) {
  require_arity(OpKind::slice_cols, in, 1, 1);
  const Tensor a = in[0];
  const std::size_t r = a.rows(), c = a.cols();
  if (p.begin >= p.end || p.end > c) throw ShapeError("slice_cols: invalid column range");
  const std::size_t w = p.end - p.begin, b0 = p.begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(a.data().data() + i * c + b0, w, out.data() + i * w);
  return {Tensor({r, w}, std::move(out)), [a, r, c, w, b0](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) {
              for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) g[i * c + b0 + j] += G[i * w + j];
            });
          }};
}

OpResult op_concat_cols(std::span<const Tensor> in) {
  if (in.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = in[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& t : in) {
    if (t.rows() != r) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(total);
    total += t.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t s = 0; s < in.size(); ++s) {
    const std::size_t w = in[s].cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(in[s].data().data() + i * w, w, out.data() + i * total + offsets[s]);
  }
  std::vector<Tensor> inputs(in.begin(), in.end());
  return {Tensor({r, total}, std::move(out)), [inputs, offsets, r, total](std::span<const double> G) {
            for (std::size_t s = 0; s < inputs.size(); ++s) {
              const std::size_t w = inputs[s].cols();
              accumulate(inputs[s], [&](std::span<double> g) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < w; ++j) g[i * w + j] += G[i * total + offsets[s] + j];
              });
            }
          }};
}

OpResult op_group_scores(std::span<const Tensor> in, const OpParams& p) {
  require_arity(OpKind::group_scores, in, 2, 2);
  const Tensor q = in[0], k = in[1];
  if (q.dim() != 2 || q.shape() != k.shape()) throw ShapeError("group_scores: Q and K shapes differ");
  const std::size_t rows = q.rows(), d = q.cols();
  const std::size_t g = p.group == 0 ? rows : p.group;
  if (rows % g != 0) throw ShapeError("group_scores: row count not divisible by group size");
  const double s = p.factor;
  std::vector<double> out(rows * g);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t base = (i / g) * g;
    for (std::size_t j = 0; j < g; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) acc += q[i * d + t] * k[(base + j) * d + t];
      out[i * g + j] = s * acc;
    }
  }
  return {Tensor({rows, g}, std::move(out)), [q, k, rows, d, g, s](std::span<const double> G) {
            accumulate(q, [&](std::span<double> gq) {
              for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t base = (i / g) * g;
                for (std::size_t j = 0; j < g; ++j)
                  for (std::size_t t = 0; t < d; ++t) gq[i * d + t] += s * G[i * g + j] * k[(base + j) * d + t];
              }
            });
            accumulate(k, [&](std::span<double> gk) {
              for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t base = (i / g) * g;
                for (std::size_t j = 0; j < g; ++j)
                  for (std::size_t t = 0; t < d; ++t) gk[(base + j) * d + t] += s * G[i * g + j] * q[i * d + t];
              }
            });
          }};
}

OpResult op_group_mix(std::span<const Tensor> in, const OpParams& p) {
  require_arity(OpKind::group_mix, in, 2, 2);
  const Tensor a = in[0], v = in[1];
  const std::size_t rows = a.rows(), g = a.cols(), d = v.cols();
  if (v.rows() != rows || (p.group != 0 && p.group != g) || rows % g != 0)
    throw ShapeError("group_mix: incompatible shapes " + shape_string(a.shape()) + ", " +
                     shape_string(v.shape()));
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t base = (i / g) * g;
    for (std::size_t j = 0; j < g; ++j) {
      const double w = a[i * g + j];
      for (std::size_t t = 0; t < d; ++t) out[i * d + t] += w * v[(base + j) * d + t];
    }
  }
  return {Tensor({rows, d}, std::move(out)), [a, v, rows, g, d](std::span<const double> G) {
            accumulate(a, [&](std::span<double> ga) {
              for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t base = (i / g) * g;
                for (std::size_t j = 0; j < g; ++j) {
                  double acc = 0.0;
                  for (std::size_t t = 0; t < d; ++t) acc += G[i * d + t] * v[(base + j) * d + t];
                  ga[i * g + j] += acc;
                }
              }
            });
            accumulate(v, [&](std::span<double> gv) {
              for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t base = (i / g) * g;
                for (std::size_t j = 0; j < g; ++j) {
                  const double w = a[i * g + j];
                  for (std::size_t t = 0; t < d; ++t) gv[(base + j) * d + t] += w * G[i * d + t];
                }
              }
            });
          }};
}

OpResult op_sum(std::span<const Tensor> in) {
  require_arity(OpKind::sum, in, 1, 1);
  const Tensor a = in[0];
  double s = 0.0;
  for (double x : a.data()) s += x;
  return {Tensor({1}, {s}), [a](std::span<const double> G) {
            accumulate(a, [&](std::span<double> g) { for (auto& x : g) x += G[0]; });
          }};
}

OpResult dispatch(OpKind kind, std::span<const Tensor> in, Mode mode, std::uint64_t seed,
                  const OpParams& p) {
  switch (kind) {
    case OpKind::matmul: return op_matmul(in);
    case OpKind::add: return op_add(in);
    case OpKind::mul: return op_mul(in);
    case OpKind::scale: {
      const double f = p.factor;
      return elementwise(kind, in, [f](double x) { return f * x; }, [f](double) { return f; });
    }
    case OpKind::relu:
      return elementwise(kind, in, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case OpKind::gelu:
      return elementwise(kind, in, gelu_value, [](double x) {
        return normal_cdf(x) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
    case OpKind::sigmoid:
      return elementwise(kind, in, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                         [](double x) {
                           const double s = 1.0 / (1.0 + std::exp(-x));
                           return s * (1.0 - s);
                         });
    case OpKind::softmax_rows: return op_softmax_rows(in);
    case OpKind::layernorm_rows: return op_layernorm_rows(in, p);
    case OpKind::batchnorm_features: return op_batchnorm(in, mode, p);
    case OpKind::dropout: return op_dropout(in, seed, p);
    case OpKind::mean_rows: return op_mean_rows(in, p);
    case OpKind::stack_rows: return op_stack_rows(in);
    case OpKind::slice_cols: return op_slice_cols(in, p);
    case OpKind::concat_cols: return op_concat_cols(in);
    case OpKind::group_scores: return op_group_scores(in, p);
    case OpKind::group_mix: return op_group_mix(in, p);
    case OpKind::sum: return op_sum(in);
  }
  throw ShapeError("unknown op kind");
}

}  // namespace

// ---------------------------------------------------------------- Graph

Tensor Graph::apply(OpKind kind, std::span<const Tensor> inputs, Mode mode, std::uint64_t seed,
                    const OpParams& params) {
  for (const auto& t : inputs) {
    if (!t.defined()) throw ShapeError(to_string(kind) + ": undefined input");
    require_finite(t.data(), "op input");
  }
  if (kind == OpKind::dropout) {
    if (!(params.rate >= 0.0 && params.rate < 1.0))
      throw ShapeError("dropout: rate must lie in [0,1)");
    if (inputs.size() != 1) throw ShapeError("dropout: expects one input");
    if (mode == Mode::eval || params.rate == 0.0) return inputs[0];
  }
  OpResult r = dispatch(kind, inputs, mode, seed, params);
  require_finite(r.output.data(), to_string(kind).c_str());
  return record(std::move(r.output), std::vector<Tensor>(inputs.begin(), inputs.end()), std::move(r.backward));
}

Tensor Graph::apply(OpKind kind, std::initializer_list<Tensor> inputs, Mode mode, std::uint64_t seed,
                    const OpParams& params) {
  return apply(kind, std::span<const Tensor>(inputs.begin(), inputs.size()), mode, seed, params);
}

Tensor Graph::record(Tensor output, std::vector<Tensor> inputs, BackwardFn fn) {
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  output.impl_->requires_grad = rg;
  output.impl_->graph = this;
  output.impl_->producer = nodes_.size();
  nodes_.push_back({std::move(inputs), output, std::move(fn)});
  return output;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar");
  if (loss.impl_->graph != this) throw ShapeError("backward: loss was not produced by this graph");
  // Inputs must precede their consumers; define-by-run guarantees it unless
  // a tensor was re-recorded out of order.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (const auto& in : nodes_[i].inputs)
      if (in.impl_->graph == this && in.impl_->producer >= i && !in.same_as(nodes_[i].output))
        throw ShapeError("backward: graph is not in topological order (cycle)");
  if (!loss.requires_grad()) return;
  Tensor l = loss;
  l.grad_buffer()[0] += 1.0;
  for (std::size_t i = loss.impl_->producer + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.output.has_grad() || !node.output.requires_grad()) continue;
    node.backward(node.output.grad());
  }
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) { return g.apply(OpKind::matmul, {a, b}); }
Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return g.apply(OpKind::add, {a, b}); }
Tensor mul(Graph& g, const Tensor& a, const Tensor& b) { return g.apply(OpKind::mul, {a, b}); }
Tensor scale(Graph& g, const Tensor& a, double factor) {
  OpParams p;
  p.factor = factor;
  return g.apply(OpKind::scale, {a}, Mode::train, 0, p);
}
Tensor relu(Graph& g, const Tensor& a) { return g.apply(OpKind::relu, {a}); }
Tensor gelu(Graph& g, const Tensor& a) { return g.apply(OpKind::gelu, {a}); }
Tensor sigmoid(Graph& g, const Tensor& a) { return g.apply(OpKind::sigmoid, {a}); }
Tensor softmax_rows(Graph& g, const Tensor& a) { return g.apply(OpKind::softmax_rows, {a}); }
Tensor sum(Graph& g, const Tensor& a) { return g.apply(OpKind::sum, {a}); }

// ---------------------------------------------------------------- grad check

double grad_check(const GraphFunction& fn, std::span<const Tensor> inputs, double eps,
                  std::uint64_t weight_seed) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ShapeError("grad_check: eps must lie in (0, 1e-2]");
  std::vector<Tensor> work;
  for (const auto& t : inputs) {
    require_finite(t.data(), "grad_check input");
    Tensor c = t.clone();
    c.set_requires_grad(true);
    work.push_back(c);
  }
  std::vector<double> weights;
  auto weighted = [&](Graph& g) {
    Tensor out = fn(g, work);
    if (weights.empty()) {
      Rng rng(weight_seed);
      weights.resize(out.size());
      for (auto& w : weights) w = uniform(rng, 0.5, 1.5) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
    }
    if (out.size() == 1) return scale(g, out, weights[0]);
    Tensor w(out.shape(), weights);
    return sum(g, mul(g, out, w));
  };
  auto value = [&]() {
    Graph g;
    const double v = weighted(g).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite perturbation result");
    return v;
  };

  {
    Graph g;
    Tensor loss = weighted(g);
    g.backward(loss);
  }
  double worst = 0.0;
  for (auto& t : work) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.size(), 0.0);
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      auto at = [&](double h) {
        data[i] = orig + h;
        const double v = value();
        data[i] = orig;
        return v;
      };
      // five-point stencil, O(eps^4)
      const double cd = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - cd) / denom);
    }
  }
  return worst;
}

double grad_check(OpKind kind, std::span<const Tensor> inputs, double eps, Mode mode, std::uint64_t seed,
                  OpParams params) {
  BatchNormStats local;
  if (kind == OpKind::batchnorm_features && params.stats == nullptr && !inputs.empty()) {
    local = BatchNormStats::identity(inputs[0].cols());
    params.stats = &local;
  }
  return grad_check(
      [&](Graph& g, std::span<const Tensor> in) { return g.apply(kind, in, mode, seed, params); }, inputs, eps);
}

// ---------------------------------------------------------------- Adam

void adam_step(std::span<Tensor> params, std::span<const std::span<const double>> grads, AdamState& state) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].size()) throw ShapeError("adam_step: moment buffer shape mismatch");
    if (!grads[i].empty() && grads[i].size() != params[i].size()) throw ShapeError("adam_step: gradient shape mismatch");
    require_finite(grads[i], "adam gradient");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i].empty() ? 0.0 : grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state);
}

}  // namespace amoene
