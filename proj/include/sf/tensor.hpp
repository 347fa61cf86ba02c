#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sf/errors.hpp"

namespace sf {

using Shape = std::vector<long>;

long shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

/// Dense 64-bit float tensor participating in a reverse-mode autodiff graph.
///
/// Data is contiguous row-major. Tensors are handles (cheap to copy); the
/// buffer they point at is treated as immutable once created, except for the
/// gradient buffer and explicit leaf updates through `mut_data()` (used by the
/// optimizer between graph builds). Each forward pass records a fresh graph;
/// nothing is reused across iterations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  /// Leaf with requires_grad set; the starting point of trainable parameters.
  static Tensor leaf(Shape shape, std::vector<double> data);

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const;
  long size(int axis) const;  // negative axes count from the back
  int rank() const;
  long numel() const;

  const std::vector<double>& data() const;
  /// Direct mutation is only legal on leaves outside of any live graph.
  std::vector<double>& mut_data();
  double item() const;
  double at(std::initializer_list<long> idx) const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad() const;

  /// Same values, no graph, no grad flag.
  Tensor detach() const;

  /// Reverse sweep from a scalar root; gradients accumulate across fan-out.
  void backward() const;

  std::shared_ptr<TensorImpl> impl;
  explicit Tensor(std::shared_ptr<TensorImpl> i) : impl(std::move(i)) {}
};

struct GraphNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Reads self.grad and accumulates into the parents' grads.
  std::function<void(TensorImpl& self)> vjp;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::shared_ptr<GraphNode> node;
};

/// Builds an op result. Records a graph node only when some parent requires
/// grad; otherwise the result is a plain constant (this is what makes frozen
/// subnetworks free).
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> vjp, const char* name);

std::vector<double>& ensure_grad(TensorImpl& t);

// ---- elementwise, broadcasting (standard right-aligned rules) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // zero divisor -> DomainError
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);
Tensor minimum(const Tensor& a, double b);
Tensor maximum(const Tensor& a, double b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add(b, a); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(double a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return mul(a, -1.0); }

// ---- elementwise, unary ----
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // non-positive input -> DomainError
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);  // negative input -> DomainError
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- linear algebra / conv / sampling ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernels, long stride, long padding);
/// coords is (2,H',W') holding (x, y) pixel positions; samples with bilinear
/// interpolation and border clamping. Differentiable in both arguments.
Tensor bilinear_sample(const Tensor& image, const Tensor& coords);

// ---- reductions / shape ----
Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes = {});
Tensor upsample2x(const Tensor& a);    // bilinear, half-pixel centers, border extrapolation
Tensor downsample2x(const Tensor& a);  // 2x2 average pooling
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, long start, long len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, std::vector<int> perm = {});

/// Compares the reverse-mode gradient of f at x against central finite
/// differences; returns the max relative error with denominator
/// max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace sf
