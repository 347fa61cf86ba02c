#include "sf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tensor_internal.hpp"

namespace sf {

long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> data) {
  for (long d : shape)
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
  if (shape_numel(shape) != static_cast<long>(data.size()))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  long n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  long n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::scalar(double value) { return Tensor(make_impl({1}, {value})); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return Tensor(make_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> data) {
  Tensor t(make_impl(std::move(shape), std::move(data)));
  t.impl->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl->shape; }

long Tensor::size(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl->shape[axis];
}

int Tensor::rank() const { return static_cast<int>(impl->shape.size()); }

long Tensor::numel() const { return shape_numel(impl->shape); }

const std::vector<double>& Tensor::data() const { return impl->data; }

std::vector<double>& Tensor::mut_data() {
  if (impl->node) throw ContractError("mut_data on a non-leaf tensor");
  return impl->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl->data[0];
}

double Tensor::at(std::initializer_list<long> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw ShapeError("index rank mismatch for " + shape_str(shape()));
  long off = 0;
  int d = 0;
  for (long i : idx) {
    if (i < 0 || i >= impl->shape[d]) throw ShapeError("index out of range");
    off = off * impl->shape[d] + i;
    ++d;
  }
  return impl->data[off];
}

bool Tensor::requires_grad() const { return impl->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (impl->node) throw ContractError("set_requires_grad on a non-leaf tensor");
  impl->requires_grad = v;
}

bool Tensor::has_grad() const { return impl && !impl->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (impl->grad.empty()) throw ContractError("gradient not populated");
  return impl->grad;
}

void Tensor::zero_grad() const { impl->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(make_impl(impl->shape, impl->data)); }

std::vector<double>& ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> vjp, const char* name) {
  Tensor out(make_impl(std::move(shape), std::move(data)));
  bool needs = false;
  for (const Tensor& p : parents)
    if (p.defined() && p.impl->requires_grad) needs = true;
  if (!needs) return out;  // constant: no node, no graph growth
  out.impl->requires_grad = true;
  auto node = std::make_shared<GraphNode>();
  node->op = name;
  node->parents.reserve(parents.size());
  for (Tensor& p : parents) node->parents.push_back(std::move(p.impl));
  node->vjp = std::move(vjp);
  out.impl->node = std::move(node);
  return out;
}

void Tensor::backward() const {
  if (!defined()) throw ContractError("backward on undefined tensor");
  if (numel() != 1)
    throw ContractError("backward root must be scalar, got " + shape_str(shape()));

  // Iterative post-order DFS. Each reachable node enters `order` exactly once;
  // the reverse sweep then visits it exactly once.
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> seen;
  struct Frame {
    TensorImpl* t;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (seen.insert(impl.get()).second) stack.push_back({impl.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.t->node && f.next_parent < f.t->node->parents.size()) {
      TensorImpl* p = f.t->node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  ensure_grad(*impl)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && !t->grad.empty()) t->node->vjp(*t);
  }
}

namespace detail {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(r, 1);
  for (int i = 0; i < r; ++i) {
    long da = i < r - ra ? 1 : a[i - (r - ra)];
    long db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<long> strides_of(const Shape& s) {
  std::vector<long> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

std::vector<long> broadcast_strides(const Shape& s, const Shape& out) {
  const int r = static_cast<int>(out.size());
  const int rs = static_cast<int>(s.size());
  std::vector<long> natural = strides_of(s);
  std::vector<long> st(r, 0);
  for (int i = 0; i < rs; ++i) {
    int oi = r - rs + i;
    st[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : natural[i];
  }
  return st;
}

void reduce_into(const std::vector<double>& g, const Shape& from, const Shape& to,
                 std::vector<double>& acc) {
  if (from == to) {
    for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    return;
  }
  std::vector<long> st = broadcast_strides(to, from);
  std::vector<long> zeros(from.size(), 0);
  for_each_broadcast(from, st, zeros, [&](long i, long off, long) { acc[off] += g[i]; });
}

}  // namespace detail

}  // namespace sf
