#include <algorithm>
#include <cmath>
#include <numeric>

#include "sf/tensor.hpp"
#include "tensor_internal.hpp"

namespace sf {

using detail::broadcast_shape;
using detail::broadcast_strides;
using detail::for_each_broadcast;
using detail::reduce_into;

namespace {

// Binary elementwise op with broadcasting. `fwd(a,b)` computes the value;
// `dfa`/`dfb` give the local partials as functions of (a, b, out).
template <typename Fwd, typename Dfa, typename Dfb>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dfa dfa, Dfb dfb) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const long n = shape_numel(out_shape);
  std::vector<double> out(n);

  const std::vector<double>& ad = a.data();
  const std::vector<double>& bd = b.data();
  if (a.shape() == b.shape()) {
    for (long i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb,
                       [&](long i, long oa, long ob) { out[i] = fwd(ad[oa], bd[ob]); });
  }

  Tensor ta = a, tb = b;
  return make_op(
      out_shape, std::move(out), {a, b},
      [ta, tb, out_shape, dfa, dfb](TensorImpl& self) {
        const std::vector<double>& g = self.grad;
        const std::vector<double>& ad2 = ta.impl->data;
        const std::vector<double>& bd2 = tb.impl->data;
        const bool same = ta.impl->shape == tb.impl->shape && ta.impl->shape == out_shape;
        const bool need_a = ta.impl->requires_grad;
        const bool need_b = tb.impl->requires_grad;
        if (same) {
          if (need_a) {
            auto& ga = ensure_grad(*ta.impl);
            for (size_t i = 0; i < g.size(); ++i)
              ga[i] += g[i] * dfa(ad2[i], bd2[i], self.data[i]);
          }
          if (need_b) {
            auto& gb = ensure_grad(*tb.impl);
            for (size_t i = 0; i < g.size(); ++i)
              gb[i] += g[i] * dfb(ad2[i], bd2[i], self.data[i]);
          }
          return;
        }
        auto sa = broadcast_strides(ta.impl->shape, out_shape);
        auto sb = broadcast_strides(tb.impl->shape, out_shape);
        if (need_a) {
          auto& ga = ensure_grad(*ta.impl);
          for_each_broadcast(out_shape, sa, sb, [&](long i, long oa, long ob) {
            ga[oa] += g[i] * dfa(ad2[oa], bd2[ob], self.data[i]);
          });
        }
        if (need_b) {
          auto& gb = ensure_grad(*tb.impl);
          for_each_broadcast(out_shape, sa, sb, [&](long i, long oa, long ob) {
            gb[ob] += g[i] * dfb(ad2[oa], bd2[ob], self.data[i]);
          });
        }
      },
      name);
}

template <typename Fwd, typename Df>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Df df) {
  const long n = a.numel();
  std::vector<double> out(n);
  const std::vector<double>& ad = a.data();
  for (long i = 0; i < n; ++i) out[i] = fwd(ad[i]);
  Tensor ta = a;
  return make_op(
      a.shape(), std::move(out), {a},
      [ta, df](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        const std::vector<double>& g = self.grad;
        const std::vector<double>& ad2 = ta.impl->data;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(ad2[i], self.data[i]);
      },
      name);
}

}  // namespace

// ---- binary ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const std::vector<double>& bd = b.data();
  for (size_t i = 0; i < bd.size(); ++i)
    if (bd[i] == 0.0)
      throw DomainError("div: zero divisor at flat index " + std::to_string(i) + " of shape " +
                        shape_str(b.shape()));
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

// Ties route the gradient to the first argument, so clamp(x, lo, hi) built
// from min/max keeps a pass-through gradient at the boundary itself.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor div(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor div(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }
Tensor minimum(const Tensor& a, double b) { return minimum(a, Tensor::scalar(b)); }
Tensor maximum(const Tensor& a, double b) { return maximum(a, Tensor::scalar(b)); }

// ---- unary ----

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  const std::vector<double>& ad = a.data();
  for (size_t i = 0; i < ad.size(); ++i)
    if (!(ad[i] > 0.0))
      throw DomainError("log: non-positive input at flat index " + std::to_string(i));
  return unary_op(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, "abs", [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  const std::vector<double>& ad = a.data();
  for (size_t i = 0; i < ad.size(); ++i)
    if (ad[i] < 0.0) throw DomainError("sqrt: negative input at flat index " + std::to_string(i));
  // Subgradient 0 at exactly zero keeps flow-magnitude losses finite.
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return minimum(maximum(a, lo), hi);
}

// ---- reductions ----

namespace {

std::vector<int> normalize_axes(const Tensor& a, const std::vector<int>& axes) {
  std::vector<int> ax;
  if (axes.empty()) {
    ax.resize(a.rank());
    std::iota(ax.begin(), ax.end(), 0);
    return ax;
  }
  for (int x : axes) {
    if (x < 0) x += a.rank();
    if (x < 0 || x >= a.rank())
      throw ShapeError("reduce: axis out of range for " + shape_str(a.shape()));
    ax.push_back(x);
  }
  std::sort(ax.begin(), ax.end());
  ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
  return ax;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes) {
  std::vector<int> ax = normalize_axes(a, axes);
  Shape out_shape;
  Shape keep = a.shape();  // reduced dims set to 1, used for the scatter map
  for (int d = 0, j = 0; d < a.rank(); ++d) {
    if (j < static_cast<int>(ax.size()) && ax[j] == d) {
      keep[d] = 1;
      ++j;
    } else {
      out_shape.push_back(a.shape()[d]);
    }
  }
  if (out_shape.empty()) out_shape = {1};

  const long n_out = shape_numel(out_shape);
  std::vector<double> out(n_out, 0.0);
  auto sk = broadcast_strides(keep, a.shape());
  std::vector<long> zeros(a.rank(), 0);
  const std::vector<double>& ad = a.data();
  // keep-layout offsets enumerate the output slots
  for_each_broadcast(a.shape(), sk, zeros, [&](long i, long ok, long) { out[ok] += ad[i]; });

  Tensor ta = a;
  Shape in_shape = a.shape();
  return make_op(
      out_shape, std::move(out), {a},
      [ta, in_shape, keep](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        auto sk2 = detail::broadcast_strides(keep, in_shape);
        std::vector<long> z(in_shape.size(), 0);
        const std::vector<double>& g = self.grad;
        for_each_broadcast(in_shape, sk2, z, [&](long i, long ok, long) { ga[i] += g[ok]; });
      },
      "reduce_sum");
}

Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes) {
  std::vector<int> ax = normalize_axes(a, axes);
  long count = 1;
  for (int d : ax) count *= a.shape()[d];
  return mul(reduce_sum(a, axes), 1.0 / static_cast<double>(count));
}

// ---- shape ops ----

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: empty input list");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
  Shape out_shape = parts[0].shape();
  long total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && p.shape()[d] != out_shape[d])
        throw ShapeError("concat: shape mismatch at axis " + std::to_string(d));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;

  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < r; ++d) inner *= out_shape[d];

  std::vector<double> out(shape_numel(out_shape));
  long col = 0;
  for (const Tensor& p : parts) {
    const long pa = p.shape()[axis];
    const std::vector<double>& pd = p.data();
    for (long o = 0; o < outer; ++o)
      std::copy(pd.begin() + o * pa * inner, pd.begin() + (o + 1) * pa * inner,
                out.begin() + (o * total + col) * inner);
    col += pa;
  }

  std::vector<Tensor> hold = parts;
  return make_op(
      out_shape, std::move(out), parts,
      [hold, axis, outer, inner, total](TensorImpl& self) {
        const std::vector<double>& g = self.grad;
        long col2 = 0;
        for (const Tensor& p : hold) {
          const long pa = p.impl->shape[axis];
          if (p.impl->requires_grad) {
            auto& gp = ensure_grad(*p.impl);
            for (long o = 0; o < outer; ++o) {
              const double* src = g.data() + (o * total + col2) * inner;
              double* dst = gp.data() + o * pa * inner;
              for (long i = 0; i < pa * inner; ++i) dst[i] += src[i];
            }
          }
          col2 += pa;
        }
      },
      "concat");
}

Tensor slice(const Tensor& a, int axis, long start, long len) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > a.shape()[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for axis size " +
                     std::to_string(a.shape()[axis]));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (int d = axis + 1; d < r; ++d) inner *= a.shape()[d];
  const long full = a.shape()[axis];

  std::vector<double> out(shape_numel(out_shape));
  const std::vector<double>& ad = a.data();
  for (long o = 0; o < outer; ++o)
    std::copy(ad.begin() + (o * full + start) * inner, ad.begin() + (o * full + start + len) * inner,
              out.begin() + o * len * inner);

  Tensor ta = a;
  return make_op(
      out_shape, std::move(out), {a},
      [ta, outer, inner, full, start, len](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        const std::vector<double>& g = self.grad;
        for (long o = 0; o < outer; ++o) {
          const double* src = g.data() + o * len * inner;
          double* dst = ga.data() + (o * full + start) * inner;
          for (long i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Tensor ta = a;
  return make_op(
      std::move(shape), a.data(), {a},
      [ta](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      },
      "reshape");
}

Tensor transpose(const Tensor& a, std::vector<int> perm) {
  const int r = a.rank();
  if (perm.empty()) {
    perm.resize(r);
    for (int i = 0; i < r; ++i) perm[i] = r - 1 - i;
  }
  if (static_cast<int>(perm.size()) != r) throw ShapeError("transpose: bad permutation size");
  std::vector<bool> used(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || used[p]) throw ShapeError("transpose: invalid permutation");
    used[p] = true;
  }

  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = a.shape()[perm[i]];
  auto in_strides = detail::strides_of(a.shape());
  std::vector<long> gather(r);
  for (int i = 0; i < r; ++i) gather[i] = in_strides[perm[i]];

  const long n = a.numel();
  std::vector<double> out(n);
  std::vector<long> src_index(n);
  {
    std::vector<long> idx(r, 0);
    long off = 0;
    const std::vector<double>& ad = a.data();
    for (long i = 0; i < n; ++i) {
      out[i] = ad[off];
      src_index[i] = off;
      for (int d = r - 1; d >= 0; --d) {
        ++idx[d];
        off += gather[d];
        if (idx[d] < out_shape[d]) break;
        off -= gather[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }

  Tensor ta = a;
  auto src = std::make_shared<std::vector<long>>(std::move(src_index));
  return make_op(
      std::move(out_shape), std::move(out), {a},
      [ta, src](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        const std::vector<double>& g = self.grad;
        for (size_t i = 0; i < g.size(); ++i) ga[(*src)[i]] += g[i];
      },
      "transpose");
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor x0 = Tensor::leaf(x.shape(), x.data());
  Tensor y = f(x0);
  if (y.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
  y.backward();
  std::vector<double> analytic(x0.numel(), 0.0);
  if (x0.has_grad()) analytic = x0.grad();

  double max_rel = 0.0;
  std::vector<double> base = x.data();
  for (long i = 0; i < x.numel(); ++i) {
    std::vector<double> dp = base, dm = base;
    dp[i] += eps;
    dm[i] -= eps;
    double fp = f(Tensor::from_data(x.shape(), dp)).item();
    double fm = f(Tensor::from_data(x.shape(), dm)).item();
    double numeric = (fp - fm) / (2.0 * eps);
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace sf
