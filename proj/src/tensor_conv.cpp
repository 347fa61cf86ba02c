#include <algorithm>
#include <cmath>

#include "sf/tensor.hpp"

namespace sf {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: expects rank-2 tensors");
  const long m = a.size(0), k = a.size(1), k2 = b.size(0), n = b.size(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (long i = 0; i < m; ++i)
      for (long p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* Br = B + p * n;
        double* Or = out.data() + i * n;
        for (long j = 0; j < n; ++j) Or[j] += aip * Br[j];
      }
  }
  Tensor ta = a, tb = b;
  return make_op(
      {m, n}, std::move(out), {a, b},
      [ta, tb, m, k, n](TensorImpl& self) {
        const double* G = self.grad.data();
        if (ta.impl->requires_grad) {  // dA = G * B^T
          auto& ga = ensure_grad(*ta.impl);
          const double* B = tb.impl->data.data();
          for (long i = 0; i < m; ++i)
            for (long p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* Gr = G + i * n;
              const double* Br = B + p * n;
              for (long j = 0; j < n; ++j) acc += Gr[j] * Br[j];
              ga[i * k + p] += acc;
            }
        }
        if (tb.impl->requires_grad) {  // dB = A^T * G
          auto& gb = ensure_grad(*tb.impl);
          const double* A = ta.impl->data.data();
          for (long p = 0; p < k; ++p)
            for (long i = 0; i < m; ++i) {
              const double aip = A[i * k + p];
              const double* Gr = G + i * n;
              double* gbr = gb.data() + p * n;
              for (long j = 0; j < n; ++j) gbr[j] += aip * Gr[j];
            }
        }
      },
      "matmul");
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, long stride, long padding) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be (C,H,W)");
  if (kernels.rank() != 4) throw ShapeError("conv2d: kernels must be (Cout,Cin,k,k)");
  const long cin = input.size(0), h = input.size(1), w = input.size(2);
  const long cout = kernels.size(0), kcin = kernels.size(1), kh = kernels.size(2),
             kw = kernels.size(3);
  if (kcin != cin) throw ShapeError("conv2d: kernel Cin does not match input");
  if (kh != kw || kh % 2 == 0) throw ShapeError("conv2d: kernels must be odd and square");
  if (stride < 1) throw ShapeError("conv2d: stride must be positive");
  const long k = kh;
  if ((h + 2 * padding - k) % stride != 0 || (w + 2 * padding - k) % stride != 0)
    throw ShapeError("conv2d: non-integral output size");
  const long ho = (h + 2 * padding - k) / stride + 1;
  const long wo = (w + 2 * padding - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");

  std::vector<double> out(cout * ho * wo, 0.0);
  {
    const double* in = input.data().data();
    const double* ker = kernels.data().data();
    for (long oc = 0; oc < cout; ++oc) {
      double* out_c = out.data() + oc * ho * wo;
      for (long ic = 0; ic < cin; ++ic) {
        const double* in_c = in + ic * h * w;
        const double* ker_c = ker + (oc * cin + ic) * k * k;
        for (long ky = 0; ky < k; ++ky)
          for (long kx = 0; kx < k; ++kx) {
            const double kv = ker_c[ky * k + kx];
            for (long oy = 0; oy < ho; ++oy) {
              const long iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              const double* in_row = in_c + iy * w;
              double* out_row = out_c + oy * wo;
              // valid ox range: 0 <= ox*stride - padding + kx < w
              long lo = 0, hi = wo;
              while (lo < wo && lo * stride - padding + kx < 0) ++lo;
              while (hi > lo && (hi - 1) * stride - padding + kx >= w) --hi;
              if (stride == 1) {
                const double* src = in_row - padding + kx;
                for (long ox = lo; ox < hi; ++ox) out_row[ox] += kv * src[ox];
              } else {
                for (long ox = lo; ox < hi; ++ox)
                  out_row[ox] += kv * in_row[ox * stride - padding + kx];
              }
            }
          }
      }
    }
  }

  Tensor ti = input, tk = kernels;
  return make_op(
      {cout, ho, wo}, std::move(out), {input, kernels},
      [ti, tk, cin, h, w, cout, k, stride, padding, ho, wo](TensorImpl& self) {
        const double* g = self.grad.data();
        if (ti.impl->requires_grad) {
          auto& gi = ensure_grad(*ti.impl);
          const double* ker = tk.impl->data.data();
          for (long oc = 0; oc < cout; ++oc) {
            const double* g_c = g + oc * ho * wo;
            for (long ic = 0; ic < cin; ++ic) {
              double* gi_c = gi.data() + ic * h * w;
              const double* ker_c = ker + (oc * cin + ic) * k * k;
              for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx) {
                  const double kv = ker_c[ky * k + kx];
                  for (long oy = 0; oy < ho; ++oy) {
                    const long iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    double* gi_row = gi_c + iy * w;
                    const double* g_row = g_c + oy * wo;
                    long lo = 0, hi = wo;
                    while (lo < wo && lo * stride - padding + kx < 0) ++lo;
                    while (hi > lo && (hi - 1) * stride - padding + kx >= w) --hi;
                    if (stride == 1) {
                      double* dst = gi_row - padding + kx;
                      for (long ox = lo; ox < hi; ++ox) dst[ox] += kv * g_row[ox];
                    } else {
                      for (long ox = lo; ox < hi; ++ox)
                        gi_row[ox * stride - padding + kx] += kv * g_row[ox];
                    }
                  }
                }
            }
          }
        }
        if (tk.impl->requires_grad) {
          auto& gk = ensure_grad(*tk.impl);
          const double* in = ti.impl->data.data();
          for (long oc = 0; oc < cout; ++oc) {
            const double* g_c = g + oc * ho * wo;
            for (long ic = 0; ic < cin; ++ic) {
              const double* in_c = in + ic * h * w;
              double* gk_c = gk.data() + (oc * cin + ic) * k * k;
              for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx) {
                  double acc = 0.0;
                  for (long oy = 0; oy < ho; ++oy) {
                    const long iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* in_row = in_c + iy * w;
                    const double* g_row = g_c + oy * wo;
                    long lo = 0, hi = wo;
                    while (lo < wo && lo * stride - padding + kx < 0) ++lo;
                    while (hi > lo && (hi - 1) * stride - padding + kx >= w) --hi;
                    if (stride == 1) {
                      const double* src = in_row - padding + kx;
                      for (long ox = lo; ox < hi; ++ox) acc += src[ox] * g_row[ox];
                    } else {
                      for (long ox = lo; ox < hi; ++ox)
                        acc += in_row[ox * stride - padding + kx] * g_row[ox];
                    }
                  }
                  gk_c[ky * k + kx] += acc;
                }
            }
          }
        }
      },
      "conv2d");
}

namespace {

inline long clampl(long v, long lo, long hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Tensor bilinear_sample(const Tensor& image, const Tensor& coords) {
  if (image.rank() != 3) throw ShapeError("bilinear_sample: image must be (C,H,W)");
  if (coords.rank() != 3 || coords.size(0) != 2)
    throw ShapeError("bilinear_sample: coords must be (2,H',W')");
  const long c = image.size(0), h = image.size(1), w = image.size(2);
  const long ho = coords.size(1), wo = coords.size(2);
  const long n = ho * wo;

  const double* img = image.data().data();
  const double* cx = coords.data().data();      // x channel
  const double* cy = coords.data().data() + n;  // y channel

  std::vector<double> out(c * n);
  for (long i = 0; i < n; ++i) {
    const double x = cx[i], y = cy[i];
    const double fx = std::floor(x), fy = std::floor(y);
    const double wx = x - fx, wy = y - fy;
    const long x0 = clampl(static_cast<long>(fx), 0, w - 1);
    const long x1 = clampl(static_cast<long>(fx) + 1, 0, w - 1);
    const long y0 = clampl(static_cast<long>(fy), 0, h - 1);
    const long y1 = clampl(static_cast<long>(fy) + 1, 0, h - 1);
    for (long ch = 0; ch < c; ++ch) {
      const double* plane = img + ch * h * w;
      const double v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
      const double v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
      out[ch * n + i] = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                        wy * ((1.0 - wx) * v10 + wx * v11);
    }
  }

  Tensor timg = image, tco = coords;
  return make_op(
      {c, ho, wo}, std::move(out), {image, coords},
      [timg, tco, c, h, w, n](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* img2 = timg.impl->data.data();
        const double* cx2 = tco.impl->data.data();
        const double* cy2 = tco.impl->data.data() + n;
        const bool need_img = timg.impl->requires_grad;
        const bool need_co = tco.impl->requires_grad;
        double* gi = need_img ? ensure_grad(*timg.impl).data() : nullptr;
        double* gc = need_co ? ensure_grad(*tco.impl).data() : nullptr;
        for (long i = 0; i < n; ++i) {
          const double x = cx2[i], y = cy2[i];
          const double fx = std::floor(x), fy = std::floor(y);
          const double wx = x - fx, wy = y - fy;
          const long x0 = clampl(static_cast<long>(fx), 0, w - 1);
          const long x1 = clampl(static_cast<long>(fx) + 1, 0, w - 1);
          const long y0 = clampl(static_cast<long>(fy), 0, h - 1);
          const long y1 = clampl(static_cast<long>(fy) + 1, 0, h - 1);
          double gx_acc = 0.0, gy_acc = 0.0;
          for (long ch = 0; ch < c; ++ch) {
            const double go = g[ch * n + i];
            if (go == 0.0 && !need_co) continue;
            const double* plane = img2 + ch * h * w;
            const double v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
            const double v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
            if (need_img) {
              double* gp = gi + ch * h * w;
              gp[y0 * w + x0] += go * (1.0 - wy) * (1.0 - wx);
              gp[y0 * w + x1] += go * (1.0 - wy) * wx;
              gp[y1 * w + x0] += go * wy * (1.0 - wx);
              gp[y1 * w + x1] += go * wy * wx;
            }
            if (need_co) {
              // Clamped neighbor values make these derivatives vanish outside
              // the image automatically.
              gx_acc += go * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
              gy_acc += go * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
            }
          }
          if (need_co) {
            gc[i] += gx_acc;
            gc[n + i] += gy_acc;
          }
        }
      },
      "bilinear_sample");
}

// 1D resample taps for doubling a length: each output element is
// w0*in[i0] + w1*in[i1]. Half-pixel centers; the border taps extrapolate so
// that downsample2x(upsample2x(x)) is exact on linear ramps.
namespace {

struct Tap {
  long i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(long n) {
  std::vector<Tap> taps(2 * n);
  for (long j = 0; j < 2 * n; ++j) {
    const double src = (static_cast<double>(j) + 0.5) / 2.0 - 0.5;
    double f = std::floor(src);
    long i0 = static_cast<long>(f);
    double t = src - f;
    if (i0 < 0) {  // extrapolate from the first two samples
      i0 = 0;
      t = src;
    } else if (i0 >= n - 1) {  // extrapolate from the last two
      i0 = n - 2;
      t = src - static_cast<double>(i0);
    }
    if (n == 1) {
      taps[j] = {0, 0, 1.0, 0.0};
    } else {
      taps[j] = {i0, i0 + 1, 1.0 - t, t};
    }
  }
  return taps;
}

}  // namespace

Tensor upsample2x(const Tensor& a) {
  if (a.rank() != 3) throw ShapeError("upsample2x: expects (C,H,W)");
  const long c = a.size(0), h = a.size(1), w = a.size(2);
  const long ho = 2 * h, wo = 2 * w;
  auto ty = upsample_taps(h);
  auto tx = upsample_taps(w);

  std::vector<double> out(c * ho * wo);
  {
    const double* in = a.data().data();
    std::vector<double> row_buf(wo);
    for (long ch = 0; ch < c; ++ch) {
      const double* in_c = in + ch * h * w;
      double* out_c = out.data() + ch * ho * wo;
      for (long oy = 0; oy < ho; ++oy) {
        const Tap& t = ty[oy];
        const double* r0 = in_c + t.i0 * w;
        const double* r1 = in_c + t.i1 * w;
        for (long x = 0; x < w; ++x) row_buf[x] = t.w0 * r0[x] + t.w1 * r1[x];
        double* out_row = out_c + oy * wo;
        for (long ox = 0; ox < wo; ++ox) {
          const Tap& u = tx[ox];
          out_row[ox] = u.w0 * row_buf[u.i0] + u.w1 * row_buf[u.i1];
        }
      }
    }
  }

  Tensor ta = a;
  auto pty = std::make_shared<std::vector<Tap>>(std::move(ty));
  auto ptx = std::make_shared<std::vector<Tap>>(std::move(tx));
  return make_op(
      {c, ho, wo}, std::move(out), {a},
      [ta, pty, ptx, c, h, w, ho, wo](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        const double* g = self.grad.data();
        for (long ch = 0; ch < c; ++ch) {
          double* ga_c = ga.data() + ch * h * w;
          const double* g_c = g + ch * ho * wo;
          for (long oy = 0; oy < ho; ++oy) {
            const Tap& t = (*pty)[oy];
            for (long ox = 0; ox < wo; ++ox) {
              const Tap& u = (*ptx)[ox];
              const double go = g_c[oy * wo + ox];
              ga_c[t.i0 * w + u.i0] += go * t.w0 * u.w0;
              ga_c[t.i0 * w + u.i1] += go * t.w0 * u.w1;
              ga_c[t.i1 * w + u.i0] += go * t.w1 * u.w0;
              ga_c[t.i1 * w + u.i1] += go * t.w1 * u.w1;
            }
          }
        }
      },
      "upsample2x");
}

Tensor downsample2x(const Tensor& a) {
  if (a.rank() != 3) throw ShapeError("downsample2x: expects (C,H,W)");
  const long c = a.size(0), h = a.size(1), w = a.size(2);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("downsample2x: H and W must be even");
  const long ho = h / 2, wo = w / 2;
  std::vector<double> out(c * ho * wo);
  {
    const double* in = a.data().data();
    for (long ch = 0; ch < c; ++ch) {
      const double* in_c = in + ch * h * w;
      double* out_c = out.data() + ch * ho * wo;
      for (long oy = 0; oy < ho; ++oy) {
        const double* r0 = in_c + 2 * oy * w;
        const double* r1 = r0 + w;
        double* out_row = out_c + oy * wo;
        for (long ox = 0; ox < wo; ++ox)
          out_row[ox] = 0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
      }
    }
  }
  Tensor ta = a;
  return make_op(
      {c, ho, wo}, std::move(out), {a},
      [ta, c, h, w, ho, wo](TensorImpl& self) {
        if (!ta.impl->requires_grad) return;
        auto& ga = ensure_grad(*ta.impl);
        const double* g = self.grad.data();
        for (long ch = 0; ch < c; ++ch) {
          double* ga_c = ga.data() + ch * h * w;
          const double* g_c = g + ch * ho * wo;
          for (long oy = 0; oy < ho; ++oy)
            for (long ox = 0; ox < wo; ++ox) {
              const double go = 0.25 * g_c[oy * wo + ox];
              ga_c[(2 * oy) * w + 2 * ox] += go;
              ga_c[(2 * oy) * w + 2 * ox + 1] += go;
              ga_c[(2 * oy + 1) * w + 2 * ox] += go;
              ga_c[(2 * oy + 1) * w + 2 * ox + 1] += go;
            }
        }
      },
      "downsample2x");
}

}  // namespace sf
