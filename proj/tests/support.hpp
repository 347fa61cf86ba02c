#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sf/rng.hpp"
#include "sf/tensor.hpp"

namespace sft {

inline sf::Tensor random_tensor(sf::Shape shape, sf::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(sf::shape_numel(shape));
  for (double& v : d) v = rng.uniform(lo, hi);
  return sf::Tensor::from_data(std::move(shape), std::move(d));
}

// Naive triple-loop reference for matmul.
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b, long m, long k, long n) {
  std::vector<double> c(m * n, 0.0);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j)
      for (long p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Direct six-loop reference for conv2d (cross-correlation, zero padding).
inline std::vector<double> conv2d_oracle(const std::vector<double>& in,
                                         const std::vector<double>& ker, long cin, long h, long w,
                                         long cout, long k, long stride, long pad) {
  const long ho = (h + 2 * pad - k) / stride + 1;
  const long wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(cout * ho * wo, 0.0);
  for (long oc = 0; oc < cout; ++oc)
    for (long oy = 0; oy < ho; ++oy)
      for (long ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (long ic = 0; ic < cin; ++ic)
          for (long ky = 0; ky < k; ++ky)
            for (long kx = 0; kx < k; ++kx) {
              const long iy = oy * stride - pad + ky;
              const long ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += in[(ic * h + iy) * w + ix] * ker[((oc * cin + ic) * k + ky) * k + kx];
            }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sft
