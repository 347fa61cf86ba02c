#pragma once

#include <vector>

#include "sf/tensor.hpp"

namespace sf {
namespace detail {

// Right-aligned broadcast of two shapes; throws ShapeError on conflict.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);

// Row-major strides; size-1 dims keep their natural stride (callers zero them
// for broadcasting).
std::vector<long> strides_of(const Shape& s);

// Strides of `s` aligned to an output of shape `out`, with 0 stride on
// broadcast dimensions.
std::vector<long> broadcast_strides(const Shape& s, const Shape& out);

// Accumulates `g` (laid out as `from`) into a buffer of shape `to`,
// summing over broadcast dimensions. `to` must broadcast to `from`.
void reduce_into(const std::vector<double>& g, const Shape& from, const Shape& to,
                 std::vector<double>& acc);

// Walks every flat index of `out`, producing the matching offsets into two
// broadcast operands.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<long>& sa,
                        const std::vector<long>& sb, F&& f) {
  const long n = shape_numel(out);
  const int r = static_cast<int>(out.size());
  if (r == 0) {
    f(0l, 0l, 0l);
    return;
  }
  std::vector<long> idx(r, 0);
  long oa = 0, ob = 0;
  for (long i = 0; i < n; ++i) {
    f(i, oa, ob);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail
}  // namespace sf
