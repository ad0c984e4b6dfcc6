#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace preimage {

// Dense rank-4 array in NCHW layout. Vectors are stored as (n, k, 1, 1),
// scalars as (1, 1, 1, 1). All numerics in this project are double precision.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw std::invalid_argument("Tensor: negative dimension");
  }

  static Tensor scalar(double x) {
    Tensor t(1, 1, 1, 1);
    t.v[0] = x;
    return t;
  }

  static Tensor from_vec(const std::vector<double>& xs) {
    Tensor t(1, static_cast<int>(xs.size()), 1, 1);
    t.v = xs;
    return t;
  }

  int size() const { return n * c * h * w; }

  std::array<int, 4> shape() const { return {n, c, h, w}; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  double& at(int in, int ic, int ih, int iw) {
    return v[(((static_cast<std::size_t>(in) * c) + ic) * h + ih) * w + iw];
  }
  double at(int in, int ic, int ih, int iw) const {
    return v[(((static_cast<std::size_t>(in) * c) + ic) * h + ih) * w + iw];
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

inline bool all_finite(const Tensor& t) {
  for (double x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.n) + "," + std::to_string(t.c) + "," +
         std::to_string(t.h) + "," + std::to_string(t.w) + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
}

}  // namespace preimage
