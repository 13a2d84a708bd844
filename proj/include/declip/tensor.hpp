/*
Copyright 2026 The Declip Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace declip {

/**
 * Dense NCHW tensor. Plain value type: copy copies, move moves. All layer
 * arithmetic lives in free functions under nn/.
 */
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  T at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  T* plane(int in, int ic) { return v.data() + (static_cast<size_t>(in) * c + ic) * h * w; }
  const T* plane(int in, int ic) const {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  void add(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("tensor add: shape mismatch");
    for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
  }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

template <typename T>
double squared_norm(const Tensor<T>& t) {
  double s = 0;
  for (T x : t.v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

}  // namespace declip
