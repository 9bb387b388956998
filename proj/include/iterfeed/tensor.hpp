/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_TENSOR_HPP_
#define ITERFEED_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "iterfeed/common.hpp"

namespace iterfeed {

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Dense row-major tensor. Rank-2 is (rows, cols); rank-3 feature maps are
// (H, W, C) with channels contiguous.
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)) {
    data.assign(static_cast<std::size_t>(shape_size(shape)), S(0));
  }
  Tensor(Shape sh, S fill) : shape(std::move(sh)) {
    data.assign(static_cast<std::size_t>(shape_size(shape)), fill);
  }
  Tensor(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {}

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  S& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const S& operator[](std::int64_t i) const {
    return data[static_cast<std::size_t>(i)];
  }

  S& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  const S& at2(int r, int c) const {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
  }
  S& at3(int h, int w, int c) {
    return data[(static_cast<std::size_t>(h) * shape[1] + w) * shape[2] + c];
  }
  const S& at3(int h, int w, int c) const {
    return data[(static_cast<std::size_t>(h) * shape[1] + w) * shape[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const S& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  S min_value() const { return *std::min_element(data.begin(), data.end()); }
  S max_value() const { return *std::max_element(data.begin(), data.end()); }

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
  static Tensor full(Shape sh, S v) { return Tensor(std::move(sh), v); }
  static Tensor scalar(S v) { return Tensor(Shape{1}, std::vector<S>{v}); }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

template <class S>
Tensor<S> reshaped(const Tensor<S>& t, Shape sh) {
  if (shape_size(sh) != t.size())
    throw DataError("reshape: size mismatch " + shape_str(t.shape) + " -> " +
                    shape_str(sh));
  Tensor<S> out = t;
  out.shape = std::move(sh);
  return out;
}

}  // namespace iterfeed

#endif  // ITERFEED_TENSOR_HPP_
