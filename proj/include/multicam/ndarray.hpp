// Copyright 2026 The multicam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "multicam/errors.hpp"

namespace multicam {

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Row-major strides (in elements) of a contiguous array.
inline std::vector<std::ptrdiff_t> contiguous_strides(const Shape& shape) {
  std::vector<std::ptrdiff_t> strides(shape.size());
  std::ptrdiff_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = s;
    s *= static_cast<std::ptrdiff_t>(shape[i]);
  }
  return strides;
}

inline Shape concat_shapes(const Shape& a, const Shape& b) {
  Shape out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Shape shape_slice(const Shape& s, std::size_t begin, std::size_t end) {
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(begin), s.begin() + static_cast<std::ptrdiff_t>(end));
}

/// Dense n-dimensional array with row-major storage.
///
/// Arrays are values: every shape operation returns a new contiguous array.
/// A shape of () holds exactly one element.
template <typename T>
class NdArray {
 public:
  using value_type = T;

  NdArray() : shape_{0} {}

  explicit NdArray(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  NdArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("NdArray: data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  NdArray(Shape shape, std::initializer_list<T> data) : NdArray(std::move(shape), std::vector<T>(data)) {}

  static NdArray zeros(Shape shape) { return NdArray(std::move(shape), T{0}); }
  static NdArray full(Shape shape, T v) { return NdArray(std::move(shape), v); }
  static NdArray scalar(T v) { return NdArray(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::ptrdiff_t i) const { return shape_.at(normalize_dim(i, ndim())); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename... I>
  T& operator()(I... idx) {
    return data_[offset_of({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    return data_[offset_of({static_cast<std::size_t>(idx)...})];
  }

  std::size_t offset_of(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("NdArray: index rank mismatch for shape " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t k = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[k]) throw ShapeError("NdArray: index out of range for shape " + shape_str(shape_));
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }

  /// Reshape; at most one extent may be -1 and is inferred.
  NdArray reshape(const std::vector<std::ptrdiff_t>& new_shape) const {
    Shape out(new_shape.size());
    std::ptrdiff_t infer = -1;
    std::size_t known = 1;
    for (std::size_t i = 0; i < new_shape.size(); ++i) {
      if (new_shape[i] == -1) {
        if (infer >= 0) throw ShapeError("reshape: more than one inferred dimension");
        infer = static_cast<std::ptrdiff_t>(i);
      } else if (new_shape[i] < 0) {
        throw ShapeError("reshape: negative extent");
      } else {
        out[i] = static_cast<std::size_t>(new_shape[i]);
        known *= out[i];
      }
    }
    if (infer >= 0) {
      if (known == 0 || size() % known != 0) {
        throw ShapeError("reshape: cannot infer extent reshaping " + shape_str(shape_));
      }
      out[static_cast<std::size_t>(infer)] = size() / known;
    }
    return reshape(out);
  }

  NdArray reshape(const Shape& new_shape) const {
    if (shape_numel(new_shape) != size()) {
      throw ShapeError("reshape: cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    }
    NdArray out = *this;
    out.shape_ = new_shape;
    return out;
  }

  NdArray permute(const std::vector<std::size_t>& perm) const {
    if (perm.size() != ndim()) throw ShapeError("permute: permutation rank mismatch for " + shape_str(shape_));
    std::vector<bool> seen(ndim(), false);
    Shape out_shape(ndim());
    auto st = contiguous_strides(shape_);
    std::vector<std::ptrdiff_t> out_st(ndim());
    for (std::size_t k = 0; k < perm.size(); ++k) {
      if (perm[k] >= ndim() || seen[perm[k]]) throw ShapeError("permute: invalid permutation");
      seen[perm[k]] = true;
      out_shape[k] = shape_[perm[k]];
      out_st[k] = st[perm[k]];
    }
    return gather(out_shape, out_st, 0);
  }

  NdArray transpose(std::ptrdiff_t a, std::ptrdiff_t b) const {
    std::vector<std::size_t> perm(ndim());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::swap(perm[normalize_dim(a, ndim())], perm[normalize_dim(b, ndim())]);
    return permute(perm);
  }

  NdArray squeeze(std::ptrdiff_t d) const {
    const std::size_t k = normalize_dim(d, ndim());
    if (shape_[k] != 1) throw ShapeError("squeeze: dimension " + std::to_string(k) + " of " + shape_str(shape_) + " is not 1");
    Shape s = shape_;
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(k));
    return reshape(s);
  }

  NdArray unsqueeze(std::ptrdiff_t d) const {
    const std::size_t k = normalize_dim(d, ndim() + 1);
    Shape s = shape_;
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(k), 1);
    return reshape(s);
  }

  /// Broadcast singleton dims (and prepend leading dims) to `target`.
  NdArray expand(const Shape& target) const {
    if (target.size() < ndim()) throw ShapeError("expand: cannot expand " + shape_str(shape_) + " to " + shape_str(target));
    const std::size_t lead = target.size() - ndim();
    auto st = contiguous_strides(shape_);
    std::vector<std::ptrdiff_t> out_st(target.size(), 0);
    for (std::size_t k = 0; k < ndim(); ++k) {
      if (shape_[k] == target[lead + k]) {
        out_st[lead + k] = st[k];
      } else if (shape_[k] != 1) {
        throw ShapeError("expand: cannot expand " + shape_str(shape_) + " to " + shape_str(target));
      }
    }
    return gather(target, out_st, 0);
  }

  /// Reverse the order of elements along `d`.
  NdArray flip(std::ptrdiff_t d) const {
    const std::size_t k = normalize_dim(d, ndim());
    auto st = contiguous_strides(shape_);
    std::ptrdiff_t offset = 0;
    if (shape_[k] > 0) offset = static_cast<std::ptrdiff_t>(shape_[k] - 1) * st[k];
    st[k] = -st[k];
    return gather(shape_, st, offset);
  }

  NdArray narrow(std::ptrdiff_t d, std::size_t start, std::size_t length) const {
    const std::size_t k = normalize_dim(d, ndim());
    if (start + length > shape_[k]) throw ShapeError("narrow: range out of bounds for " + shape_str(shape_));
    auto st = contiguous_strides(shape_);
    Shape s = shape_;
    s[k] = length;
    return gather(s, st, static_cast<std::ptrdiff_t>(start) * st[k]);
  }

  /// Select index `i` along `d`, removing that dimension.
  NdArray index(std::ptrdiff_t d, std::size_t i) const {
    const std::size_t k = normalize_dim(d, ndim());
    if (i >= shape_[k]) throw ShapeError("index: " + std::to_string(i) + " out of range for " + shape_str(shape_));
    return narrow(static_cast<std::ptrdiff_t>(k), i, 1).squeeze(static_cast<std::ptrdiff_t>(k));
  }

  /// Rows of the array flattened to (outer, inner) where inner covers dims [split, ndim).
  NdArray take_rows(std::size_t split, const std::vector<std::size_t>& rows) const {
    const std::size_t inner = shape_numel(shape_slice(shape_, split, ndim()));
    NdArray out(concat_shapes(Shape{rows.size()}, shape_slice(shape_, split, ndim())));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[r] * inner), inner,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(r * inner));
    }
    return out;
  }

  template <typename F>
  auto map(F&& f) const -> NdArray<std::invoke_result_t<F, const T&>> {
    using U = std::invoke_result_t<F, const T&>;
    std::vector<U> out;
    out.reserve(size());
    for (const auto& v : data_) out.push_back(f(v));
    return NdArray<U>(shape_, std::move(out));
  }

  template <typename U>
  NdArray<U> cast() const {
    return map([](const T& v) { return static_cast<U>(v); });
  }

  friend bool operator==(const NdArray& a, const NdArray& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

  static std::size_t normalize_dim(std::ptrdiff_t d, std::size_t rank) {
    const auto r = static_cast<std::ptrdiff_t>(rank);
    if (d < -r || d >= r) throw ShapeError("dimension " + std::to_string(d) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(d < 0 ? d + r : d);
  }

 private:
  // Materialize the strided view (out_shape, strides, offset) over this array's storage.
  NdArray gather(const Shape& out_shape, const std::vector<std::ptrdiff_t>& strides, std::ptrdiff_t offset) const {
    NdArray out(out_shape);
    const std::size_t n = out.size();
    if (n == 0) return out;
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::ptrdiff_t src = offset;
    for (std::size_t flat = 0; flat < n; ++flat) {
      out.data_[flat] = data_[static_cast<std::size_t>(src)];
      for (std::size_t k = rank; k-- > 0;) {
        if (++idx[k] < out_shape[k]) {
          src += strides[k];
          break;
        }
        src -= strides[k] * static_cast<std::ptrdiff_t>(out_shape[k] - 1);
        idx[k] = 0;
      }
    }
    return out;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Mask = NdArray<std::uint8_t>;

/// Stack equally shaped arrays along a new dimension `d`.
template <typename T>
NdArray<T> stack(const std::vector<NdArray<T>>& arrays, std::ptrdiff_t d = 0) {
  if (arrays.empty()) throw ShapeError("stack: empty input");
  const Shape& s = arrays.front().shape();
  for (const auto& a : arrays) {
    if (a.shape() != s) throw ShapeError("stack: shape mismatch " + shape_str(s) + " vs " + shape_str(a.shape()));
  }
  const std::size_t k = NdArray<T>::normalize_dim(d, s.size() + 1);
  const std::size_t outer = shape_numel(shape_slice(s, 0, k));
  const std::size_t inner = shape_numel(shape_slice(s, k, s.size()));
  Shape out_shape = s;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(k), arrays.size());
  NdArray<T> out(out_shape);
  auto dst = out.data().begin();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& a : arrays) {
      dst = std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o * inner), inner, dst);
    }
  }
  return out;
}

/// Concatenate arrays along existing dimension `d`.
template <typename T>
NdArray<T> concat(const std::vector<NdArray<T>>& arrays, std::ptrdiff_t d = 0) {
  if (arrays.empty()) throw ShapeError("concat: empty input");
  const Shape& s0 = arrays.front().shape();
  const std::size_t k = NdArray<T>::normalize_dim(d, s0.size());
  Shape out_shape = s0;
  out_shape[k] = 0;
  for (const auto& a : arrays) {
    Shape s = a.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    out_shape[k] += s[k];
    s[k] = s0[k];
    if (s != s0) throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(a.shape()));
  }
  const std::size_t outer = shape_numel(shape_slice(s0, 0, k));
  const std::size_t trailing = shape_numel(shape_slice(s0, k + 1, s0.size()));
  NdArray<T> out(out_shape);
  auto dst = out.data().begin();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& a : arrays) {
      const std::size_t chunk = a.shape()[k] * trailing;
      dst = std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk, dst);
    }
  }
  return out;
}

}  // namespace multicam
