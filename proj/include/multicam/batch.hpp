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

#include <cmath>
#include <concepts>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "multicam/ndarray.hpp"

namespace multicam {

template <typename Real>
using Vec2 = Eigen::Matrix<Real, 2, 1>;
template <typename Real>
using Vec3 = Eigen::Matrix<Real, 3, 1>;
template <typename Real>
using Mat3 = Eigen::Matrix<Real, 3, 3>;

/// Image extent in pixels, rows first.
struct ImageSize {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Split of two operand shapes into shared batch dims and the group dims of the
/// operand that carries more leading dims.
struct BatchSplit {
  Shape batch_shape;
  Shape group_shape;
  std::size_t event_dims = 0;   // trailing per-element dims of the grouped operand
  std::size_t grouped_arg = 1;  // 0 or 1: which operand carries group_shape
};

/// Infer batch and group dimensions in the style of `(*batch, d, d) x (*batch, *group, d)`.
///
/// The operand with fewer non-event dims defines the batch; the other operand must
/// start with the same extents, and its remaining non-event dims form the group.
inline BatchSplit infer_batch(const Shape& a_shape, std::size_t a_event_dims, const Shape& b_shape,
                              std::size_t b_event_dims) {
  if (a_shape.size() < a_event_dims || b_shape.size() < b_event_dims) {
    throw ShapeError("infer_batch: shapes " + shape_str(a_shape) + " and " + shape_str(b_shape) +
                     " have fewer dims than their event dims");
  }
  const std::size_t a_lead = a_shape.size() - a_event_dims;
  const std::size_t b_lead = b_shape.size() - b_event_dims;
  const bool a_is_batch = a_lead <= b_lead;
  const Shape& batch_src = a_is_batch ? a_shape : b_shape;
  const Shape& group_src = a_is_batch ? b_shape : a_shape;
  const std::size_t nb = a_is_batch ? a_lead : b_lead;
  const std::size_t ng = a_is_batch ? b_lead : a_lead;
  BatchSplit split;
  split.batch_shape = shape_slice(batch_src, 0, nb);
  if (shape_slice(group_src, 0, nb) != split.batch_shape) {
    throw ShapeError("infer_batch: batch dimensions of " + shape_str(a_shape) + " and " + shape_str(b_shape) +
                     " disagree");
  }
  split.group_shape = shape_slice(group_src, nb, ng);
  split.event_dims = a_is_batch ? b_event_dims : a_event_dims;
  split.grouped_arg = a_is_batch ? 1 : 0;
  return split;
}

/// Multiply points `(*batch, *group, d)` by matrices `(*batch, d, d)`.
template <std::floating_point Real>
NdArray<Real> apply_matrix(const NdArray<Real>& A, const NdArray<Real>& pts) {
  if (A.ndim() < 2 || A.dim(-1) != A.dim(-2)) throw ShapeError("apply_matrix: A must be (*batch, d, d), got " + shape_str(A.shape()));
  if (pts.ndim() < 1 || pts.dim(-1) != A.dim(-1)) {
    throw ShapeError("apply_matrix: dimension mismatch between " + shape_str(A.shape()) + " and " + shape_str(pts.shape()));
  }
  const BatchSplit split = infer_batch(A.shape(), 2, pts.shape(), 1);
  if (split.grouped_arg == 0 && !split.group_shape.empty()) {
    throw ShapeError("apply_matrix: matrices " + shape_str(A.shape()) + " have more batch dims than points " +
                     shape_str(pts.shape()));
  }
  const std::size_t d = A.dim(-1);
  const std::size_t nb = shape_numel(split.batch_shape);
  const std::size_t ng = shape_numel(split.group_shape);
  NdArray<Real> out(pts.shape());
  for (std::size_t b = 0; b < nb; ++b) {
    const Real* m = A.ptr() + b * d * d;
    for (std::size_t g = 0; g < ng; ++g) {
      const Real* x = pts.ptr() + (b * ng + g) * d;
      Real* y = out.ptr() + (b * ng + g) * d;
      for (std::size_t r = 0; r < d; ++r) {
        Real acc = 0;
        for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * x[c];
        y[r] = acc;
      }
    }
  }
  return out;
}

/// Batched matrix product of equally batched `(*batch, n, k)` and `(*batch, k, m)`.
template <std::floating_point Real>
NdArray<Real> matmul(const NdArray<Real>& A, const NdArray<Real>& B) {
  if (A.ndim() < 2 || B.ndim() < 2 || A.dim(-1) != B.dim(-2) ||
      shape_slice(A.shape(), 0, A.ndim() - 2) != shape_slice(B.shape(), 0, B.ndim() - 2)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  }
  const std::size_t n = A.dim(-2), k = A.dim(-1), m = B.dim(-1);
  Shape out_shape = shape_slice(A.shape(), 0, A.ndim() - 2);
  out_shape.push_back(n);
  out_shape.push_back(m);
  NdArray<Real> out(out_shape);
  const std::size_t nb = shape_numel(shape_slice(A.shape(), 0, A.ndim() - 2));
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        Real acc = 0;
        for (std::size_t t = 0; t < k; ++t) acc += A[b * n * k + i * k + t] * B[b * k * m + t * m + j];
        out[b * n * m + i * m + j] = acc;
      }
    }
  }
  return out;
}

template <std::floating_point Real>
Mat3<Real> mat3_at(const NdArray<Real>& a, std::size_t batch_index) {
  return Eigen::Map<const Eigen::Matrix<Real, 3, 3, Eigen::RowMajor>>(a.ptr() + 9 * batch_index);
}

template <std::floating_point Real>
Vec3<Real> vec3_at(const NdArray<Real>& a, std::size_t batch_index) {
  return Eigen::Map<const Vec3<Real>>(a.ptr() + 3 * batch_index);
}

/// Rigid transform x_cam = R * x_world + T, batched over leading dims.
template <std::floating_point Real>
class Pose {
 public:
  /// Validating constructor: R is (*batch, 3, 3) and orthonormal with det +1, T is (*batch, 3).
  static Pose make(NdArray<Real> R, NdArray<Real> T, Real tol = Real(1e-6)) {
    Pose p = unchecked(std::move(R), std::move(T));
    for (std::size_t b = 0; b < p.numel(); ++b) {
      const Mat3<Real> r = p.rotation(b);
      if (!(r.transpose() * r - Mat3<Real>::Identity()).isZero(tol) || std::abs(r.determinant() - 1) > tol) {
        throw ShapeError("Pose: R is not a proper rotation at batch element " + std::to_string(b));
      }
    }
    return p;
  }

  /// Shape-checked only; used for reflected frames produced by extrinsic flips.
  static Pose unchecked(NdArray<Real> R, NdArray<Real> T) {
    if (R.ndim() < 2 || R.dim(-1) != 3 || R.dim(-2) != 3) throw ShapeError("Pose: R must be (*batch, 3, 3)");
    if (T.ndim() < 1 || T.dim(-1) != 3) throw ShapeError("Pose: T must be (*batch, 3)");
    if (shape_slice(R.shape(), 0, R.ndim() - 2) != shape_slice(T.shape(), 0, T.ndim() - 1)) {
      throw ShapeError("Pose: batch mismatch between R " + shape_str(R.shape()) + " and T " + shape_str(T.shape()));
    }
    Pose p;
    p.R_ = std::move(R);
    p.T_ = std::move(T);
    return p;
  }

  static Pose identity(const Shape& batch_shape = {}) {
    NdArray<Real> R(concat_shapes(batch_shape, {3, 3}));
    NdArray<Real> T(concat_shapes(batch_shape, {3}));
    for (std::size_t b = 0; b < shape_numel(batch_shape); ++b) {
      for (std::size_t i = 0; i < 3; ++i) R[9 * b + 4 * i] = 1;
    }
    return unchecked(std::move(R), std::move(T));
  }

  static Pose from_eigen(const Mat3<Real>& r, const Vec3<Real>& t) {
    NdArray<Real> R(Shape{3, 3});
    NdArray<Real> T(Shape{3});
    for (int i = 0; i < 3; ++i) {
      T[static_cast<std::size_t>(i)] = t(i);
      for (int j = 0; j < 3; ++j) R[static_cast<std::size_t>(3 * i + j)] = r(i, j);
    }
    return unchecked(std::move(R), std::move(T));
  }

  const NdArray<Real>& R() const noexcept { return R_; }
  const NdArray<Real>& T() const noexcept { return T_; }
  Shape batch_shape() const { return shape_slice(T_.shape(), 0, T_.ndim() - 1); }
  std::size_t numel() const { return T_.size() / 3; }
  Mat3<Real> rotation(std::size_t b) const { return mat3_at(R_, b); }
  Vec3<Real> translation(std::size_t b) const { return vec3_at(T_, b); }

  /// Inverse transform (camera to world).
  Pose inverse() const {
    NdArray<Real> R(R_.shape()), T(T_.shape());
    for (std::size_t b = 0; b < numel(); ++b) {
      const Mat3<Real> rt = rotation(b).transpose();
      const Vec3<Real> t = -rt * translation(b);
      store(R, T, b, rt, t);
    }
    return unchecked(std::move(R), std::move(T));
  }

  /// Composition: (this * other)(x) = this(other(x)).
  Pose compose(const Pose& other) const {
    if (other.batch_shape() != batch_shape()) throw ShapeError("Pose::compose: batch mismatch");
    NdArray<Real> R(R_.shape()), T(T_.shape());
    for (std::size_t b = 0; b < numel(); ++b) {
      store(R, T, b, rotation(b) * other.rotation(b), rotation(b) * other.translation(b) + translation(b));
    }
    return unchecked(std::move(R), std::move(T));
  }

  static void store(NdArray<Real>& R, NdArray<Real>& T, std::size_t b, const Mat3<Real>& r, const Vec3<Real>& t) {
    for (int i = 0; i < 3; ++i) {
      T[3 * b + static_cast<std::size_t>(i)] = t(i);
      for (int j = 0; j < 3; ++j) R[9 * b + static_cast<std::size_t>(3 * i + j)] = r(i, j);
    }
  }

 private:
  NdArray<Real> R_;
  NdArray<Real> T_;
};

/// Apply R x + T to points, or R x to vectors, over `(*batch, *group, 3)`.
template <std::floating_point Real>
NdArray<Real> apply_pose(const Pose<Real>& pose, const NdArray<Real>& pts, bool is_vector = false) {
  NdArray<Real> out = apply_matrix(pose.R(), pts);
  if (is_vector) return out;
  const BatchSplit split = infer_batch(pose.T().shape(), 1, pts.shape(), 1);
  const std::size_t nb = shape_numel(split.batch_shape);
  const std::size_t ng = shape_numel(split.group_shape);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t g = 0; g < ng; ++g) {
      for (std::size_t k = 0; k < 3; ++k) out[(b * ng + g) * 3 + k] += pose.T()[b * 3 + k];
    }
  }
  return out;
}

namespace detail {

inline void check_image_size(const ImageSize& hw) {
  if (hw.height == 0 || hw.width == 0) throw ShapeError("image size must be at least 1x1");
}

// n = 2p/S - 1 as a 3x3 matrix acting on homogeneous pixel coordinates.
template <std::floating_point Real>
Mat3<Real> pixel_to_normalized_matrix(const ImageSize& hw) {
  check_image_size(hw);
  Mat3<Real> n = Mat3<Real>::Identity();
  n(0, 0) = Real(2) / static_cast<Real>(hw.width);
  n(1, 1) = Real(2) / static_cast<Real>(hw.height);
  n(0, 2) = -1;
  n(1, 2) = -1;
  return n;
}

template <std::floating_point Real>
NdArray<Real> left_multiply_intrinsics(const Mat3<Real>& n, const NdArray<Real>& K) {
  if (K.ndim() < 2 || K.dim(-1) != 3 || K.dim(-2) != 3) throw ShapeError("intrinsics must be (*batch, 3, 3)");
  NdArray<Real> out(K.shape());
  for (std::size_t b = 0; b < K.size() / 9; ++b) {
    const Mat3<Real> k = mat3_at(K, b);
    if (k(2, 0) != 0 || k(2, 1) != 0 || k(2, 2) != 1) throw ShapeError("intrinsics must have last row (0, 0, 1)");
    const Mat3<Real> r = n * k;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) out[9 * b + static_cast<std::size_t>(3 * i + j)] = r(i, j);
    }
  }
  return out;
}

}  // namespace detail

/// Convert pixel-unit intrinsics to normalized-coordinate intrinsics for an image of size hw.
template <std::floating_point Real>
NdArray<Real> normalized_from_pixel_intrinsics(const NdArray<Real>& K, const ImageSize& hw) {
  return detail::left_multiply_intrinsics(detail::pixel_to_normalized_matrix<Real>(hw), K);
}

template <std::floating_point Real>
NdArray<Real> pixel_from_normalized_intrinsics(const NdArray<Real>& K, const ImageSize& hw) {
  detail::check_image_size(hw);
  Mat3<Real> m = Mat3<Real>::Identity();
  m(0, 0) = m(0, 2) = static_cast<Real>(hw.width) / 2;
  m(1, 1) = m(1, 2) = static_cast<Real>(hw.height) / 2;
  return detail::left_multiply_intrinsics<Real>(m, K);
}

/// Map pixel coordinates `(..., 2)` (x uses W, y uses H) to normalized coordinates.
template <std::floating_point Real>
NdArray<Real> normalized_from_pixel_coords(const NdArray<Real>& p, const ImageSize& hw) {
  detail::check_image_size(hw);
  if (p.ndim() < 1 || p.dim(-1) != 2) throw ShapeError("coordinates must be (..., 2)");
  NdArray<Real> out(p.shape());
  const Real w = static_cast<Real>(hw.width), h = static_cast<Real>(hw.height);
  for (std::size_t i = 0; i < p.size(); i += 2) {
    out[i] = Real(2) * p[i] / w - 1;
    out[i + 1] = Real(2) * p[i + 1] / h - 1;
  }
  return out;
}

template <std::floating_point Real>
NdArray<Real> pixel_from_normalized_coords(const NdArray<Real>& n, const ImageSize& hw) {
  detail::check_image_size(hw);
  if (n.ndim() < 1 || n.dim(-1) != 2) throw ShapeError("coordinates must be (..., 2)");
  NdArray<Real> out(n.shape());
  const Real w = static_cast<Real>(hw.width), h = static_cast<Real>(hw.height);
  for (std::size_t i = 0; i < n.size(); i += 2) {
    out[i] = (n[i] + 1) * w / 2;
    out[i + 1] = (n[i + 1] + 1) * h / 2;
  }
  return out;
}

/// Normalized coordinate of the center of pixel `i` along an axis of `extent` pixels.
template <std::floating_point Real>
constexpr Real pixel_center(std::size_t i, std::size_t extent) {
  return (Real(2) * static_cast<Real>(i) + 1) / static_cast<Real>(extent) - 1;
}

/// Normalized pixel-center grid of shape (H, W, 2) holding (x, y).
template <std::floating_point Real>
NdArray<Real> pixel_grid(const ImageSize& hw) {
  detail::check_image_size(hw);
  NdArray<Real> g(Shape{hw.height, hw.width, 2});
  for (std::size_t r = 0; r < hw.height; ++r) {
    for (std::size_t c = 0; c < hw.width; ++c) {
      g[(r * hw.width + c) * 2] = pixel_center<Real>(c, hw.width);
      g[(r * hw.width + c) * 2 + 1] = pixel_center<Real>(r, hw.height);
    }
  }
  return g;
}

}  // namespace multicam
