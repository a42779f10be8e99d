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
#include <array>
#include <cmath>
#include <concepts>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "multicam/batch.hpp"
#include "multicam/camera_models.hpp"
#include "multicam/cubemap.hpp"
#include "multicam/ndarray.hpp"
#include "multicam/parallel.hpp"

namespace multicam {

/// Limits of the valid region. `limit` is z_min for planar kinds and dist_min otherwise.
template <std::floating_point Real>
struct CameraLimits {
  std::optional<Real> limit;
  std::optional<Real> theta_max;
};

inline constexpr double kDefaultMinDepth = 1e-8;

/// Homogeneous batch of cameras of one kind.
///
/// Every parameter is stored as an array of shape (*batch_shape, param_dim); the
/// limits z_min / dist_min and theta_max are stored the same way with param_dim 1.
template <std::floating_point Real = double>
class Camera {
 public:
  using Scalar = Real;
  using Array = NdArray<Real>;
  using ParamMap = std::map<std::string, Array, std::less<>>;

  /// Build a camera from named parameter arrays.
  ///
  /// Limit arrays (z_min / dist_min / theta_max) may be passed in `params`; otherwise
  /// they are filled from `limits` or the defaults (1e-8 and pi).
  static Camera make(CameraKind kind, ParamMap params, const CameraLimits<Real>& limits = {}) {
    Camera cam;
    cam.kind_ = kind;
    const auto specs = param_specs(kind);
    std::optional<Shape> batch;
    const auto take_batch = [&](const std::string& name, const Array& a) {
      if (a.ndim() < 1) throw CameraError("parameter '" + name + "' must have a trailing parameter dim");
      Shape b = shape_slice(a.shape(), 0, a.ndim() - 1);
      if (batch && *batch != b) {
        throw CameraError("parameter '" + name + "' has batch shape " + shape_str(b) + ", expected " + shape_str(*batch));
      }
      batch = std::move(b);
    };
    for (const ParamSpec& spec : specs) {
      auto it = params.find(spec.name);
      if (it == params.end()) {
        throw CameraError(std::string(kind_name(kind)) + " camera is missing parameter '" + std::string(spec.name) + "'");
      }
      const Array& a = it->second;
      take_batch(it->first, a);
      if (spec.dim != 0 && a.dim(-1) != spec.dim) {
        throw CameraError("parameter '" + std::string(spec.name) + "' expects " + std::to_string(spec.dim) +
                          " values, got " + std::to_string(a.dim(-1)));
      }
      if (spec.dim == 0 && a.dim(-1) == 0) throw CameraError("parameter '" + std::string(spec.name) + "' is empty");
      cam.params_.emplace(it->first, a);
    }
    if (!batch) {
      // Cube: the batch shape comes from the limit array, if given.
      auto it = params.find(limit_name(kind));
      batch = it == params.end() ? Shape{} : Shape(it->second.shape().begin(), it->second.shape().end() - (it->second.ndim() > 0 ? 1 : 0));
    }
    cam.batch_shape_ = *batch;

    const auto limit_array = [&](std::string_view name, Real fallback) {
      auto it = params.find(name);
      if (it == params.end()) return Array::full(concat_shapes(cam.batch_shape_, {1}), fallback);
      Array a = it->second;
      if (a.shape() == cam.batch_shape_) a = a.unsqueeze(-1);
      if (a.shape() != concat_shapes(cam.batch_shape_, {1})) {
        throw CameraError("limit '" + std::string(name) + "' has shape " + shape_str(it->second.shape()) +
                          ", expected " + shape_str(concat_shapes(cam.batch_shape_, {1})));
      }
      return a;
    };
    cam.params_.emplace(std::string(limit_name(kind)),
                        limit_array(limit_name(kind), limits.limit.value_or(static_cast<Real>(kDefaultMinDepth))));
    if (has_theta_max(kind)) {
      cam.params_.emplace("theta_max", limit_array("theta_max", limits.theta_max.value_or(std::numbers::pi_v<Real>)));
    }

    for (const auto& [name, _] : params) {
      if (!cam.params_.contains(name)) {
        throw CameraError(std::string(kind_name(kind)) + " camera does not take parameter '" + name + "'");
      }
    }
    if (is_affine(kind)) {
      const Array& aff = cam.params_.at("affine");
      for (std::size_t b = 0; b < cam.numel(); ++b) {
        if (aff[4 * b] == 0 || aff[4 * b + 1] == 0) throw CameraError("focal lengths must be nonzero");
      }
    }
    return cam;
  }

  static Camera pinhole(const Array& K, Real z_min = static_cast<Real>(kDefaultMinDepth)) {
    return make(CameraKind::Pinhole, {{"affine", affine_from_intrinsics(K)}}, {z_min, {}});
  }
  static Camera orthographic(const Array& K, Real z_min = static_cast<Real>(kDefaultMinDepth)) {
    return make(CameraKind::Orthographic, {{"affine", affine_from_intrinsics(K)}}, {z_min, {}});
  }
  static Camera opencv(const Array& K, const Array& radial, const Array& tangential,
                       Real z_min = static_cast<Real>(kDefaultMinDepth)) {
    return make(CameraKind::OpenCV, {{"affine", affine_from_intrinsics(K)}, {"radial", radial}, {"tangential", tangential}},
                {z_min, {}});
  }
  static Camera equirectangular(const Array& K, Real dist_min = static_cast<Real>(kDefaultMinDepth)) {
    return make(CameraKind::Equirectangular, {{"affine", affine_from_intrinsics(K)}}, {dist_min, {}});
  }
  static Camera opencv_fisheye(const Array& K, const Array& k, Real dist_min = static_cast<Real>(kDefaultMinDepth),
                               Real theta_max = std::numbers::pi_v<Real>) {
    return make(CameraKind::OpenCVFisheye, {{"affine", affine_from_intrinsics(K)}, {"distortion", k}}, {dist_min, theta_max});
  }
  static Camera backward_forward_polynomial_fisheye(const Array& K, const Array& forward, const Array& backward,
                                                    Real dist_min = static_cast<Real>(kDefaultMinDepth),
                                                    Real theta_max = std::numbers::pi_v<Real>) {
    return make(CameraKind::BackwardForwardPolynomialFisheye,
                {{"affine", affine_from_intrinsics(K)}, {"forward_poly", forward}, {"backward_poly", backward}},
                {dist_min, theta_max});
  }
  static Camera kitti360_fisheye(const Array& K, const Array& k, const Array& xi,
                                 Real dist_min = static_cast<Real>(kDefaultMinDepth),
                                 Real theta_max = std::numbers::pi_v<Real>) {
    return make(CameraKind::Kitti360Fisheye, {{"affine", affine_from_intrinsics(K)}, {"distortion", k}, {"xi", xi}},
                {dist_min, theta_max});
  }
  static Camera cube(const Shape& batch_shape = {}, Real dist_min = static_cast<Real>(kDefaultMinDepth)) {
    return make(CameraKind::Cube, {{"dist_min", Array::full(concat_shapes(batch_shape, {1}), dist_min)}});
  }

  /// (f0, f1, c0, c1) from intrinsic matrices (*batch, 3, 3).
  static Array affine_from_intrinsics(const Array& K) {
    if (K.ndim() < 2 || K.dim(-1) != 3 || K.dim(-2) != 3) throw CameraError("intrinsics must be (*batch, 3, 3)");
    Array out(concat_shapes(shape_slice(K.shape(), 0, K.ndim() - 2), {4}));
    for (std::size_t b = 0; b < K.size() / 9; ++b) {
      out[4 * b] = K[9 * b];
      out[4 * b + 1] = K[9 * b + 4];
      out[4 * b + 2] = K[9 * b + 2];
      out[4 * b + 3] = K[9 * b + 5];
    }
    return out;
  }

  CameraKind kind() const noexcept { return kind_; }
  const Shape& shape() const noexcept { return batch_shape_; }
  std::size_t numel() const { return shape_numel(batch_shape_); }
  std::size_t pixel_dim() const { return multicam::pixel_dim(kind_); }
  const Array& param(std::string_view name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw CameraError("camera has no parameter '" + std::string(name) + "'");
    return it->second;
  }
  const ParamMap& params() const noexcept { return params_; }
  const NewtonConfig<Real>& newton_config() const noexcept { return newton_; }
  Camera with_newton_config(const NewtonConfig<Real>& cfg) const {
    cfg.validate();
    Camera c = *this;
    c.newton_ = cfg;
    return c;
  }

  /// Intrinsic matrices (*batch, 3, 3) of an affine camera.
  Array intrinsics() const {
    const Array& aff = param("affine");
    Array K(concat_shapes(batch_shape_, {3, 3}));
    for (std::size_t b = 0; b < numel(); ++b) {
      K[9 * b] = aff[4 * b];
      K[9 * b + 4] = aff[4 * b + 1];
      K[9 * b + 2] = aff[4 * b + 2];
      K[9 * b + 5] = aff[4 * b + 3];
      K[9 * b + 8] = 1;
    }
    return K;
  }

  CameraView<Real> element(std::size_t b) const {
    CameraView<Real> v;
    v.kind = kind_;
    v.newton = newton_;
    v.limit = params_.find(limit_name(kind_))->second[b];
    if (has_theta_max(kind_)) v.theta_max = params_.find("theta_max")->second[b];
    const auto row = [&](std::string_view name) {
      const Array& a = params_.find(name)->second;
      const std::size_t d = a.dim(-1);
      return std::span<const Real>(a.ptr() + b * d, d);
    };
    if (is_affine(kind_)) v.affine = row("affine").data();
    switch (kind_) {
      case CameraKind::OpenCV:
        v.extra0 = row("radial");
        v.extra1 = row("tangential");
        break;
      case CameraKind::OpenCVFisheye: v.extra0 = row("distortion"); break;
      case CameraKind::BackwardForwardPolynomialFisheye:
        v.extra0 = row("forward_poly");
        v.extra1 = row("backward_poly");
        break;
      case CameraKind::Kitti360Fisheye:
        v.extra0 = row("distortion");
        v.extra1 = row("xi");
        break;
      default: break;
    }
    return v;
  }

  /// Every parameter array with its name, in a stable order.
  std::vector<std::pair<std::string, Array>> named_tensors() const {
    std::vector<std::pair<std::string, Array>> out;
    for (const ParamSpec& s : param_specs(kind_)) out.emplace_back(std::string(s.name), params_.find(s.name)->second);
    out.emplace_back(std::string(limit_name(kind_)), params_.find(limit_name(kind_))->second);
    if (has_theta_max(kind_)) out.emplace_back("theta_max", params_.find("theta_max")->second);
    return out;
  }

  // Tensor-like operations over the batch dims; parameter dims are untouched.

  Camera reshape(const Shape& batch_shape) const {
    return transform(batch_shape, [&](const Array& a) { return a.reshape(concat_shapes(batch_shape, {a.dim(-1)})); });
  }
  Camera permute(const std::vector<std::size_t>& perm) const {
    if (perm.size() != batch_shape_.size()) throw ShapeError("Camera::permute: permutation rank mismatch");
    std::vector<std::size_t> full = perm;
    full.push_back(perm.size());
    Shape s(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) s[i] = batch_shape_.at(perm[i]);
    return transform(s, [&](const Array& a) { return a.permute(full); });
  }
  Camera transpose(std::ptrdiff_t a, std::ptrdiff_t b) const {
    const std::size_t i = Array::normalize_dim(a, batch_shape_.size());
    const std::size_t j = Array::normalize_dim(b, batch_shape_.size());
    std::vector<std::size_t> perm(batch_shape_.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    std::swap(perm[i], perm[j]);
    return permute(perm);
  }
  Camera squeeze(std::ptrdiff_t d) const {
    const std::size_t k = Array::normalize_dim(d, batch_shape_.size());
    if (batch_shape_[k] != 1) throw ShapeError("Camera::squeeze: dimension is not 1");
    Shape s = batch_shape_;
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(k));
    return reshape(s);
  }
  Camera unsqueeze(std::ptrdiff_t d) const {
    const std::size_t k = Array::normalize_dim(d, batch_shape_.size() + 1);
    Shape s = batch_shape_;
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(k), 1);
    return reshape(s);
  }
  Camera expand(const Shape& batch_shape) const {
    return transform(batch_shape, [&](const Array& a) { return a.expand(concat_shapes(batch_shape, {a.dim(-1)})); });
  }
  Camera flip(std::ptrdiff_t d) const {
    const auto k = static_cast<std::ptrdiff_t>(Array::normalize_dim(d, batch_shape_.size()));
    return transform(batch_shape_, [&](const Array& a) { return a.flip(k); });
  }
  /// Select element `i` of the leading batch dim.
  Camera operator[](std::size_t i) const {
    if (batch_shape_.empty()) throw ShapeError("cannot index a scalar camera");
    Shape s(batch_shape_.begin() + 1, batch_shape_.end());
    return transform(s, [&](const Array& a) { return a.index(0, i); });
  }
  Camera slice(std::ptrdiff_t d, std::size_t start, std::size_t length) const {
    const std::size_t k = Array::normalize_dim(d, batch_shape_.size());
    Shape s = batch_shape_;
    s[k] = length;
    return transform(s, [&](const Array& a) { return a.narrow(static_cast<std::ptrdiff_t>(k), start, length); });
  }
  Camera clone() const { return *this; }
  Camera detach() const { return *this; }

  /// 1-D camera holding the given flat batch elements in order.
  Camera gather(const std::vector<std::size_t>& flat) const {
    return transform(Shape{flat.size()}, [&](const Array& a) { return a.reshape(Shape{numel(), a.dim(-1)}).take_rows(1, flat); });
  }

 private:
  template <typename Fn>
  Camera transform(const Shape& new_batch, Fn&& fn) const {
    Camera out;
    out.kind_ = kind_;
    out.newton_ = newton_;
    out.batch_shape_ = new_batch;
    for (const auto& [name, a] : params_) out.params_.emplace(name, fn(a));
    return out;
  }

  CameraKind kind_ = CameraKind::Pinhole;
  Shape batch_shape_;
  ParamMap params_;
  NewtonConfig<Real> newton_{};

  template <std::floating_point>
  friend class HeterogeneousCamera;
};

/// 3x3 intrinsic matrix [[f0, 0, c0], [0, f1, c1], [0, 0, 1]].
template <std::floating_point Real = double>
NdArray<Real> intrinsics_matrix(Real f0, Real f1, Real c0, Real c1) {
  return NdArray<Real>(Shape{3, 3}, {f0, 0, c0, 0, f1, c1, 0, 0, 1});
}

/// Intrinsics mapping polar angle [0, pi] to x in [-1, 1] and azimuth [-pi, pi] to y in [-1, 1].
template <std::floating_point Real = double>
NdArray<Real> equirectangular_full_sphere_intrinsics() {
  const Real pi = std::numbers::pi_v<Real>;
  return intrinsics_matrix<Real>(2 / pi, 1 / pi, -1, 0);
}

template <std::floating_point Real>
class HeterogeneousCamera;

template <std::floating_point Real = double>
using AnyCamera = std::variant<Camera<Real>, HeterogeneousCamera<Real>>;

/// Batch of cameras of different kinds (never Cube).
///
/// Each member holds a 1-D homogeneous camera and the flat indices of its elements
/// in the combined batch; members are ordered by first appearance.
template <std::floating_point Real>
class HeterogeneousCamera {
 public:
  using Scalar = Real;

  struct Member {
    CameraKind kind;
    Camera<Real> camera;
    std::vector<std::size_t> indices;
  };

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const { return shape_numel(shape_); }
  std::size_t pixel_dim() const { return 2; }
  const std::vector<Member>& members() const noexcept { return members_; }

  CameraKind kind_at(std::size_t flat) const { return members_[lookup_[flat].first].kind; }
  CameraView<Real> element(std::size_t flat) const {
    const auto [m, local] = lookup_[flat];
    return members_[m].camera.element(local);
  }

  HeterogeneousCamera reshape(const Shape& s) const {
    if (shape_numel(s) != numel()) throw ShapeError("HeterogeneousCamera::reshape: size mismatch");
    HeterogeneousCamera out = *this;
    out.shape_ = s;
    return out;
  }

  /// Element `i` of the leading batch dim; devolves to a homogeneous Camera when possible.
  AnyCamera<Real> operator[](std::size_t i) const;

  /// Assemble a batch of the given shape from (camera, flat row) sources, one per element.
  static AnyCamera<Real> assemble(const Shape& shape, const std::vector<std::pair<const Camera<Real>*, std::size_t>>& rows);

 private:
  Shape shape_;
  std::vector<Member> members_;
  std::vector<std::pair<std::size_t, std::size_t>> lookup_;
};

namespace detail {

// Build a 1-D camera of one kind from rows of other cameras of that kind.
// Variable-length polynomial parameters are zero-padded to the longest row.
template <std::floating_point Real>
Camera<Real> camera_from_rows(CameraKind kind, const std::vector<std::pair<const Camera<Real>*, std::size_t>>& rows) {
  typename Camera<Real>::ParamMap params;
  const auto names = rows.front().first->params();
  for (const auto& [name, _] : names) {
    std::size_t width = 0;
    for (const auto& [cam, r] : rows) width = std::max(width, cam->param(name).dim(-1));
    NdArray<Real> out(Shape{rows.size(), width});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const NdArray<Real>& a = rows[i].first->param(name);
      const std::size_t d = a.dim(-1);
      std::copy_n(a.ptr() + rows[i].second * d, d, out.ptr() + i * width);
    }
    params.emplace(name, std::move(out));
  }
  return Camera<Real>::make(kind, std::move(params)).with_newton_config(rows.front().first->newton_config());
}

}  // namespace detail

template <std::floating_point Real>
AnyCamera<Real> HeterogeneousCamera<Real>::assemble(const Shape& shape,
                                                    const std::vector<std::pair<const Camera<Real>*, std::size_t>>& rows) {
  if (rows.size() != shape_numel(shape)) throw ShapeError("assemble: row count does not match shape");
  if (rows.empty()) throw ShapeError("assemble: empty batch");
  std::vector<CameraKind> kinds;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::pair<std::size_t, std::size_t>> lookup(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const CameraKind k = rows[j].first->kind();
    auto it = std::find(kinds.begin(), kinds.end(), k);
    const auto m = static_cast<std::size_t>(it - kinds.begin());
    if (it == kinds.end()) {
      kinds.push_back(k);
      groups.emplace_back();
    }
    lookup[j] = {m, groups[m].size()};
    groups[m].push_back(j);
  }
  const auto rows_of = [&](std::size_t m) {
    std::vector<std::pair<const Camera<Real>*, std::size_t>> r;
    for (std::size_t j : groups[m]) r.push_back(rows[j]);
    return r;
  };
  if (kinds.size() == 1) return detail::camera_from_rows(kinds[0], rows_of(0)).reshape(shape);
  if (std::find(kinds.begin(), kinds.end(), CameraKind::Cube) != kinds.end()) {
    throw CameraError("cube cameras cannot be combined with other camera kinds");
  }
  HeterogeneousCamera out;
  out.shape_ = shape;
  out.lookup_ = std::move(lookup);
  for (std::size_t m = 0; m < kinds.size(); ++m) {
    out.members_.push_back({kinds[m], detail::camera_from_rows(kinds[m], rows_of(m)), groups[m]});
  }
  return out;
}

template <std::floating_point Real>
AnyCamera<Real> HeterogeneousCamera<Real>::operator[](std::size_t i) const {
  if (shape_.empty()) throw ShapeError("cannot index a scalar camera");
  if (i >= shape_[0]) throw ShapeError("HeterogeneousCamera: index out of range");
  const std::size_t inner = numel() / shape_[0];
  std::vector<std::pair<const Camera<Real>*, std::size_t>> rows;
  for (std::size_t k = 0; k < inner; ++k) {
    const auto [m, local] = lookup_[i * inner + k];
    rows.emplace_back(&members_[m].camera, local);
  }
  return assemble(Shape(shape_.begin() + 1, shape_.end()), rows);
}

/// Types with a batch shape whose flat elements can be viewed as single cameras.
template <typename C>
concept BatchedCamera = requires(const C& c, std::size_t i) {
  typename C::Scalar;
  { c.shape() } -> std::convertible_to<Shape>;
  { c.numel() } -> std::convertible_to<std::size_t>;
  { c.pixel_dim() } -> std::convertible_to<std::size_t>;
  { c.element(i) } -> std::same_as<CameraView<typename C::Scalar>>;
};

/// Stack cameras along a new batch dim; mixed kinds give a HeterogeneousCamera.
template <std::floating_point Real>
AnyCamera<Real> stack_cameras(const std::vector<AnyCamera<Real>>& cams, std::ptrdiff_t dim = 0) {
  if (cams.empty()) throw ShapeError("stack_cameras: empty input");
  const Shape s = std::visit([](const auto& c) { return c.shape(); }, cams.front());
  for (const auto& c : cams) {
    if (std::visit([](const auto& x) { return x.shape(); }, c) != s) throw ShapeError("stack_cameras: shape mismatch");
  }
  const std::size_t k = NdArray<Real>::normalize_dim(dim, s.size() + 1);
  Shape out_shape = s;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(k), cams.size());
  const std::size_t outer = shape_numel(shape_slice(s, 0, k));
  const std::size_t inner = shape_numel(shape_slice(s, k, s.size()));
  std::vector<std::pair<const Camera<Real>*, std::size_t>> rows;
  rows.reserve(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& c : cams) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t flat = o * inner + i;
        if (const auto* cam = std::get_if<Camera<Real>>(&c)) {
          rows.emplace_back(cam, flat);
        } else {
          const auto& het = std::get<HeterogeneousCamera<Real>>(c);
          for (const auto& m : het.members()) {
            auto it = std::find(m.indices.begin(), m.indices.end(), flat);
            if (it != m.indices.end()) {
              rows.emplace_back(&m.camera, static_cast<std::size_t>(it - m.indices.begin()));
              break;
            }
          }
        }
      }
    }
  }
  return HeterogeneousCamera<Real>::assemble(out_shape, rows);
}

template <std::floating_point Real>
AnyCamera<Real> stack_cameras(const std::vector<Camera<Real>>& cams, std::ptrdiff_t dim = 0) {
  std::vector<AnyCamera<Real>> any(cams.begin(), cams.end());
  return stack_cameras(any, dim);
}

template <std::floating_point Real>
AnyCamera<Real> stack_cameras(std::initializer_list<Camera<Real>> cams, std::ptrdiff_t dim = 0) {
  return stack_cameras(std::vector<Camera<Real>>(cams), dim);
}

template <std::floating_point Real>
struct ProjectionResult {
  NdArray<Real> pix;    // (*batch, *group, pixel_dim)
  NdArray<Real> depth;  // (*batch, *group)
  Mask valid;           // (*batch, *group)
};

template <std::floating_point Real>
struct RayBundle {
  NdArray<Real> origin;  // (*batch, *group, 3)
  NdArray<Real> dirs;    // (*batch, *group, 3)
  Mask valid;            // (*batch, *group)
};

template <std::floating_point Real>
struct PointCloud {
  NdArray<Real> points;  // (*batch, H, W, 3)
  Mask valid;
};

namespace detail {

// Number of group elements per batch element; checks that `shape` is (*batch, *group, event...).
inline std::size_t group_numel(const Shape& batch, const Shape& shape, std::size_t event_dims, const char* what) {
  if (shape.size() < batch.size() + event_dims || shape_slice(shape, 0, batch.size()) != batch) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(shape) + " does not start with camera batch shape " +
                     shape_str(batch));
  }
  return shape_numel(shape_slice(shape, batch.size(), shape.size() - event_dims));
}

template <typename Cam>
auto element_views(const Cam& cam) {
  std::vector<CameraView<typename Cam::Scalar>> views;
  views.reserve(cam.numel());
  for (std::size_t b = 0; b < cam.numel(); ++b) views.push_back(cam.element(b));
  return views;
}

}  // namespace detail

/// Project points `(*cam.shape, *group, 3)` to pixels.
template <BatchedCamera Cam>
ProjectionResult<typename Cam::Scalar> project_to_pixel(const Cam& cam, const NdArray<typename Cam::Scalar>& pts,
                                                        bool depth_is_along_ray = false) {
  using Real = typename Cam::Scalar;
  if (pts.ndim() < 1 || pts.dim(-1) != 3) throw ShapeError("project_to_pixel: points must be (..., 3)");
  const std::size_t ng = detail::group_numel(cam.shape(), pts.shape(), 1, "project_to_pixel");
  const std::size_t pd = cam.pixel_dim();
  const Shape lead = shape_slice(pts.shape(), 0, pts.ndim() - 1);
  ProjectionResult<Real> out{NdArray<Real>(concat_shapes(lead, {pd})), NdArray<Real>(lead), Mask(lead)};
  const auto views = detail::element_views(cam);
  parallel_for(views.size() * ng, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const auto p = models::project(views[e / ng], vec3_at(pts, e), depth_is_along_ray);
      for (std::size_t k = 0; k < pd; ++k) out.pix[e * pd + k] = p.pix(static_cast<int>(k));
      out.depth[e] = p.depth;
      out.valid[e] = p.valid;
    }
  }, 1024);
  return out;
}

/// Rays through pixels `(*cam.shape, *group, pixel_dim)`.
template <BatchedCamera Cam>
RayBundle<typename Cam::Scalar> pixel_to_ray(const Cam& cam, const NdArray<typename Cam::Scalar>& pix, bool unit_vec = true) {
  using Real = typename Cam::Scalar;
  const std::size_t pd = cam.pixel_dim();
  if (pix.ndim() < 1 || pix.dim(-1) != pd) throw ShapeError("pixel_to_ray: pixels must be (..., " + std::to_string(pd) + ")");
  const std::size_t ng = detail::group_numel(cam.shape(), pix.shape(), 1, "pixel_to_ray");
  const Shape lead = shape_slice(pix.shape(), 0, pix.ndim() - 1);
  RayBundle<Real> out{NdArray<Real>(concat_shapes(lead, {3})), NdArray<Real>(concat_shapes(lead, {3})), Mask(lead)};
  const auto views = detail::element_views(cam);
  parallel_for(views.size() * ng, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      Vec3<Real> u = Vec3<Real>::Zero();
      for (std::size_t k = 0; k < pd; ++k) u(static_cast<int>(k)) = pix[e * pd + k];
      const auto ray = models::pixel_to_ray(views[e / ng], u, unit_vec);
      Eigen::Map<Vec3<Real>>(out.origin.ptr() + 3 * e) = ray.origin;
      Eigen::Map<Vec3<Real>>(out.dirs.ptr() + 3 * e) = ray.dir;
      out.valid[e] = ray.valid;
    }
  }, 1024);
  return out;
}

/// Sensor sample grid for a camera kind: normalized pixel centers (H, W, 2), or the
/// stacked-face cube grid (6F, F, 3) for Cube.
template <std::floating_point Real>
NdArray<Real> sensor_grid(CameraKind kind, const ImageSize& hw) {
  if (kind == CameraKind::Cube) return cubemap::cube_grid<Real>(cubemap::face_size_of(hw));
  return pixel_grid<Real>(hw);
}

namespace detail {

template <BatchedCamera Cam>
CameraKind grid_kind(const Cam& cam) {
  return cam.pixel_dim() == 3 ? CameraKind::Cube : CameraKind::Pinhole;
}

}  // namespace detail

/// Rays through every pixel center of an H x W image: outputs are (*cam.shape, H, W, 3).
template <BatchedCamera Cam>
RayBundle<typename Cam::Scalar> get_camera_rays(const Cam& cam, const ImageSize& hw, bool unit_vec = true) {
  using Real = typename Cam::Scalar;
  const NdArray<Real> grid = sensor_grid<Real>(detail::grid_kind(cam), hw);
  return pixel_to_ray(cam, grid.expand(concat_shapes(cam.shape(), grid.shape())), unit_vec);
}

/// Unproject a depth map `(*cam.shape, H, W)` to points phi1(u) + d phi2(u).
template <BatchedCamera Cam>
PointCloud<typename Cam::Scalar> unproject_depth(const Cam& cam, const NdArray<typename Cam::Scalar>& depth,
                                                 bool depth_is_along_ray = false) {
  using Real = typename Cam::Scalar;
  if (depth.ndim() != cam.shape().size() + 2 || shape_slice(depth.shape(), 0, cam.shape().size()) != cam.shape()) {
    throw ShapeError("unproject_depth: depth must be (*camera_shape, H, W), got " + shape_str(depth.shape()));
  }
  const ImageSize hw{depth.dim(-2), depth.dim(-1)};
  RayBundle<Real> rays = get_camera_rays(cam, hw, depth_is_along_ray);
  PointCloud<Real> out{std::move(rays.origin), std::move(rays.valid)};
  for (std::size_t e = 0; e < depth.size(); ++e) {
    const Real d = depth[e];
    for (std::size_t k = 0; k < 3; ++k) out.points[3 * e + k] += d * rays.dirs[3 * e + k];
    if (!std::isfinite(d)) out.valid[e] = 0;
  }
  return out;
}

template <std::floating_point Real>
bool is_central(const Camera<Real>& cam) {
  return is_central(cam.kind());
}

/// Per-element centrality of a heterogeneous batch.
template <std::floating_point Real>
Mask is_central_elements(const HeterogeneousCamera<Real>& cam) {
  Mask out(cam.shape());
  for (std::size_t i = 0; i < cam.numel(); ++i) out[i] = is_central(cam.kind_at(i)) ? 1 : 0;
  return out;
}

/// True when every element is central.
template <std::floating_point Real>
bool is_central(const HeterogeneousCamera<Real>& cam) {
  const Mask m = is_central_elements(cam);
  return std::all_of(m.data().begin(), m.data().end(), [](auto v) { return v != 0; });
}

template <std::floating_point Real>
bool is_central(const AnyCamera<Real>& cam) {
  return std::visit([](const auto& c) { return is_central(c); }, cam);
}

template <std::floating_point Real>
Shape camera_shape(const AnyCamera<Real>& cam) {
  return std::visit([](const auto& c) { return c.shape(); }, cam);
}

/// Crop window. In pixel mode the values are pixel edges (left, right, top, bottom)
/// of an image of size `image_size`; in normalized mode they are normalized coordinates.
template <std::floating_point Real>
struct CropWindow {
  Real left, right, top, bottom;
};

/// Adjust affine parameters so the cropped image keeps the same rays per pixel.
/// `windows` holds one window per batch element, or a single shared window.
template <std::floating_point Real>
Camera<Real> crop(const Camera<Real>& cam, const std::vector<CropWindow<Real>>& windows, bool normalized,
                  std::optional<ImageSize> image_size = std::nullopt) {
  if (!is_affine(cam.kind())) throw CameraError("crop: cube cameras have no affine parameters");
  if (windows.size() != 1 && windows.size() != cam.numel()) throw ShapeError("crop: need one window or one per batch element");
  if (!normalized && !image_size) throw ShapeError("crop: pixel windows require the image size");
  auto params = cam.params();
  NdArray<Real>& aff = params.at("affine");
  for (std::size_t b = 0; b < cam.numel(); ++b) {
    CropWindow<Real> w = windows[windows.size() == 1 ? 0 : b];
    if (!(w.left < w.right) || !(w.top < w.bottom)) throw ShapeError("crop: empty window");
    if (!normalized) {
      const Real W = static_cast<Real>(image_size->width), H = static_cast<Real>(image_size->height);
      if (w.left < 0 || w.top < 0 || w.right > W || w.bottom > H) throw ShapeError("crop: window outside the image");
      w = {2 * w.left / W - 1, 2 * w.right / W - 1, 2 * w.top / H - 1, 2 * w.bottom / H - 1};
    }
    const Real mx = (w.left + w.right) / 2, hx = (w.right - w.left) / 2;
    const Real my = (w.top + w.bottom) / 2, hy = (w.bottom - w.top) / 2;
    Real* a = aff.ptr() + 4 * b;
    a[0] /= hx;
    a[1] /= hy;
    a[2] = (a[2] - mx) / hx;
    a[3] = (a[3] - my) / hy;
  }
  return Camera<Real>::make(cam.kind(), std::move(params)).with_newton_config(cam.newton_config());
}

enum class FlipMode { Intrinsic, Extrinsic };
enum class FlipAxis { Horizontal, Vertical };

template <std::floating_point Real>
struct FlipResult {
  Camera<Real> camera;
  /// Extrinsic mode: reflection M of the camera frame, x_new = M x_old.
  std::optional<Mat3<Real>> reflection;
};

/// Flip the image axis of a camera.
///
/// Intrinsic mode negates the focal length and principal point of that axis.
/// Extrinsic mode keeps focal lengths positive: it returns a reflection of the camera
/// frame and the intrinsics that, composed with it, label every pixel mirrored.
template <std::floating_point Real>
FlipResult<Real> flip(const Camera<Real>& cam, FlipMode mode, FlipAxis axis) {
  if (!is_affine(cam.kind())) throw CameraError("flip: cube cameras cannot be flipped");
  const std::size_t a = axis == FlipAxis::Horizontal ? 0 : 1;
  auto params = cam.params();
  NdArray<Real>& aff = params.at("affine");
  FlipResult<Real> out{cam, std::nullopt};
  if (mode == FlipMode::Intrinsic) {
    for (std::size_t b = 0; b < cam.numel(); ++b) {
      aff[4 * b + a] = -aff[4 * b + a];
      aff[4 * b + 2 + a] = -aff[4 * b + 2 + a];
    }
  } else {
    int reflected = static_cast<int>(a);
    Real shift = 0;
    if (cam.kind() == CameraKind::Equirectangular && a == 0) {
      // Polar angle: mirroring the image maps polar -> pi - polar, i.e. y -> -y.
      reflected = 1;
      shift = std::numbers::pi_v<Real>;
    } else if (cam.kind() == CameraKind::Equirectangular) {
      reflected = 0;
    }
    for (std::size_t b = 0; b < cam.numel(); ++b) {
      aff[4 * b + 2 + a] = -aff[4 * b + 2 + a] - shift * aff[4 * b + a];
    }
    if (cam.kind() == CameraKind::OpenCV) {
      NdArray<Real>& tang = params.at("tangential");
      for (std::size_t b = 0; b < cam.numel(); ++b) tang[2 * b + (1 - a)] = -tang[2 * b + (1 - a)];
    }
    Mat3<Real> m = Mat3<Real>::Identity();
    m(reflected, reflected) = -1;
    out.reflection = m;
  }
  out.camera = Camera<Real>::make(cam.kind(), std::move(params)).with_newton_config(cam.newton_config());
  return out;
}

/// World-to-camera pose of a camera whose frame was reflected by M.
template <std::floating_point Real>
Pose<Real> apply_reflection(const Pose<Real>& pose, const Mat3<Real>& m) {
  NdArray<Real> R(pose.R().shape()), T(pose.T().shape());
  for (std::size_t b = 0; b < pose.numel(); ++b) {
    Pose<Real>::store(R, T, b, m * pose.rotation(b), m * pose.translation(b));
  }
  return Pose<Real>::unchecked(std::move(R), std::move(T));
}

/// Per-element consistency of a backward/forward polynomial fisheye: max |theta - q(p(theta))|
/// over [0, theta_max].
template <std::floating_point Real>
NdArray<Real> backward_polynomial_error(const Camera<Real>& cam, std::size_t samples = 1000) {
  if (cam.kind() != CameraKind::BackwardForwardPolynomialFisheye) {
    throw CameraError("backward_polynomial_error: not a polynomial fisheye camera");
  }
  NdArray<Real> out(cam.shape());
  for (std::size_t b = 0; b < cam.numel(); ++b) {
    const CameraView<Real> v = cam.element(b);
    out[b] = polynomial_inverse_error<Real>(v.extra0, v.extra1, v.theta_max, samples);
  }
  return out;
}

}  // namespace multicam
