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
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <type_traits>
#include <variant>
#include <vector>

#include "multicam/batch.hpp"
#include "multicam/cameras.hpp"
#include "multicam/ndarray.hpp"
#include "multicam/parallel.hpp"
#include "multicam/sampling.hpp"

namespace multicam {

/// How a depth value scales a ray: planar z, distance along the ray, or the
/// camera kind's own convention (z for planar models, distance otherwise).
enum class DepthSemantic { ZDepth, AlongRay, Natural };

inline bool depth_is_along_ray(DepthSemantic s, CameraKind kind) {
  switch (s) {
    case DepthSemantic::ZDepth: return false;
    case DepthSemantic::AlongRay: return true;
    case DepthSemantic::Natural: break;
  }
  return natural_depth_is_along_ray(kind);
}

/// Depth hypotheses `(*batch, D)` shared by all pixels, or `(*batch, D, H, W)` per pixel.
/// Leading batch dims may be omitted and are then broadcast.
template <std::floating_point Real>
struct DepthHypotheses {
  NdArray<Real> values;
  DepthSemantic semantic = DepthSemantic::Natural;
  bool per_pixel = false;

  static DepthHypotheses constant(NdArray<Real> v, DepthSemantic s = DepthSemantic::Natural) {
    if (v.ndim() < 1 || v.dim(-1) == 0) throw ShapeError("DepthHypotheses: need at least one hypothesis");
    return {std::move(v), s, false};
  }
  static DepthHypotheses pixelwise(NdArray<Real> v, DepthSemantic s = DepthSemantic::Natural) {
    if (v.ndim() < 3 || v.dim(-3) == 0) throw ShapeError("DepthHypotheses: per-pixel values must be (*batch, D, H, W)");
    return {std::move(v), s, true};
  }
  std::size_t count() const { return values.dim(per_pixel ? -3 : -1); }
};

/// `count` depths from dmin to dmax, evenly spaced in inverse depth or linearly.
template <std::floating_point Real>
NdArray<Real> depth_samples(Real dmin, Real dmax, std::size_t count, bool inverse_spacing = true) {
  if (count == 0) throw ShapeError("depth_samples: count must be positive");
  if (!(dmin > 0) || !(dmax >= dmin)) throw ShapeError("depth_samples: need 0 < dmin <= dmax");
  NdArray<Real> out(Shape{count});
  for (std::size_t i = 0; i < count; ++i) {
    const Real t = count == 1 ? Real(0) : static_cast<Real>(i) / static_cast<Real>(count - 1);
    out[i] = inverse_spacing ? 1 / (1 / dmin + t * (1 / dmax - 1 / dmin)) : dmin + t * (dmax - dmin);
  }
  return out;
}

/// Pose taking target-camera points to source-camera points, for world-to-camera poses.
template <std::floating_point Real>
Pose<Real> relative_pose(const Pose<Real>& trg, const Pose<Real>& src) {
  return src.compose(trg.inverse());
}

template <std::floating_point Real>
struct WarpPoints {
  NdArray<Real> src_pix;    // (*batch, *group, src pixel_dim)
  NdArray<Real> src_depth;  // (*batch, *group)
  Mask valid;               // (*batch, *group)
};

template <std::floating_point Real>
struct WarpResult {
  NdArray<Real> warped;     // (*batch, D, C, H, W)
  NdArray<Real> src_pix;    // (*batch, D, H, W, src pixel_dim)
  NdArray<Real> src_depth;  // (*batch, D, H, W)
  Mask valid;               // (*batch, D, H, W)
};

namespace detail {

template <typename T>
struct is_variant : std::false_type {};
template <typename... Ts>
struct is_variant<std::variant<Ts...>> : std::true_type {};

// Call fn with the concrete camera held by `c` (a camera or an AnyCamera).
template <typename C, typename Fn>
decltype(auto) with_camera(const C& c, Fn&& fn) {
  if constexpr (is_variant<C>::value) {
    return std::visit(std::forward<Fn>(fn), c);
  } else {
    return std::forward<Fn>(fn)(c);
  }
}

template <typename C>
Shape shape_of(const C& c) {
  return with_camera(c, [](const auto& x) { return Shape(x.shape()); });
}

template <typename C>
std::size_t pixel_dim_of(const C& c) {
  return with_camera(c, [](const auto& x) { return x.pixel_dim(); });
}

template <std::floating_point Real>
void check_pose_batch(const Pose<Real>& rel, const Shape& batch, const char* what) {
  if (rel.numel() != 1 && rel.batch_shape() != batch) {
    throw ShapeError(std::string(what) + ": pose batch " + shape_str(rel.batch_shape()) + " does not match camera batch " +
                     shape_str(batch));
  }
}

template <BatchedCamera Trg, BatchedCamera Src>
WarpPoints<typename Trg::Scalar> warp_points(const Trg& trg, const Src& src, const Pose<typename Trg::Scalar>& rel,
                                             const NdArray<typename Trg::Scalar>& u,
                                             const NdArray<typename Trg::Scalar>& d, DepthSemantic trg_sem,
                                             DepthSemantic src_sem) {
  using Real = typename Trg::Scalar;
  if (trg.shape() != src.shape()) {
    throw ShapeError("backward_warp_pts: target camera shape " + shape_str(trg.shape()) + " differs from source " +
                     shape_str(src.shape()));
  }
  check_pose_batch(rel, trg.shape(), "backward_warp_pts");
  const std::size_t pdt = trg.pixel_dim(), pds = src.pixel_dim();
  if (u.ndim() < 1 || u.dim(-1) != pdt) throw ShapeError("backward_warp_pts: pixels must be (..., " + std::to_string(pdt) + ")");
  const Shape lead = shape_slice(u.shape(), 0, u.ndim() - 1);
  if (d.shape() != lead) {
    throw ShapeError("backward_warp_pts: depth shape " + shape_str(d.shape()) + " does not match pixels " + shape_str(u.shape()));
  }
  const std::size_t ng = group_numel(trg.shape(), u.shape(), 1, "backward_warp_pts");
  const auto tv = element_views(trg);
  const auto sv = element_views(src);
  std::vector<Mat3<Real>> R(rel.numel());
  std::vector<Vec3<Real>> T(rel.numel());
  for (std::size_t b = 0; b < rel.numel(); ++b) {
    R[b] = rel.rotation(b);
    T[b] = rel.translation(b);
  }
  WarpPoints<Real> out{NdArray<Real>(concat_shapes(lead, {pds})), NdArray<Real>(lead), Mask(lead)};
  parallel_for(tv.size() * ng, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t b = e / ng;
      const std::size_t pb = R.size() == 1 ? 0 : b;
      Vec3<Real> pix = Vec3<Real>::Zero();
      for (std::size_t k = 0; k < pdt; ++k) pix(static_cast<int>(k)) = u[e * pdt + k];
      const auto ray = models::pixel_to_ray(tv[b], pix, depth_is_along_ray(trg_sem, tv[b].kind));
      const Real depth = d[e];
      const Vec3<Real> x = R[pb] * (ray.origin + depth * ray.dir) + T[pb];
      const auto p = models::project(sv[b], x, depth_is_along_ray(src_sem, sv[b].kind));
      const bool ok = ray.valid && p.valid && std::isfinite(depth) && depth > 0;
      for (std::size_t k = 0; k < pds; ++k) out.src_pix[e * pds + k] = ok ? p.pix(static_cast<int>(k)) : Real(0);
      out.src_depth[e] = ok ? p.depth : Real(0);
      out.valid[e] = ok;
    }
  }, 512);
  return out;
}

// Sensor grid of `cam` expanded to (*batch, *extra, H, W, pixel_dim).
template <std::floating_point Real>
NdArray<Real> expanded_grid(std::size_t pixel_dim, const ImageSize& hw, const Shape& lead) {
  const NdArray<Real> grid = sensor_grid<Real>(pixel_dim == 3 ? CameraKind::Cube : CameraKind::Pinhole, hw);
  return grid.expand(concat_shapes(lead, grid.shape()));
}

template <std::floating_point Real>
NdArray<Real> broadcast_batch(const NdArray<Real>& a, const Shape& batch, std::size_t event_dims, const char* what) {
  const Shape ev = shape_slice(a.shape(), a.ndim() - event_dims, a.ndim());
  const Shape target = concat_shapes(batch, ev);
  if (a.shape() == target) return a;
  if (a.ndim() == event_dims) return a.expand(target);
  throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) + " does not match batch " + shape_str(batch));
}

// Sample image `(*batch, C, H, W)` (flat) or `(*batch, C, 6F, F)` (cube) at warped pixels.
template <std::floating_point Real>
SampleResult<Real> sample_source(const NdArray<Real>& img, std::size_t pixel_dim, const NdArray<Real>& pix,
                                 const Mask& valid, InterpMode mode, Padding padding) {
  if (pixel_dim == 2) return samples_from_image(img, pix, mode, padding);
  const std::size_t F = cubemap::face_size_of({img.dim(-2), img.dim(-1)});
  Shape cs = shape_slice(img.shape(), 0, img.ndim() - 2);
  cs.insert(cs.end(), {cubemap::kFaces, F, F});
  NdArray<Real> dirs = pix;
  for (std::size_t e = 0; e < valid.size(); ++e) {
    if (!valid[e]) {
      dirs[3 * e] = 0;
      dirs[3 * e + 1] = 0;
      dirs[3 * e + 2] = 1;
    }
  }
  return samples_from_cubemap(img.reshape(cs), dirs, mode);
}

}  // namespace detail

/// Trace target pixels `u` at depths `d` into the source camera:
/// p_src(R (phi1(u) + d phi2(u)) + T). `rel` maps target to source coordinates.
template <typename TrgCam, typename SrcCam, std::floating_point Real>
WarpPoints<Real> backward_warp_pts(const TrgCam& trg, const SrcCam& src, const Pose<Real>& rel, const NdArray<Real>& u,
                                   const NdArray<Real>& d, DepthSemantic trg_sem = DepthSemantic::Natural,
                                   DepthSemantic src_sem = DepthSemantic::Natural) {
  return detail::with_camera(trg, [&](const auto& t) {
    return detail::with_camera(src, [&](const auto& s) { return detail::warp_points(t, s, rel, u, d, trg_sem, src_sem); });
  });
}

struct WarpOptions {
  InterpMode interp = InterpMode::Bilinear;
  Padding padding = Padding::Zeros;
  DepthSemantic src_semantic = DepthSemantic::Natural;
};

/// Warp source images `(*batch, C, Hs, Ws)` into the target view for every hypothesis.
template <typename TrgCam, typename SrcCam, std::floating_point Real>
WarpResult<Real> backward_warp(const TrgCam& trg, const SrcCam& src, const Pose<Real>& rel, const NdArray<Real>& src_img,
                               const DepthHypotheses<Real>& hyp, std::optional<ImageSize> trg_hw = std::nullopt,
                               const WarpOptions& opt = {}) {
  const Shape batch = detail::shape_of(trg);
  const std::size_t nb = batch.size();
  NdArray<Real> d;
  if (hyp.per_pixel) {
    d = detail::broadcast_batch(hyp.values, batch, 3, "backward_warp");
    const ImageSize hw{d.dim(-2), d.dim(-1)};
    if (trg_hw && (trg_hw->height != hw.height || trg_hw->width != hw.width)) {
      throw ShapeError("backward_warp: per-pixel hypotheses do not match the target size");
    }
    trg_hw = hw;
  } else {
    if (!trg_hw) throw ShapeError("backward_warp: target size is required for constant hypotheses");
    NdArray<Real> v = detail::broadcast_batch(hyp.values, batch, 1, "backward_warp");
    Shape s = v.shape();
    s.insert(s.end(), {1, 1});
    Shape t = v.shape();
    t.insert(t.end(), {trg_hw->height, trg_hw->width});
    d = v.reshape(s).expand(t);
  }
  const std::size_t D = d.dim(static_cast<std::ptrdiff_t>(nb));
  if (src_img.ndim() != nb + 3) throw ShapeError("backward_warp: source image must be (*batch, C, H, W)");
  const NdArray<Real> img = detail::broadcast_batch(src_img, batch, 3, "backward_warp");
  const NdArray<Real> u = detail::expanded_grid<Real>(detail::pixel_dim_of(trg), *trg_hw, concat_shapes(batch, {D}));
  WarpPoints<Real> pts = backward_warp_pts(trg, src, rel, u, d, hyp.semantic, opt.src_semantic);
  SampleResult<Real> s = detail::sample_source(img, detail::pixel_dim_of(src), pts.src_pix, pts.valid, opt.interp, opt.padding);
  // (*batch, C, D, H, W) -> (*batch, D, C, H, W)
  std::vector<std::size_t> perm;
  for (std::size_t i = 0; i < nb; ++i) perm.push_back(i);
  perm.insert(perm.end(), {nb + 1, nb, nb + 2, nb + 3});
  WarpResult<Real> out{s.values.permute(perm), std::move(pts.src_pix), std::move(pts.src_depth), std::move(pts.valid)};
  const std::size_t C = img.dim(-3), plane = trg_hw->height * trg_hw->width;
  for (std::size_t e = 0; e < out.valid.size(); ++e) {
    out.valid[e] = out.valid[e] && s.in_bounds[e];
    if (!out.valid[e]) {
      const std::size_t bd = e / plane, p = e % plane;
      for (std::size_t c = 0; c < C; ++c) out.warped[(bd * C + c) * plane + p] = 0;
    }
  }
  return out;
}

template <std::floating_point Real>
struct SweepResult {
  NdArray<Real> warped;  // (*batch, S, D, C, H, W)
  Mask valid;            // (*batch, S, D, H, W)
};

/// Plane or sphere sweep: warp every source under every hypothesis with one batched call.
template <typename TrgCam, std::floating_point Real>
SweepResult<Real> sweep_hypotheses(const TrgCam& trg, const std::vector<AnyCamera<Real>>& srcs,
                                   const std::vector<Pose<Real>>& rels, const std::vector<NdArray<Real>>& src_imgs,
                                   const DepthHypotheses<Real>& hyp, std::optional<ImageSize> trg_hw = std::nullopt,
                                   const WarpOptions& opt = {}) {
  if (srcs.empty()) throw ShapeError("sweep_hypotheses: need at least one source");
  if (rels.size() != srcs.size() || src_imgs.size() != srcs.size()) {
    throw ShapeError("sweep_hypotheses: sources, poses and images must have equal lengths");
  }
  const Shape batch = detail::shape_of(trg);
  const std::size_t nb = batch.size(), S = srcs.size();
  const auto dim = static_cast<std::ptrdiff_t>(nb);
  const AnyCamera<Real> trg_any = detail::with_camera(trg, [](const auto& c) { return AnyCamera<Real>(c); });
  const AnyCamera<Real> trg_s = stack_cameras(std::vector<AnyCamera<Real>>(S, trg_any), dim);
  const AnyCamera<Real> src_s = stack_cameras(srcs, dim);
  std::vector<NdArray<Real>> Rs, Ts, imgs;
  for (std::size_t i = 0; i < S; ++i) {
    detail::check_pose_batch(rels[i], batch, "sweep_hypotheses");
    Rs.push_back(detail::broadcast_batch(rels[i].R(), batch, 2, "sweep_hypotheses"));
    Ts.push_back(detail::broadcast_batch(rels[i].T(), batch, 1, "sweep_hypotheses"));
    imgs.push_back(detail::broadcast_batch(src_imgs[i], batch, 3, "sweep_hypotheses"));
  }
  const Pose<Real> rel = Pose<Real>::unchecked(stack(Rs, dim), stack(Ts, dim));
  const NdArray<Real> img = stack(imgs, dim);
  DepthHypotheses<Real> h = hyp;
  const std::size_t ev = hyp.per_pixel ? 3 : 1;
  const NdArray<Real> v = detail::broadcast_batch(hyp.values, batch, ev, "sweep_hypotheses");
  Shape target = v.shape();
  target.insert(target.begin() + dim, S);
  h.values = v.unsqueeze(dim).expand(target);
  WarpResult<Real> w = backward_warp(trg_s, src_s, rel, img, h, trg_hw, opt);
  return {std::move(w.warped), std::move(w.valid)};
}

template <std::floating_point Real>
struct ResampleResult {
  NdArray<Real> image;  // (*batch, C, H, W)
  Mask valid;           // (*batch, H, W)
};

namespace detail {

template <typename C>
void require_central(const C& cam, const char* what) {
  with_camera(cam, [&](const auto& c) {
    for (std::size_t b = 0; b < c.numel(); ++b) {
      if (!is_central(c.element(b).kind)) throw CameraError(std::string(what) + ": camera is not central");
    }
  });
}

}  // namespace detail

/// Resample an image between central cameras sharing a center; x_src = rot * x_trg.
/// `rot` is (3, 3) or (*batch, 3, 3).
template <typename SrcCam, typename TrgCam, std::floating_point Real>
ResampleResult<Real> resample_by_intrinsics(const SrcCam& src, const TrgCam& trg, const NdArray<Real>& rot,
                                            const NdArray<Real>& src_img, const ImageSize& trg_hw,
                                            InterpMode mode = InterpMode::Bilinear) {
  detail::require_central(src, "resample_by_intrinsics");
  detail::require_central(trg, "resample_by_intrinsics");
  const Shape batch = detail::shape_of(trg);
  NdArray<Real> T(concat_shapes(shape_slice(rot.shape(), 0, rot.ndim() - 2), {3}));
  const Pose<Real> rel = Pose<Real>::unchecked(rot, std::move(T));
  const auto hyp = DepthHypotheses<Real>::constant(NdArray<Real>::full(concat_shapes(batch, {1}), 1), DepthSemantic::AlongRay);
  WarpResult<Real> w = backward_warp(trg, src, rel, src_img, hyp, trg_hw, {mode, Padding::Zeros, DepthSemantic::AlongRay});
  const auto nb = static_cast<std::ptrdiff_t>(batch.size());
  return {w.warped.squeeze(nb), w.valid.squeeze(nb)};
}

template <typename SrcCam, typename TrgCam, std::floating_point Real>
ResampleResult<Real> resample_by_intrinsics(const SrcCam& src, const TrgCam& trg, const Mat3<Real>& rot,
                                            const NdArray<Real>& src_img, const ImageSize& trg_hw,
                                            InterpMode mode = InterpMode::Bilinear) {
  return resample_by_intrinsics(src, trg, Pose<Real>::from_eigen(rot, Vec3<Real>::Zero()).R(), src_img, trg_hw, mode);
}

enum class RectifyMode { SideBySide, OnTop };

template <std::floating_point Real>
struct RectifyingRotation {
  Mat3<Real> to_world;  // columns are the rectified camera axes in world coordinates
  bool degenerate = false;
};

/// Shared orientation for a rectified pair of world-to-camera poses.
template <std::floating_point Real>
RectifyingRotation<Real> rectifying_rotation(const Pose<Real>& pose0, const Pose<Real>& pose1, RectifyMode mode) {
  if (pose0.numel() != 1 || pose1.numel() != 1) throw ShapeError("stereo_rectify: poses must be single");
  const Mat3<Real> R0 = pose0.rotation(0).transpose(), R1 = pose1.rotation(0).transpose();
  const Vec3<Real> C0 = -R0 * pose0.translation(0), C1 = -R1 * pose1.translation(0);
  const Vec3<Real> base = C1 - C0;
  const Real bn = base.norm();
  if (!(bn > 0)) throw DegenerateError("stereo_rectify: zero baseline");
  const Vec3<Real> b = base / bn;
  RectifyingRotation<Real> out;
  Vec3<Real> z = R0.col(2) + R1.col(2);
  z -= z.dot(b) * b;
  if (z.norm() < Real(1e-9) * (1 + (R0.col(2) + R1.col(2)).norm())) {
    out.degenerate = true;
    int axis = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(b(i)) < std::abs(b(axis))) axis = i;
    }
    z = Vec3<Real>::Unit(axis);
    z -= z.dot(b) * b;
  }
  z.normalize();
  Mat3<Real>& r = out.to_world;
  r.col(2) = z;
  if (mode == RectifyMode::SideBySide) {
    r.col(0) = b;
    r.col(1) = z.cross(b);
  } else {
    r.col(1) = b;
    r.col(0) = b.cross(z);
  }
  return out;
}

template <std::floating_point Real>
struct RectifyResult {
  Mat3<Real> to_world;          // rectified camera-to-world rotation
  Mat3<Real> rot0, rot1;        // resampling rotations, x_src = rot * x_rect
  Pose<Real> pose0, pose1;      // rectified world-to-camera poses
  ResampleResult<Real> rect0, rect1;
  bool degenerate = false;
};

/// Rectify a stereo pair into the target cameras `trg0`, `trg1` (scalar cameras).
template <typename Cam0, typename Cam1, typename Trg0, typename Trg1, std::floating_point Real>
RectifyResult<Real> stereo_rectify(const Cam0& cam0, const Pose<Real>& pose0, const Cam1& cam1, const Pose<Real>& pose1,
                                   RectifyMode mode, const NdArray<Real>& img0, const NdArray<Real>& img1,
                                   const Trg0& trg0, const Trg1& trg1, const ImageSize& hw0, const ImageSize& hw1) {
  const RectifyingRotation<Real> rr = rectifying_rotation(pose0, pose1, mode);
  const Mat3<Real> R0 = pose0.rotation(0).transpose(), R1 = pose1.rotation(0).transpose();
  const Mat3<Real> rot0 = R0.transpose() * rr.to_world, rot1 = R1.transpose() * rr.to_world;
  const Vec3<Real> C0 = -R0 * pose0.translation(0), C1 = -R1 * pose1.translation(0);
  const Mat3<Real> w2c = rr.to_world.transpose();
  return {rr.to_world,
          rot0,
          rot1,
          Pose<Real>::from_eigen(w2c, -w2c * C0),
          Pose<Real>::from_eigen(w2c, -w2c * C1),
          resample_by_intrinsics(cam0, trg0, rot0, img0, hw0),
          resample_by_intrinsics(cam1, trg1, rot1, img1, hw1),
          rr.degenerate};
}

/// Rectify a stereo pair keeping each camera's own intrinsics and image size.
template <typename Cam0, typename Cam1, std::floating_point Real>
RectifyResult<Real> stereo_rectify(const Cam0& cam0, const Pose<Real>& pose0, const Cam1& cam1, const Pose<Real>& pose1,
                                   RectifyMode mode, const NdArray<Real>& img0, const NdArray<Real>& img1) {
  return stereo_rectify(cam0, pose0, cam1, pose1, mode, img0, img1, cam0, cam1, ImageSize{img0.dim(-2), img0.dim(-1)},
                        ImageSize{img1.dim(-2), img1.dim(-1)});
}

/// Consistency thresholds: tau1 in normalized image units, tau2 relative depth.
template <std::floating_point Real>
struct ConsistencyThresholds {
  Real tau1;
  Real tau2 = Real(0.01);

  /// tau1 equal to one pixel of an image of width `width`.
  static ConsistencyThresholds one_pixel(std::size_t width, Real tau2 = Real(0.01)) {
    return {Real(2) / static_cast<Real>(width), tau2};
  }
  void validate() const {
    if (!(tau1 > 0) || !(tau2 > 0)) throw ShapeError("consistency thresholds must be positive");
  }
};

template <std::floating_point Real>
struct ConsistencyResult {
  Mask mask;                  // (*batch, H, W)
  NdArray<Real> reprojected;  // D-hat: target depth re-estimated from the source depth map
  Mask valid;                 // every warp stage succeeded
};

namespace detail {

// Bilinear lookup of depth maps `(*batch, H, W)` at pixels `(*batch, *group, pd)`.
// Invalid when a tap is non-positive or the taps jump by more than `max_jump` relative.
template <std::floating_point Real>
std::pair<NdArray<Real>, Mask> lookup_depth(const NdArray<Real>& depth, std::size_t pd, const NdArray<Real>& pix,
                                            const Mask& pix_valid, Real max_jump) {
  const std::size_t H = depth.dim(-2), W = depth.dim(-1);
  const std::size_t nb = depth.size() / (H * W);
  const std::size_t ng = pix_valid.size() / std::max<std::size_t>(nb, 1);
  NdArray<Real> val(pix_valid.shape());
  Mask ok(pix_valid.shape());
  const std::size_t F = pd == 3 ? cubemap::face_size_of({H, W}) : 0;
  parallel_for(pix_valid.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      if (!pix_valid[e]) continue;
      const Real* p = pix.ptr() + e * pd;
      const Taps<Real> t = pd == 3 ? cube_taps<Real>(Vec3<Real>(p[0], p[1], p[2]), F, InterpMode::Bilinear)
                                   : image_taps<Real>(p[0], p[1], H, W, InterpMode::Bilinear, Padding::Zeros);
      if (!t.in_bounds || t.count == 0) continue;
      const Real* plane = depth.ptr() + (e / ng) * H * W;
      Real lo = std::numeric_limits<Real>::infinity(), hi = 0;
      bool good = true;
      for (int k = 0; k < t.count; ++k) {
        if (t.weight[static_cast<std::size_t>(k)] == 0) continue;
        const Real v = plane[t.index[static_cast<std::size_t>(k)]];
        if (!(v > 0) || !std::isfinite(v)) good = false;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!good || (hi - lo) > max_jump * lo) continue;
      val[e] = apply_taps(t, plane);
      ok[e] = 1;
    }
  }, 1024);
  return {std::move(val), std::move(ok)};
}

}  // namespace detail

/// Geometric consistency of a target depth map against one source depth map.
/// `rel` maps target to source coordinates; depth maps are `(*batch, H, W)`.
template <typename TrgCam, typename SrcCam, std::floating_point Real>
ConsistencyResult<Real> consistency_mask(const TrgCam& trg, const SrcCam& src, const Pose<Real>& rel,
                                         const NdArray<Real>& D_trg, const NdArray<Real>& D_src,
                                         const ConsistencyThresholds<Real>& tau,
                                         DepthSemantic trg_sem = DepthSemantic::Natural,
                                         DepthSemantic src_sem = DepthSemantic::Natural) {
  tau.validate();
  const Shape batch = detail::shape_of(trg);
  const std::size_t nb = batch.size();
  if (D_trg.ndim() != nb + 2 || D_src.ndim() != nb + 2) throw ShapeError("consistency_mask: depth maps must be (*batch, H, W)");
  const ImageSize hw{D_trg.dim(-2), D_trg.dim(-1)};
  const std::size_t pdt = detail::pixel_dim_of(trg), pds = detail::pixel_dim_of(src);
  const NdArray<Real> u = detail::expanded_grid<Real>(pdt, hw, batch);
  const WarpPoints<Real> fwd = backward_warp_pts(trg, src, rel, u, D_trg, trg_sem, src_sem);
  auto [ds, ds_ok] = detail::lookup_depth(D_src, pds, fwd.src_pix, fwd.valid, 10 * tau.tau2);
  for (std::size_t e = 0; e < ds.size(); ++e) {
    if (!ds_ok[e]) ds[e] = 1;
  }
  const WarpPoints<Real> back = backward_warp_pts(src, trg, rel.inverse(), fwd.src_pix, ds, src_sem, trg_sem);
  ConsistencyResult<Real> out{Mask(D_trg.shape()), back.src_depth, Mask(D_trg.shape())};
  for (std::size_t e = 0; e < D_trg.size(); ++e) {
    const Real dt = D_trg[e];
    const bool ok = fwd.valid[e] && ds_ok[e] && back.valid[e] && dt > 0 && std::isfinite(dt);
    out.valid[e] = ok;
    if (!ok) {
      out.reprojected[e] = 0;
      continue;
    }
    Real dist2 = 0;
    for (std::size_t k = 0; k < pdt; ++k) {
      const Real diff = u[e * pdt + k] - back.src_pix[e * pdt + k];
      dist2 += diff * diff;
    }
    out.mask[e] = std::sqrt(dist2) < tau.tau1 && std::abs(out.reprojected[e] - dt) / dt < tau.tau2;
  }
  return out;
}

template <std::floating_point Real>
struct FusionResult {
  NdArray<Real> fused;            // (*batch, H, W); 0 where invalid
  NdArray<std::uint32_t> votes;   // 1 + number of consistent sources
  Mask valid;                     // votes >= min_views and target depth valid
  std::vector<Mask> masks;        // per-source consistency masks
};

/// Fuse a target depth map with reprojected source depths where they are consistent.
/// `rels[i]` maps target to source i coordinates.
template <typename TrgCam, typename SrcCam, std::floating_point Real>
FusionResult<Real> fuse_depths_mvsnet(const TrgCam& trg, const std::vector<SrcCam>& srcs, const std::vector<Pose<Real>>& rels,
                                      const NdArray<Real>& D_trg, const std::vector<NdArray<Real>>& D_srcs,
                                      const ConsistencyThresholds<Real>& tau, std::size_t min_views = 1,
                                      DepthSemantic trg_sem = DepthSemantic::Natural,
                                      DepthSemantic src_sem = DepthSemantic::Natural) {
  if (srcs.empty()) throw ShapeError("fuse_depths_mvsnet: need at least one source");
  if (rels.size() != srcs.size() || D_srcs.size() != srcs.size()) {
    throw ShapeError("fuse_depths_mvsnet: sources, poses and depth maps must have equal lengths");
  }
  FusionResult<Real> out{NdArray<Real>(D_trg.shape()), NdArray<std::uint32_t>(D_trg.shape()), Mask(D_trg.shape()), {}};
  NdArray<Real> sum(D_trg.shape());
  for (std::size_t e = 0; e < D_trg.size(); ++e) {
    if (D_trg[e] > 0 && std::isfinite(D_trg[e])) {
      sum[e] = D_trg[e];
      out.votes[e] = 1;
    }
  }
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    ConsistencyResult<Real> c = consistency_mask(trg, srcs[i], rels[i], D_trg, D_srcs[i], tau, trg_sem, src_sem);
    for (std::size_t e = 0; e < D_trg.size(); ++e) {
      if (c.mask[e]) {
        sum[e] += c.reprojected[e];
        out.votes[e] += 1;
      }
    }
    out.masks.push_back(std::move(c.mask));
  }
  for (std::size_t e = 0; e < D_trg.size(); ++e) {
    const bool ok = out.votes[e] >= 1 && out.votes[e] >= min_views;
    out.valid[e] = ok;
    out.fused[e] = ok ? sum[e] / static_cast<Real>(out.votes[e]) : Real(0);
  }
  return out;
}

/// Sampling ranges for a random resized crop with optional horizontal flip.
template <std::floating_point Real>
struct CropFlipParams {
  Real scale_min = Real(0.25);  // crop area as a fraction of the image
  Real scale_max = 1;
  Real ratio_min = Real(3) / 4;  // crop width / height in pixels
  Real ratio_max = Real(4) / 3;
  Real flip_probability = Real(0.5);
};

template <std::floating_point Real>
struct CropFlipChoice {
  CropWindow<Real> window;  // pixel edges
  bool flip = false;
};

template <std::floating_point Real>
struct CropFlipOutput {
  Camera<Real> camera;
  NdArray<Real> images;  // (*batch, C, H', W')
  CropFlipChoice<Real> choice;
};

/// Draw a crop window and flip flag; deterministic for a given seed.
template <std::floating_point Real>
CropFlipChoice<Real> sample_crop_flip(const ImageSize& hw, std::uint64_t seed, const CropFlipParams<Real>& p = {}) {
  if (!(p.scale_min > 0) || p.scale_max > 1 || p.scale_min > p.scale_max || !(p.ratio_min > 0) || p.ratio_min > p.ratio_max) {
    throw ShapeError("sample_crop_flip: invalid parameter ranges");
  }
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double H = static_cast<double>(hw.height), W = static_cast<double>(hw.width);
  const double area = H * W * (p.scale_min + (p.scale_max - p.scale_min) * unit(gen));
  const double lr = std::log(p.ratio_min) + (std::log(p.ratio_max) - std::log(p.ratio_min)) * unit(gen);
  const double cw = std::min(W, std::sqrt(area * std::exp(lr)));
  const double ch = std::min(H, std::sqrt(area / std::exp(lr)));
  const double left = (W - cw) * unit(gen), top = (H - ch) * unit(gen);
  CropFlipChoice<Real> c;
  c.window = {static_cast<Real>(left), static_cast<Real>(left + cw), static_cast<Real>(top), static_cast<Real>(top + ch)};
  c.flip = unit(gen) < p.flip_probability;
  return c;
}

/// Crop (pixel window), resize to `out_hw` and optionally flip both the cameras and the images.
/// One window is shared by every camera in the batch.
template <std::floating_point Real>
CropFlipOutput<Real> resized_crop_flip(const Camera<Real>& cam, const NdArray<Real>& images, const CropFlipChoice<Real>& choice,
                                       const ImageSize& out_hw) {
  if (images.ndim() != cam.shape().size() + 3) throw ShapeError("resized_crop_flip: images must be (*camera_shape, C, H, W)");
  const ImageSize hw{images.dim(-2), images.dim(-1)};
  Camera<Real> c = crop(cam, {choice.window}, false, hw);
  if (choice.flip) c = flip(c, FlipMode::Intrinsic, FlipAxis::Horizontal).camera;
  const Real W = static_cast<Real>(hw.width), H = static_cast<Real>(hw.height);
  const Real l = 2 * choice.window.left / W - 1, r = 2 * choice.window.right / W - 1;
  const Real t = 2 * choice.window.top / H - 1, b = 2 * choice.window.bottom / H - 1;
  NdArray<Real> grid = pixel_grid<Real>(out_hw);
  for (std::size_t i = 0; i < out_hw.height * out_hw.width; ++i) {
    const Real x = choice.flip ? -grid[2 * i] : grid[2 * i];
    grid[2 * i] = (l + r) / 2 + (r - l) / 2 * x;
    grid[2 * i + 1] = (t + b) / 2 + (b - t) / 2 * grid[2 * i + 1];
  }
  const NdArray<Real> coords = grid.expand(concat_shapes(cam.shape(), grid.shape()));
  SampleResult<Real> s = samples_from_image(images, coords, InterpMode::Bilinear, Padding::Border);
  return {std::move(c), std::move(s.values), choice};
}

/// Random resized crop and horizontal flip shared across a sequence of frames.
template <std::floating_point Real>
CropFlipOutput<Real> random_resized_crop_flip(const Camera<Real>& cam, const NdArray<Real>& images, const ImageSize& out_hw,
                                              std::uint64_t seed, const CropFlipParams<Real>& p = {}) {
  if (images.ndim() < 3) throw ShapeError("random_resized_crop_flip: images must be (*batch, C, H, W)");
  const CropFlipChoice<Real> c = sample_crop_flip<Real>({images.dim(-2), images.dim(-1)}, seed, p);
  return resized_crop_flip(cam, images, c, out_hw);
}

}  // namespace multicam
