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
#include <limits>
#include <numbers>

#include "multicam/cameras.hpp"
#include "test_util.hpp"

namespace multicam::testing {

inline NdArray<double> row(std::initializer_list<double> v) { return NdArray<double>(Shape{v.size()}, std::vector<double>(v)); }

inline NdArray<double> random_K(Rng& g) {
  return intrinsics_matrix(uniform(g, 0.7, 1.4), uniform(g, 0.7, 1.4), uniform(g, -0.1, 0.1), uniform(g, -0.1, 0.1));
}

/// A scalar camera of the given kind with moderate random parameters.
inline Camera<double> random_camera(CameraKind kind, Rng& g) {
  switch (kind) {
    case CameraKind::Pinhole: return Camera<double>::pinhole(random_K(g));
    case CameraKind::Orthographic: return Camera<double>::orthographic(random_K(g));
    case CameraKind::OpenCV:
      return Camera<double>::opencv(random_K(g),
                                    row({uniform(g, -0.1, 0.1), uniform(g, -0.02, 0.02), uniform(g, -0.005, 0.005),
                                         uniform(g, -0.05, 0.05), uniform(g, -0.01, 0.01), uniform(g, -0.002, 0.002)}),
                                    row({uniform(g, -0.005, 0.005), uniform(g, -0.005, 0.005)}));
    case CameraKind::Equirectangular: {
      const double pi = std::numbers::pi;
      return Camera<double>::equirectangular(intrinsics_matrix(2 / pi * uniform(g, 0.9, 1.1), 1 / pi * uniform(g, 0.9, 1.1),
                                                               -1 + uniform(g, -0.05, 0.05), uniform(g, -0.05, 0.05)));
    }
    case CameraKind::OpenCVFisheye:
      return Camera<double>::opencv_fisheye(
          random_K(g), row({uniform(g, -0.05, 0.05), uniform(g, -0.01, 0.01), uniform(g, -0.002, 0.002), uniform(g, -0.0005, 0.0005)}));
    case CameraKind::BackwardForwardPolynomialFisheye: {
      const double a = uniform(g, 0.6, 1.2);
      return Camera<double>::backward_forward_polynomial_fisheye(random_K(g), row({0, a}), row({0, 1 / a}));
    }
    case CameraKind::Kitti360Fisheye:
      return Camera<double>::kitti360_fisheye(random_K(g), row({uniform(g, -0.05, 0.05), uniform(g, -0.005, 0.005)}),
                                              row({uniform(g, 0.2, 1.0)}));
    case CameraKind::Cube: return Camera<double>::cube();
  }
  return Camera<double>::cube();
}

/// A random point inside the camera's usual field of view at distance in [0.5, 5].
inline Vec3<double> random_point_in_view(CameraKind kind, Rng& g) {
  const double dist = uniform(g, 0.5, 5);
  double max_theta = 0;
  switch (kind) {
    case CameraKind::Orthographic: return {uniform(g, -2, 2), uniform(g, -2, 2), dist};
    case CameraKind::Pinhole:
    case CameraKind::OpenCV: max_theta = 0.75; break;
    case CameraKind::OpenCVFisheye:
    case CameraKind::BackwardForwardPolynomialFisheye: max_theta = 1.6; break;
    case CameraKind::Kitti360Fisheye: max_theta = 1.2; break;
    case CameraKind::Equirectangular:
    case CameraKind::Cube: max_theta = std::numbers::pi; break;
  }
  const double cos_t = uniform(g, std::cos(max_theta), 1);
  const double sin_t = std::sqrt(std::max(0.0, 1 - cos_t * cos_t));
  const double phi = uniform(g, -std::numbers::pi, std::numbers::pi);
  return dist * Vec3<double>(sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t);
}

inline PointProjection<double> project_one(const Camera<double>& cam, const Vec3<double>& x, bool along_ray = true) {
  return models::project(cam.element(0), x, along_ray);
}

inline Ray<double> ray_one(const Camera<double>& cam, const Vec3<double>& pix, bool unit_vec = true) {
  return models::pixel_to_ray(cam.element(0), pix, unit_vec);
}

inline NdArray<double> points(const std::vector<Vec3<double>>& v) {
  NdArray<double> a(Shape{v.size(), 3});
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int k = 0; k < 3; ++k) a[3 * i + static_cast<std::size_t>(k)] = v[i](k);
  return a;
}

/// Max difference between rays of the original image cropped to a pixel window and
/// the rays of the cropped camera. Infinite when the validity masks disagree.
inline double crop_ray_error(const Camera<double>& cam, const ImageSize& hw, std::size_t left, std::size_t right,
                             std::size_t top, std::size_t bottom) {
  const auto full = get_camera_rays(cam, hw);
  const Camera<double> cropped = crop<double>(cam, {{double(left), double(right), double(top), double(bottom)}}, false, hw);
  const ImageSize chw{bottom - top, right - left};
  const auto sub = get_camera_rays(cropped, chw);
  double err = 0;
  for (std::size_t i = 0; i < chw.height; ++i) {
    for (std::size_t j = 0; j < chw.width; ++j) {
      const std::size_t a = (i + top) * hw.width + j + left, b = i * chw.width + j;
      if (full.valid[a] != sub.valid[b]) return std::numeric_limits<double>::infinity();
      if (!full.valid[a]) continue;
      for (std::size_t k = 0; k < 3; ++k) {
        err = std::max(err, std::abs(full.dirs[3 * a + k] - sub.dirs[3 * b + k]));
        err = std::max(err, std::abs(full.origin[3 * a + k] - sub.origin[3 * b + k]));
      }
    }
  }
  return err;
}

/// Max difference between rays of a flipped camera and the mirrored rays of the original,
/// mapped through the frame reflection when there is one.
inline double flip_ray_error(const Camera<double>& cam, const FlipResult<double>& flipped, FlipAxis axis, const ImageSize& hw) {
  const auto orig = get_camera_rays(cam, hw);
  const auto mirrored = get_camera_rays(flipped.camera, hw);
  const Mat3<double> M = flipped.reflection.value_or(Mat3<double>::Identity());
  double err = 0;
  for (std::size_t i = 0; i < hw.height; ++i) {
    for (std::size_t j = 0; j < hw.width; ++j) {
      const std::size_t si = axis == FlipAxis::Vertical ? hw.height - 1 - i : i;
      const std::size_t sj = axis == FlipAxis::Horizontal ? hw.width - 1 - j : j;
      const std::size_t a = i * hw.width + j, b = si * hw.width + sj;
      if (mirrored.valid[a] != orig.valid[b]) return std::numeric_limits<double>::infinity();
      if (!orig.valid[b]) continue;
      const Vec3<double> d = M * Vec3<double>(orig.dirs.ptr() + 3 * b);
      const Vec3<double> o = M * Vec3<double>(orig.origin.ptr() + 3 * b);
      err = std::max(err, (d - Vec3<double>(mirrored.dirs.ptr() + 3 * a)).cwiseAbs().maxCoeff());
      err = std::max(err, (o - Vec3<double>(mirrored.origin.ptr() + 3 * a)).cwiseAbs().maxCoeff());
    }
  }
  return err;
}

/// Relative reconstruction error of x from its pixel and along-ray depth; negative when x
/// does not project validly.
inline double round_trip_error(const Camera<double>& cam, const Vec3<double>& x) {
  const auto p = project_one(cam, x, true);
  if (!p.valid) return -1;
  const auto r = ray_one(cam, p.pix, true);
  if (!r.valid) return std::numeric_limits<double>::infinity();
  return (r.origin + p.depth * r.dir - x).norm() / (1 + x.norm());
}

}  // namespace multicam::testing
