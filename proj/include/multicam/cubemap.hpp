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

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>

#include "multicam/batch.hpp"

// Cubemap face convention, shared by the Cube camera grid and cubemap sampling.
//
// Faces are ordered (+x, -x, +y, -y, +z, -z). A point on face f is
//   p[axis(f)] = sign(f),  p[u_axis(f)] = u,  p[v_axis(f)] = v,   u, v in [-1, 1],
// with (u_axis, v_axis, normal) right-handed:
//   +x: (y, z)   -x: (z, y)   +y: (z, x)   -y: (x, z)   +z: (x, y)   -z: (y, x)
// Within a face image, u runs along columns and v along rows. A cube image of
// face size F is stored as a (6F, F) raster with the faces stacked top to bottom.

namespace multicam::cubemap {

inline constexpr std::size_t kFaces = 6;

struct FaceAxes {
  int normal;
  int u;
  int v;
  int sign;
};

inline constexpr FaceAxes face_axes(std::size_t face) {
  constexpr std::array<FaceAxes, kFaces> table = {{
      {0, 1, 2, +1},
      {0, 2, 1, -1},
      {1, 2, 0, +1},
      {1, 0, 2, -1},
      {2, 0, 1, +1},
      {2, 1, 0, -1},
  }};
  return table[face];
}

template <std::floating_point Real>
struct FaceCoord {
  std::size_t face = 0;
  Real u = 0;
  Real v = 0;
};

/// Dominant-axis face and in-face coordinates of a nonzero direction.
template <std::floating_point Real>
FaceCoord<Real> face_from_direction(const Vec3<Real>& d) {
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(d(i)) > std::abs(d(axis))) axis = i;
  }
  const std::size_t face = static_cast<std::size_t>(2 * axis + (d(axis) < 0 ? 1 : 0));
  const FaceAxes ax = face_axes(face);
  const Real m = std::abs(d(axis));
  return {face, d(ax.u) / m, d(ax.v) / m};
}

template <std::floating_point Real>
Vec3<Real> point_on_face(std::size_t face, Real u, Real v) {
  const FaceAxes ax = face_axes(face);
  Vec3<Real> p;
  p(ax.normal) = static_cast<Real>(ax.sign);
  p(ax.u) = u;
  p(ax.v) = v;
  return p;
}

/// Cube pixel-center grid of shape (6F, F, 3) in the stacked-face layout.
template <std::floating_point Real>
NdArray<Real> cube_grid(std::size_t face_size) {
  if (face_size == 0) throw ShapeError("cube_grid: face size must be positive");
  NdArray<Real> g(Shape{kFaces * face_size, face_size, 3});
  for (std::size_t f = 0; f < kFaces; ++f) {
    for (std::size_t r = 0; r < face_size; ++r) {
      for (std::size_t c = 0; c < face_size; ++c) {
        const Vec3<Real> p = point_on_face<Real>(f, pixel_center<Real>(c, face_size), pixel_center<Real>(r, face_size));
        Real* dst = g.ptr() + ((f * face_size + r) * face_size + c) * 3;
        dst[0] = p(0);
        dst[1] = p(1);
        dst[2] = p(2);
      }
    }
  }
  return g;
}

/// Face size for a stacked cube raster of size hw; throws unless H == 6W.
inline std::size_t face_size_of(const ImageSize& hw) {
  if (hw.width == 0 || hw.height != kFaces * hw.width) {
    throw ShapeError("cube images must be (6F, F), got " + std::to_string(hw.height) + "x" + std::to_string(hw.width));
  }
  return hw.width;
}

}  // namespace multicam::cubemap
