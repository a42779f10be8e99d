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
#include <cstddef>

#include "multicam/batch.hpp"
#include "multicam/cubemap.hpp"
#include "multicam/ndarray.hpp"
#include "multicam/parallel.hpp"

namespace multicam {

enum class InterpMode { Bilinear, Nearest };
enum class Padding { Zeros, Border };

template <std::floating_point Real>
struct SampleResult {
  NdArray<Real> values;  // (*batch, C, *group)
  Mask in_bounds;        // (*batch, *group)
};

namespace detail {

// Up to four texel taps of one sample inside an H x W plane.
template <std::floating_point Real>
struct Taps {
  std::array<std::size_t, 4> index{};
  std::array<Real, 4> weight{};
  int count = 0;
  bool in_bounds = false;
};

// Taps for normalized (x, y). Coordinates inside [-1, 1] clamp to the border texels;
// outside, Zeros padding yields no taps and Border padding clamps.
template <std::floating_point Real>
Taps<Real> image_taps(Real x, Real y, std::size_t H, std::size_t W, InterpMode mode, Padding padding) {
  Taps<Real> t;
  if (!std::isfinite(x) || !std::isfinite(y)) return t;
  t.in_bounds = x >= -1 && x <= 1 && y >= -1 && y <= 1;
  if (!t.in_bounds && padding == Padding::Zeros) return t;
  const Real px = (x + 1) * static_cast<Real>(W) / 2;
  const Real py = (y + 1) * static_cast<Real>(H) / 2;
  const auto clampi = [](Real v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<Real>(v, 0, static_cast<Real>(n - 1)));
  };
  if (mode == InterpMode::Nearest) {
    t.index[0] = clampi(std::floor(py), H) * W + clampi(std::floor(px), W);
    t.weight[0] = 1;
    t.count = 1;
    return t;
  }
  const Real sx = std::clamp<Real>(px - Real(0.5), 0, static_cast<Real>(W - 1));
  const Real sy = std::clamp<Real>(py - Real(0.5), 0, static_cast<Real>(H - 1));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
  const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const Real ax = sx - static_cast<Real>(x0), ay = sy - static_cast<Real>(y0);
  t.index = {y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1};
  t.weight = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  t.count = 4;
  return t;
}

// Taps of a direction in a (6, F, F) cubemap plane; always in bounds.
template <std::floating_point Real>
Taps<Real> cube_taps(const Vec3<Real>& d, std::size_t F, InterpMode mode) {
  const auto fc = cubemap::face_from_direction(d);
  Taps<Real> t = image_taps<Real>(std::clamp<Real>(fc.u, -1, 1), std::clamp<Real>(fc.v, -1, 1), F, F, mode, Padding::Border);
  for (int k = 0; k < t.count; ++k) t.index[static_cast<std::size_t>(k)] += fc.face * F * F;
  t.in_bounds = true;
  return t;
}

template <std::floating_point Real>
Real apply_taps(const Taps<Real>& t, const Real* plane) {
  Real acc = 0;
  for (int k = 0; k < t.count; ++k) acc += t.weight[static_cast<std::size_t>(k)] * plane[t.index[static_cast<std::size_t>(k)]];
  return acc;
}

template <std::floating_point Real, typename TapFn>
SampleResult<Real> sample_planes(const NdArray<Real>& img, std::size_t event_dims, const NdArray<Real>& coords,
                                 std::size_t coord_dim, TapFn&& taps_at, const char* what) {
  if (coords.ndim() < 1 || coords.dim(-1) != coord_dim) {
    throw ShapeError(std::string(what) + ": coordinates must be (..., " + std::to_string(coord_dim) + "), got " +
                     shape_str(coords.shape()));
  }
  const Shape batch = shape_slice(img.shape(), 0, img.ndim() - event_dims);
  if (coords.ndim() < batch.size() + 1 || shape_slice(coords.shape(), 0, batch.size()) != batch) {
    throw ShapeError(std::string(what) + ": coordinates " + shape_str(coords.shape()) + " do not match image batch " +
                     shape_str(batch));
  }
  const Shape group = shape_slice(coords.shape(), batch.size(), coords.ndim() - 1);
  const std::size_t nb = shape_numel(batch), ng = shape_numel(group);
  const std::size_t C = img.dim(-static_cast<std::ptrdiff_t>(event_dims));
  const std::size_t plane = img.size() / std::max<std::size_t>(1, nb * C);
  SampleResult<Real> out{NdArray<Real>(concat_shapes(concat_shapes(batch, {C}), group)), Mask(concat_shapes(batch, group))};
  parallel_for(nb * ng, [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t b = e / ng, g = e % ng;
      const Taps<Real> t = taps_at(coords.ptr() + e * coord_dim);
      out.in_bounds[e] = t.in_bounds;
      for (std::size_t c = 0; c < C; ++c) {
        out.values[(b * C + c) * ng + g] = apply_taps(t, img.ptr() + (b * C + c) * plane);
      }
    }
  }, 1024);
  return out;
}

}  // namespace detail

/// Sample images `(*batch, C, H, W)` at normalized coordinates `(*batch, *group, 2)`.
///
/// Returns values `(*batch, C, *group)` and in-bounds flags `(*batch, *group)`.
/// Pixel centers sit at normalized 2(i + 0.5)/S - 1.
template <std::floating_point Real>
SampleResult<Real> samples_from_image(const NdArray<Real>& img, const NdArray<Real>& coords,
                                      InterpMode mode = InterpMode::Bilinear, Padding padding = Padding::Zeros) {
  if (img.ndim() < 3 || img.dim(-1) == 0 || img.dim(-2) == 0 || img.dim(-3) == 0) {
    throw ShapeError("samples_from_image: image must be (*batch, C, H, W) with nonzero extents, got " + shape_str(img.shape()));
  }
  const std::size_t H = img.dim(-2), W = img.dim(-1);
  return detail::sample_planes(img, 3, coords, 2, [&](const Real* p) {
    return detail::image_taps<Real>(p[0], p[1], H, W, mode, padding);
  }, "samples_from_image");
}

/// Sample cubemaps `(*batch, C, 6, F, F)` along directions `(*batch, *group, 3)`.
template <std::floating_point Real>
SampleResult<Real> samples_from_cubemap(const NdArray<Real>& cm, const NdArray<Real>& dirs,
                                        InterpMode mode = InterpMode::Bilinear) {
  if (cm.ndim() < 4 || cm.dim(-3) != cubemap::kFaces || cm.dim(-1) != cm.dim(-2) || cm.dim(-1) == 0) {
    throw ShapeError("samples_from_cubemap: cubemap must be (*batch, C, 6, F, F), got " + shape_str(cm.shape()));
  }
  const std::size_t F = cm.dim(-1);
  for (std::size_t i = 0; i + 2 < dirs.size(); i += 3) {
    if (dirs[i] == 0 && dirs[i + 1] == 0 && dirs[i + 2] == 0) throw ShapeError("samples_from_cubemap: zero direction");
  }
  return detail::sample_planes(cm, 4, dirs, 3, [&](const Real* p) {
    const Vec3<Real> d(p[0], p[1], p[2]);
    if (!d.allFinite()) return detail::Taps<Real>{};
    return detail::cube_taps<Real>(d, F, mode);
  }, "samples_from_cubemap");
}

}  // namespace multicam
