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
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "multicam/batch.hpp"
#include "multicam/distortion.hpp"
#include "multicam/newton.hpp"

namespace multicam {

enum class CameraKind {
  Pinhole,
  Orthographic,
  OpenCV,
  Equirectangular,
  OpenCVFisheye,
  BackwardForwardPolynomialFisheye,
  Kitti360Fisheye,
  Cube,
};

inline constexpr std::array<CameraKind, 8> kAllCameraKinds = {
    CameraKind::Pinhole,       CameraKind::Orthographic,
    CameraKind::OpenCV,        CameraKind::Equirectangular,
    CameraKind::OpenCVFisheye, CameraKind::BackwardForwardPolynomialFisheye,
    CameraKind::Kitti360Fisheye, CameraKind::Cube,
};

inline constexpr std::string_view kind_name(CameraKind kind) {
  switch (kind) {
    case CameraKind::Pinhole: return "pinhole";
    case CameraKind::Orthographic: return "orthographic";
    case CameraKind::OpenCV: return "opencv";
    case CameraKind::Equirectangular: return "equirectangular";
    case CameraKind::OpenCVFisheye: return "opencv_fisheye";
    case CameraKind::BackwardForwardPolynomialFisheye: return "backward_forward_polynomial_fisheye";
    case CameraKind::Kitti360Fisheye: return "kitti360_fisheye";
    case CameraKind::Cube: return "cube";
  }
  return "unknown";
}

inline CameraKind kind_from_name(std::string_view name) {
  for (CameraKind k : kAllCameraKinds) {
    if (kind_name(k) == name) return k;
  }
  throw CameraError("unknown camera model '" + std::string(name) + "'");
}

/// All kinds except Cube end projection with u = f * u' + c.
inline constexpr bool is_affine(CameraKind kind) { return kind != CameraKind::Cube; }

/// Every ray passes through the origin.
inline constexpr bool is_central(CameraKind kind) { return kind != CameraKind::Orthographic; }

/// Validity is bounded by z_min for planar models and by dist_min for radial ones.
inline constexpr bool uses_z_min(CameraKind kind) {
  return kind == CameraKind::Pinhole || kind == CameraKind::Orthographic || kind == CameraKind::OpenCV;
}

inline constexpr bool has_theta_max(CameraKind kind) {
  return kind == CameraKind::OpenCVFisheye || kind == CameraKind::BackwardForwardPolynomialFisheye ||
         kind == CameraKind::Kitti360Fisheye;
}

inline constexpr std::size_t pixel_dim(CameraKind kind) { return kind == CameraKind::Cube ? 3 : 2; }

/// Depth semantic a kind's depth maps use by default: z for planar models, along-ray otherwise.
inline constexpr bool natural_depth_is_along_ray(CameraKind kind) { return !uses_z_min(kind); }

inline constexpr std::string_view limit_name(CameraKind kind) { return uses_z_min(kind) ? "z_min" : "dist_min"; }

struct ParamSpec {
  std::string_view name;
  std::size_t dim;  // 0: any length >= 1
};

inline std::vector<ParamSpec> param_specs(CameraKind kind) {
  std::vector<ParamSpec> specs;
  if (is_affine(kind)) specs.push_back({"affine", 4});
  switch (kind) {
    case CameraKind::OpenCV:
      specs.push_back({"radial", 6});
      specs.push_back({"tangential", 2});
      break;
    case CameraKind::OpenCVFisheye: specs.push_back({"distortion", 4}); break;
    case CameraKind::BackwardForwardPolynomialFisheye:
      specs.push_back({"forward_poly", 0});
      specs.push_back({"backward_poly", 0});
      break;
    case CameraKind::Kitti360Fisheye:
      specs.push_back({"distortion", 2});
      specs.push_back({"xi", 1});
      break;
    default: break;
  }
  return specs;
}

template <std::floating_point Real>
struct PointProjection {
  Vec3<Real> pix = Vec3<Real>::Zero();  // third entry only used by Cube
  Real depth = 0;
  bool valid = false;
};

template <std::floating_point Real>
struct Ray {
  Vec3<Real> origin = Vec3<Real>::Zero();
  Vec3<Real> dir = Vec3<Real>::Zero();
  bool valid = false;
};

/// Non-owning view of one batch element of a camera: its kind and parameter rows.
template <std::floating_point Real>
struct CameraView {
  CameraKind kind = CameraKind::Pinhole;
  const Real* affine = nullptr;  // f0, f1, c0, c1
  std::span<const Real> extra0;  // radial / distortion / forward_poly
  std::span<const Real> extra1;  // tangential / xi / backward_poly
  Real limit = 0;                // z_min or dist_min
  Real theta_max = std::numbers::pi_v<Real>;
  NewtonConfig<Real> newton{};
};

namespace models {

template <std::floating_point Real>
typename OpenCVDistortionMap<Real>::Params opencv_params(const CameraView<Real>& cam) {
  typename OpenCVDistortionMap<Real>::Params k;
  for (int i = 0; i < 6; ++i) k(i) = cam.extra0[static_cast<std::size_t>(i)];
  k(6) = cam.extra1[0];
  k(7) = cam.extra1[1];
  return k;
}

template <std::floating_point Real>
typename FisheyeThetaMap<Real>::Params fisheye_params(const CameraView<Real>& cam) {
  return typename FisheyeThetaMap<Real>::Params(cam.extra0[0], cam.extra0[1], cam.extra0[2], cam.extra0[3]);
}

template <std::floating_point Real>
typename Kitti360RadialMap<Real>::Params kitti_params(const CameraView<Real>& cam) {
  return typename Kitti360RadialMap<Real>::Params(cam.extra0[0], cam.extra0[1]);
}

template <std::floating_point Real>
PointProjection<Real> project_pre_affine(const CameraView<Real>& cam, const Vec3<Real>& x, bool depth_is_along_ray) {
  PointProjection<Real> out;
  const Real r = x.norm();
  const Real depth = depth_is_along_ray ? r : x.z();
  if (!x.allFinite()) return out;
  switch (cam.kind) {
    case CameraKind::Pinhole:
    case CameraKind::OpenCV: {
      out.depth = depth;
      if (!(x.z() > 0)) return out;
      Vec2<Real> p(x.x() / x.z(), x.y() / x.z());
      out.valid = x.z() >= cam.limit;
      if (cam.kind == CameraKind::OpenCV) {
        OpenCVDistortionMap<Real> map;
        const auto k = opencv_params(cam);
        const Real den = OpenCVDistortionMap<Real>::radial(p.squaredNorm(), k).den;
        out.valid = out.valid && den > 0 && map.jacobian_x(p, k).determinant() > 0;
        p = map.evaluate(p, k);
      }
      out.pix.template head<2>() = p;
      return out;
    }
    case CameraKind::Orthographic:
      out.pix << x.x(), x.y(), 0;
      out.depth = x.z();
      out.valid = x.z() >= cam.limit;
      return out;
    case CameraKind::Equirectangular: {
      out.depth = depth;
      if (!(r > 0)) return out;
      out.pix << std::acos(std::clamp(-x.y() / r, Real(-1), Real(1))), std::atan2(x.x(), x.z()), 0;
      out.valid = r >= cam.limit;
      return out;
    }
    case CameraKind::OpenCVFisheye:
    case CameraKind::BackwardForwardPolynomialFisheye: {
      out.depth = depth;
      if (!(r > 0)) return out;
      const Vec3<Real> n = x / r;
      const Real rho = std::hypot(n.x(), n.y());
      const Real theta = std::atan2(rho, n.z());
      Real theta_d, slope;
      if (cam.kind == CameraKind::OpenCVFisheye) {
        const auto k = fisheye_params(cam);
        theta_d = FisheyeThetaMap<Real>::distort(theta, k);
        slope = FisheyeThetaMap<Real>::derivative(theta, k);
      } else {
        theta_d = polyval(cam.extra0, theta);
        slope = polyval_derivative(cam.extra0, theta);
      }
      if (rho > 0) out.pix << theta_d * n.x() / rho, theta_d * n.y() / rho, 0;
      out.valid = r >= cam.limit && theta <= cam.theta_max && slope > 0;
      return out;
    }
    case CameraKind::Kitti360Fisheye: {
      out.depth = depth;
      if (!(r > 0)) return out;
      const Vec3<Real> n = x / r;
      const Real xi = cam.extra1[0];
      const Real w = n.z() + xi;
      if (!(w > 0)) return out;
      const Real mx = n.x() / w, my = n.y() / w;
      const Real s = mx * mx + my * my;
      const auto k = kitti_params(cam);
      const Real g = Kitti360RadialMap<Real>::gain(s, k);
      out.pix << g * mx, g * my, 0;
      const Real theta = std::atan2(std::hypot(n.x(), n.y()), n.z());
      out.valid = r >= cam.limit && 1 + xi * n.z() >= 0 && theta <= cam.theta_max &&
                  Kitti360RadialMap<Real>::derivative(s, k) > 0;
      return out;
    }
    case CameraKind::Cube: {
      const Real m = x.cwiseAbs().maxCoeff();
      out.depth = depth_is_along_ray ? r : m;
      if (!(m > 0)) return out;
      out.pix = x / m;
      out.valid = r >= cam.limit;
      return out;
    }
  }
  return out;
}

/// Full projection p(x): model map followed by the affine step for affine kinds.
template <std::floating_point Real>
PointProjection<Real> project(const CameraView<Real>& cam, const Vec3<Real>& x, bool depth_is_along_ray) {
  PointProjection<Real> out = project_pre_affine(cam, x, depth_is_along_ray);
  if (is_affine(cam.kind)) {
    out.pix(0) = cam.affine[0] * out.pix(0) + cam.affine[2];
    out.pix(1) = cam.affine[1] * out.pix(1) + cam.affine[3];
  }
  if (!out.valid && !out.pix.allFinite()) out.pix.setZero();
  return out;
}

/// Ray through a pre-affine sensor coordinate; direction is unit length.
template <std::floating_point Real>
Ray<Real> ray_pre_affine(const CameraView<Real>& cam, const Vec3<Real>& u) {
  Ray<Real> ray;
  if (!u.allFinite()) return ray;
  const auto from_theta = [&](Real theta, Real rho_d) {
    const Real st = std::sin(theta);
    if (rho_d > 0) {
      ray.dir << st * u.x() / rho_d, st * u.y() / rho_d, std::cos(theta);
    } else {
      ray.dir << 0, 0, 1;
    }
  };
  switch (cam.kind) {
    case CameraKind::Pinhole:
      ray.dir << u.x(), u.y(), 1;
      ray.dir.normalize();
      ray.valid = true;
      return ray;
    case CameraKind::Orthographic:
      ray.origin << u.x(), u.y(), 0;
      ray.dir << 0, 0, 1;
      ray.valid = true;
      return ray;
    case CameraKind::OpenCV: {
      OpenCVDistortionMap<Real> map;
      const auto k = opencv_params(cam);
      const Vec2<Real> target(u.x(), u.y());
      const auto res = newton_solve(map, target, k, target, cam.newton);
      ray.dir << res.x(0), res.x(1), 1;
      ray.dir.normalize();
      ray.valid = res.converged && OpenCVDistortionMap<Real>::radial(res.x.squaredNorm(), k).den > 0 &&
                  map.jacobian_x(res.x, k).determinant() > 0;
      return ray;
    }
    case CameraKind::Equirectangular: {
      const Real polar = u.x(), azimuth = u.y();
      const Real pi = std::numbers::pi_v<Real>;
      ray.dir << std::sin(polar) * std::sin(azimuth), -std::cos(polar), std::sin(polar) * std::cos(azimuth);
      ray.valid = polar >= 0 && polar <= pi && azimuth >= -pi && azimuth <= pi;
      return ray;
    }
    case CameraKind::OpenCVFisheye: {
      const auto k = fisheye_params(cam);
      const Real rho_d = std::hypot(u.x(), u.y());
      using Map = FisheyeThetaMap<Real>;
      const auto res = newton_solve(Map{}, typename Map::Input(rho_d), k, typename Map::Input(rho_d), cam.newton);
      const Real theta = res.x(0);
      from_theta(theta, rho_d);
      ray.valid = res.converged && theta >= 0 && theta <= cam.theta_max && Map::derivative(theta, k) > 0;
      return ray;
    }
    case CameraKind::BackwardForwardPolynomialFisheye: {
      const Real rho_d = std::hypot(u.x(), u.y());
      const Real theta = polyval(cam.extra1, rho_d);
      from_theta(theta, rho_d);
      ray.valid = std::isfinite(theta) && theta >= 0 && theta <= cam.theta_max;
      return ray;
    }
    case CameraKind::Kitti360Fisheye: {
      const auto k = kitti_params(cam);
      const Real xi = cam.extra1[0];
      using Map = Kitti360RadialMap<Real>;
      const Real rd2 = u.x() * u.x() + u.y() * u.y();
      const auto res = newton_solve(Map{}, typename Map::Input(rd2), k, typename Map::Input(rd2), cam.newton);
      const Real s = res.x(0);
      const Real g = Map::gain(s, k);
      const Real disc = 1 + (1 - xi * xi) * s;
      if (!(g > 0) || !(disc >= 0) || !(s >= 0)) return ray;
      const Real mx = u.x() / g, my = u.y() / g;
      const Real factor = (xi + std::sqrt(disc)) / (1 + s);
      ray.dir << factor * mx, factor * my, factor - xi;
      const Real norm = ray.dir.norm();
      if (!(norm > 0)) return ray;
      ray.dir /= norm;
      const Real theta = std::atan2(std::hypot(ray.dir.x(), ray.dir.y()), ray.dir.z());
      ray.valid = res.converged && Map::derivative(s, k) > 0 && theta <= cam.theta_max;
      return ray;
    }
    case CameraKind::Cube: {
      const Real n = u.norm();
      if (!(n > 0)) return ray;
      ray.dir = u / n;
      ray.valid = true;
      return ray;
    }
  }
  return ray;
}

/// pixel-to-ray phi(u). With unit_vec false, directions are scaled to z = 1 (Cube:
/// to the infinity-norm cube) and rays with non-positive z are flagged invalid.
template <std::floating_point Real>
Ray<Real> pixel_to_ray(const CameraView<Real>& cam, const Vec3<Real>& pix, bool unit_vec) {
  Vec3<Real> u = pix;
  if (is_affine(cam.kind)) {
    u(0) = (pix(0) - cam.affine[2]) / cam.affine[0];
    u(1) = (pix(1) - cam.affine[3]) / cam.affine[1];
    u(2) = 0;
  }
  Ray<Real> ray = ray_pre_affine(cam, u);
  if (!unit_vec) {
    if (cam.kind == CameraKind::Cube) {
      const Real m = ray.dir.cwiseAbs().maxCoeff();
      if (m > 0) ray.dir /= m;
    } else if (ray.dir.z() > 0) {
      ray.dir /= ray.dir.z();
    } else {
      ray.valid = false;
    }
  }
  if (!ray.valid && !(ray.dir.allFinite() && ray.origin.allFinite())) {
    ray.dir.setZero();
    ray.origin.setZero();
  }
  return ray;
}

}  // namespace models
}  // namespace multicam
