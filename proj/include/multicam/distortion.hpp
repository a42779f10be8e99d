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
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "multicam/newton.hpp"

// Forward lens maps whose inverses need Newton iteration, with closed-form Jacobians.

namespace multicam {

/// Brown-Conrady style rational radial plus tangential distortion on normalized
/// pinhole coordinates. Parameters are (k0..k5, p0, p1).
template <std::floating_point Real>
struct OpenCVDistortionMap {
  using Scalar = Real;
  static constexpr int input_dim = 2;
  static constexpr int param_dim = 8;
  using Input = Eigen::Matrix<Real, 2, 1>;
  using Params = Eigen::Matrix<Real, 8, 1>;

  struct Radial {
    Real num, den, dnum, dden;
    Real factor() const { return num / den; }
    Real dfactor() const { return (dnum * den - num * dden) / (den * den); }  // d/dr2
  };

  static Radial radial(Real r2, const Params& k) {
    const Real r4 = r2 * r2, r6 = r4 * r2;
    return {1 + k(0) * r2 + k(1) * r4 + k(2) * r6, 1 + k(3) * r2 + k(4) * r4 + k(5) * r6,
            k(0) + 2 * k(1) * r2 + 3 * k(2) * r4, k(3) + 2 * k(4) * r2 + 3 * k(5) * r4};
  }

  Input evaluate(const Input& p, const Params& k) const {
    const Real x = p(0), y = p(1), r2 = x * x + y * y;
    const Real d = radial(r2, k).factor();
    return {x * d + 2 * k(6) * x * y + k(7) * (r2 + 2 * x * x), y * d + k(6) * (r2 + 2 * y * y) + 2 * k(7) * x * y};
  }

  Eigen::Matrix<Real, 2, 2> jacobian_x(const Input& p, const Params& k) const {
    const Real x = p(0), y = p(1), r2 = x * x + y * y;
    const Radial rad = radial(r2, k);
    const Real d = rad.factor(), dd = rad.dfactor();
    Eigen::Matrix<Real, 2, 2> J;
    J(0, 0) = d + 2 * x * x * dd + 2 * k(6) * y + 6 * k(7) * x;
    J(0, 1) = 2 * x * y * dd + 2 * k(6) * x + 2 * k(7) * y;
    J(1, 0) = 2 * x * y * dd + 2 * k(6) * x + 2 * k(7) * y;
    J(1, 1) = d + 2 * y * y * dd + 6 * k(6) * y + 2 * k(7) * x;
    return J;
  }

  Eigen::Matrix<Real, 2, 8> jacobian_theta(const Input& p, const Params& k) const {
    const Real x = p(0), y = p(1), r2 = x * x + y * y;
    const Radial rad = radial(r2, k);
    const Real pw[3] = {r2, r2 * r2, r2 * r2 * r2};
    Eigen::Matrix<Real, 2, 8> J;
    for (int i = 0; i < 3; ++i) {
      const Real dn = pw[i] / rad.den;
      const Real dd = -rad.num * pw[i] / (rad.den * rad.den);
      J(0, i) = x * dn;
      J(1, i) = y * dn;
      J(0, 3 + i) = x * dd;
      J(1, 3 + i) = y * dd;
    }
    J(0, 6) = 2 * x * y;
    J(1, 6) = r2 + 2 * y * y;
    J(0, 7) = r2 + 2 * x * x;
    J(1, 7) = 2 * x * y;
    return J;
  }
};

/// theta_d = theta (1 + k0 theta^2 + k1 theta^4 + k2 theta^6 + k3 theta^8).
template <std::floating_point Real>
struct FisheyeThetaMap {
  using Scalar = Real;
  static constexpr int input_dim = 1;
  static constexpr int param_dim = 4;
  using Input = Eigen::Matrix<Real, 1, 1>;
  using Params = Eigen::Matrix<Real, 4, 1>;

  static Real distort(Real t, const Params& k) {
    const Real t2 = t * t;
    return t * (1 + t2 * (k(0) + t2 * (k(1) + t2 * (k(2) + t2 * k(3)))));
  }
  static Real derivative(Real t, const Params& k) {
    const Real t2 = t * t;
    return 1 + t2 * (3 * k(0) + t2 * (5 * k(1) + t2 * (7 * k(2) + t2 * 9 * k(3))));
  }

  Input evaluate(const Input& t, const Params& k) const { return Input(distort(t(0), k)); }
  Eigen::Matrix<Real, 1, 1> jacobian_x(const Input& t, const Params& k) const {
    return Eigen::Matrix<Real, 1, 1>(derivative(t(0), k));
  }
  Eigen::Matrix<Real, 1, 4> jacobian_theta(const Input& t, const Params&) const {
    const Real v = t(0), v2 = v * v;
    Eigen::Matrix<Real, 1, 4> J;
    Real p = v * v2;
    for (int i = 0; i < 4; ++i, p *= v2) J(0, i) = p;
    return J;
  }
};

/// Squared distorted radius of the unified (Kitti-360) fisheye model as a function
/// of s = r^2: s (1 + k0 s + k1 s^2)^2. Parameters are (k0, k1).
template <std::floating_point Real>
struct Kitti360RadialMap {
  using Scalar = Real;
  static constexpr int input_dim = 1;
  static constexpr int param_dim = 2;
  using Input = Eigen::Matrix<Real, 1, 1>;
  using Params = Eigen::Matrix<Real, 2, 1>;

  static Real gain(Real s, const Params& k) { return 1 + k(0) * s + k(1) * s * s; }
  static Real derivative(Real s, const Params& k) {
    const Real g = gain(s, k);
    return g * g + 2 * s * g * (k(0) + 2 * k(1) * s);
  }

  Input evaluate(const Input& s, const Params& k) const {
    const Real g = gain(s(0), k);
    return Input(s(0) * g * g);
  }
  Eigen::Matrix<Real, 1, 1> jacobian_x(const Input& s, const Params& k) const {
    return Eigen::Matrix<Real, 1, 1>(derivative(s(0), k));
  }
  Eigen::Matrix<Real, 1, 2> jacobian_theta(const Input& s, const Params& k) const {
    const Real v = s(0), g = gain(v, k);
    Eigen::Matrix<Real, 1, 2> J;
    J(0, 0) = 2 * v * v * g;
    J(0, 1) = 2 * v * v * v * g;
    return J;
  }
};

/// Horner evaluation of sum_i c[i] t^i.
template <std::floating_point Real>
Real polyval(std::span<const Real> c, Real t) {
  Real acc = 0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * t + c[i];
  return acc;
}

template <std::floating_point Real>
Real polyval_derivative(std::span<const Real> c, Real t) {
  Real acc = 0;
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * t + static_cast<Real>(i) * c[i];
  return acc;
}

/// Consistency of a forward/backward fisheye polynomial pair: max |theta - q(p(theta))|
/// over `samples` evenly spaced angles in [0, theta_max].
template <std::floating_point Real>
Real polynomial_inverse_error(std::span<const Real> forward, std::span<const Real> backward, Real theta_max,
                              std::size_t samples = 1000) {
  Real worst = 0;
  for (std::size_t i = 0; i <= samples; ++i) {
    const Real t = theta_max * static_cast<Real>(i) / static_cast<Real>(samples);
    worst = std::max(worst, std::abs(t - polyval(backward, polyval(forward, t))));
  }
  return worst;
}

/// Least-squares backward polynomial of the given degree approximating the inverse of
/// `forward` on [0, theta_max].
template <std::floating_point Real>
std::vector<Real> fit_backward_polynomial(std::span<const Real> forward, std::size_t degree, Real theta_max,
                                          std::size_t samples = 2000) {
  using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  const auto n = static_cast<Eigen::Index>(samples + 1);
  const auto m = static_cast<Eigen::Index>(degree + 1);
  const double td_max = static_cast<double>(polyval(forward, theta_max));
  // Fit in a scaled variable for conditioning, then expand back.
  const double scale = td_max != 0 ? std::abs(td_max) : 1.0;
  MatX A(n, m);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(theta_max) * static_cast<double>(i) / static_cast<double>(samples);
    const double td = static_cast<double>(polyval(forward, static_cast<Real>(t))) / scale;
    double p = 1;
    for (Eigen::Index j = 0; j < m; ++j, p *= td) A(i, j) = p;
    b(i) = t;
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  std::vector<Real> out(degree + 1);
  double s = 1;
  for (std::size_t j = 0; j <= degree; ++j, s /= scale) out[j] = static_cast<Real>(c(static_cast<Eigen::Index>(j)) * s);
  return out;
}

}  // namespace multicam
