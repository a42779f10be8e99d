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
#include <functional>
#include <limits>
#include <type_traits>

#include <Eigen/Core>
#include <Eigen/LU>

#include "multicam/batch.hpp"

namespace multicam {

/// Iteration controls for newton_solve.
template <std::floating_point Real>
struct NewtonConfig {
  int max_iterations = 20;
  Real tolerance = std::is_same_v<Real, float> ? Real(1e-6) : Real(1e-9);
  Real damping = 1;

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("NewtonConfig: max_iterations must be >= 1");
    if (!(tolerance > 0)) throw std::invalid_argument("NewtonConfig: tolerance must be positive");
    if (!(damping > 0 && damping <= 1)) throw std::invalid_argument("NewtonConfig: damping must be in (0, 1]");
  }
};

/// A square map y = f(x; theta) with analytic Jacobians in x and theta.
template <typename F>
concept SmoothMap = requires(const F& f, const typename F::Input& x, const typename F::Params& theta) {
  typename F::Scalar;
  { F::input_dim } -> std::convertible_to<int>;
  { F::param_dim } -> std::convertible_to<int>;
  { f.evaluate(x, theta) } -> std::convertible_to<typename F::Input>;
  { f.jacobian_x(x, theta) } -> std::convertible_to<Eigen::Matrix<typename F::Scalar, F::input_dim, F::input_dim>>;
  { f.jacobian_theta(x, theta) } -> std::convertible_to<Eigen::Matrix<typename F::Scalar, F::input_dim, F::param_dim>>;
};

template <typename Real, int N>
struct InverseResult {
  Eigen::Matrix<Real, N, 1> x;
  bool converged = false;
  Real residual = std::numeric_limits<Real>::infinity();
  int iterations = 0;
};

namespace detail {

template <typename Real, int N>
bool solve_square(const Eigen::Matrix<Real, N, N>& J, const Eigen::Matrix<Real, N, 1>& rhs,
                  Eigen::Matrix<Real, N, 1>& out) {
  if (!J.allFinite()) return false;
  if constexpr (N == 1) {
    if (J(0, 0) == 0) return false;
    out(0) = rhs(0) / J(0, 0);
  } else {
    Eigen::FullPivLU<Eigen::Matrix<Real, N, N>> lu(J);
    if (!lu.isInvertible()) return false;
    out = lu.solve(rhs);
  }
  return out.allFinite();
}

}  // namespace detail

/// Solve f(x; theta) = y by Newton iteration starting from x0.
///
/// `iterations` counts Newton steps taken. A singular or non-finite Jacobian stops
/// the iteration and reports converged = false.
namespace detail {

// One extra full step once within tolerance, kept only if it does not increase the residual.
template <typename F, typename R>
void polish(const F& f, const typename F::Input& y, const typename F::Params& theta,
            const NewtonConfig<typename F::Scalar>& cfg, R& res) {
  using Real = typename F::Scalar;
  Eigen::Matrix<Real, F::input_dim, 1> step;
  const typename F::Input r = f.evaluate(res.x, theta) - y;
  if (!solve_square<Real, F::input_dim>(f.jacobian_x(res.x, theta), r, step)) return;
  const typename F::Input x = res.x - cfg.damping * step;
  const Real residual = (f.evaluate(x, theta) - y).norm();
  if (residual <= res.residual) {
    res.x = x;
    res.residual = residual;
    ++res.iterations;
  }
}

}  // namespace detail

template <SmoothMap F>
InverseResult<typename F::Scalar, F::input_dim> newton_solve(const F& f, const typename F::Input& y,
                                                             const typename F::Params& theta,
                                                             const typename F::Input& x0,
                                                             const NewtonConfig<typename F::Scalar>& cfg = {}) {
  using Real = typename F::Scalar;
  constexpr int N = F::input_dim;
  InverseResult<Real, N> res;
  res.x = x0;
  for (int it = 0;; ++it) {
    const typename F::Input r = f.evaluate(res.x, theta) - y;
    res.residual = r.norm();
    res.iterations = it;
    if (!std::isfinite(res.residual)) break;
    if (res.residual <= cfg.tolerance) {
      res.converged = true;
      if (res.residual > 0 && it < cfg.max_iterations) detail::polish(f, y, theta, cfg, res);
      break;
    }
    if (it == cfg.max_iterations) break;
    Eigen::Matrix<Real, N, 1> step;
    if (!detail::solve_square<Real, N>(f.jacobian_x(res.x, theta), r, step)) break;
    res.x -= cfg.damping * step;
  }
  return res;
}

/// Derivative of the inverse g(y; theta) with respect to y: (df/dx)^-1 at x = g(y; theta).
template <SmoothMap F>
Eigen::Matrix<typename F::Scalar, F::input_dim, F::input_dim> inverse_sensitivity_y(
    const F& f, const typename F::Input& x, const typename F::Params& theta) {
  using Real = typename F::Scalar;
  constexpr int N = F::input_dim;
  const Eigen::Matrix<Real, N, N> J = f.jacobian_x(x, theta);
  Eigen::Matrix<Real, N, N> out;
  for (int c = 0; c < N; ++c) {
    Eigen::Matrix<Real, N, 1> col;
    if (!detail::solve_square<Real, N>(J, Eigen::Matrix<Real, N, 1>::Unit(c), col)) {
      throw DegenerateError("inverse_sensitivity_y: singular Jacobian");
    }
    out.col(c) = col;
  }
  return out;
}

/// Derivative of g(y; theta) with respect to theta: -(df/dx)^-1 df/dtheta.
template <SmoothMap F>
Eigen::Matrix<typename F::Scalar, F::input_dim, F::param_dim> inverse_sensitivity_theta(
    const F& f, const typename F::Input& x, const typename F::Params& theta) {
  using Real = typename F::Scalar;
  constexpr int N = F::input_dim;
  constexpr int M = F::param_dim;
  const Eigen::Matrix<Real, N, N> J = f.jacobian_x(x, theta);
  const Eigen::Matrix<Real, N, M> Jt = f.jacobian_theta(x, theta);
  Eigen::Matrix<Real, N, M> out;
  for (int c = 0; c < M; ++c) {
    Eigen::Matrix<Real, N, 1> col;
    if (!detail::solve_square<Real, N>(J, Jt.col(c), col)) {
      throw DegenerateError("inverse_sensitivity_theta: singular Jacobian");
    }
    out.col(c) = -col;
  }
  return out;
}

/// Wraps a plain evaluation function; Jacobians come from central finite differences.
template <std::floating_point Real, int N, int M>
class FiniteDifferenceMap {
 public:
  using Scalar = Real;
  static constexpr int input_dim = N;
  static constexpr int param_dim = M;
  using Input = Eigen::Matrix<Real, N, 1>;
  using Params = Eigen::Matrix<Real, M, 1>;
  using Function = std::function<Input(const Input&, const Params&)>;

  explicit FiniteDifferenceMap(Function fn, Real rel_step = std::cbrt(std::numeric_limits<Real>::epsilon()))
      : fn_(std::move(fn)), rel_step_(rel_step) {}

  Input evaluate(const Input& x, const Params& theta) const { return fn_(x, theta); }

  Eigen::Matrix<Real, N, N> jacobian_x(const Input& x, const Params& theta) const {
    Eigen::Matrix<Real, N, N> J;
    for (int c = 0; c < N; ++c) {
      const Real h = rel_step_ * std::max(Real(1), std::abs(x(c)));
      Input xp = x, xm = x;
      xp(c) += h;
      xm(c) -= h;
      J.col(c) = (fn_(xp, theta) - fn_(xm, theta)) / (2 * h);
    }
    return J;
  }

  Eigen::Matrix<Real, N, M> jacobian_theta(const Input& x, const Params& theta) const {
    Eigen::Matrix<Real, N, M> J;
    for (int c = 0; c < M; ++c) {
      const Real h = rel_step_ * std::max(Real(1), std::abs(theta(c)));
      Params tp = theta, tm = theta;
      tp(c) += h;
      tm(c) -= h;
      J.col(c) = (fn_(x, tp) - fn_(x, tm)) / (2 * h);
    }
    return J;
  }

 private:
  Function fn_;
  Real rel_step_;
};

/// Batched results of newton_solve_batch; arrays are shaped like the target minus its last dim.
template <std::floating_point Real>
struct BatchInverseResult {
  NdArray<Real> x;
  Mask converged;
  NdArray<Real> residual;
  NdArray<int> iterations;
};

/// newton_solve over targets `(*batch, *group, N)` with parameters `(*batch, M)`.
template <SmoothMap F>
BatchInverseResult<typename F::Scalar> newton_solve_batch(const F& f, const NdArray<typename F::Scalar>& y,
                                                          const NdArray<typename F::Scalar>& theta,
                                                          const NdArray<typename F::Scalar>& x0,
                                                          const NewtonConfig<typename F::Scalar>& cfg = {}) {
  using Real = typename F::Scalar;
  constexpr int N = F::input_dim;
  constexpr int M = F::param_dim;
  cfg.validate();
  if (y.ndim() < 1 || y.dim(-1) != N || x0.shape() != y.shape()) throw ShapeError("newton_solve_batch: bad target shape");
  if (theta.ndim() < 1 || theta.dim(-1) != M) throw ShapeError("newton_solve_batch: bad parameter shape");
  const BatchSplit split = infer_batch(theta.shape(), 1, y.shape(), 1);
  if (split.grouped_arg == 0 && !split.group_shape.empty()) throw ShapeError("newton_solve_batch: parameters have extra batch dims");
  const std::size_t nb = shape_numel(split.batch_shape);
  const std::size_t ng = shape_numel(split.group_shape);
  const Shape out_shape = shape_slice(y.shape(), 0, y.ndim() - 1);
  BatchInverseResult<Real> out{NdArray<Real>(y.shape()), Mask(out_shape), NdArray<Real>(out_shape),
                               NdArray<int>(out_shape)};
  for (std::size_t b = 0; b < nb; ++b) {
    const typename F::Params th = Eigen::Map<const typename F::Params>(theta.ptr() + b * M);
    for (std::size_t g = 0; g < ng; ++g) {
      const std::size_t e = b * ng + g;
      const auto r = newton_solve(f, typename F::Input(Eigen::Map<const typename F::Input>(y.ptr() + e * N)), th,
                                  typename F::Input(Eigen::Map<const typename F::Input>(x0.ptr() + e * N)), cfg);
      Eigen::Map<typename F::Input>(out.x.ptr() + e * N) = r.x;
      out.converged[e] = r.converged ? 1 : 0;
      out.residual[e] = r.residual;
      out.iterations[e] = r.iterations;
    }
  }
  return out;
}

}  // namespace multicam
