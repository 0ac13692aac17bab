// Copyright 2026 The ETR Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "etr/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace etr {
namespace {

// Gradients below this 2-norm are treated as exactly zero.
constexpr double kZeroGradTol = 1e-14;

// Positive root tau of ||z + tau d||^2 = delta^2, in the numerically stable
// formulation that avoids subtracting nearly equal quantities.
double BoundaryTau(const Eigen::VectorXd& z, const Eigen::VectorXd& d, double delta) {
  const double dd = d.squaredNorm();
  const double zd = z.dot(d);
  const double zz = z.squaredNorm();
  const double disc = std::sqrt(std::max(0.0, zd * zd + dd * (delta * delta - zz)));
  if (zd <= 0.0) {
    return (-zd + disc) / dd;
  }
  return (delta * delta - zz) / (zd + disc);
}

// m(0) - m(s) evaluated exactly once in the original coordinates.
double ModelDecrease(const QuadraticModel& model, const Eigen::VectorXd& s) {
  return -(model.gradient.dot(s) + 0.5 * s.dot(model.hvp(s)));
}

}  // namespace

std::string ToString(SubproblemTermination t) {
  switch (t) {
    case SubproblemTermination::kInterior:
      return "interior";
    case SubproblemTermination::kBoundary:
      return "boundary";
    case SubproblemTermination::kNegativeCurvature:
      return "negative_curvature";
    case SubproblemTermination::kMaxIter:
      return "max_iter";
    case SubproblemTermination::kResidualTol:
      return "residual_tol";
  }
  throw std::logic_error("unreachable");
}

int DefaultMaxCgIterations(Eigen::Index dim) {
  return static_cast<int>(std::min<Eigen::Index>(dim, 250));
}

SubproblemResult SolveSteihaug(const QuadraticModel& model, const EllipsoidMatrix& geometry,
                               double delta, double kappa_kry, int max_iter) {
  const Eigen::Index d = model.gradient.size();
  if (d != geometry.dim()) {
    throw std::invalid_argument(fmt::format(
        "steihaug: gradient dim {} does not match geometry dim {}", d, geometry.dim()));
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument(fmt::format("steihaug: delta must be positive, got {}", delta));
  }
  if (!(kappa_kry > 0.0) || !std::isfinite(kappa_kry)) {
    throw std::invalid_argument(
        fmt::format("steihaug: kappa_kry must be positive, got {}", kappa_kry));
  }
  if (!model.gradient.allFinite()) {
    throw std::invalid_argument("steihaug: gradient contains non-finite values");
  }
  if (max_iter <= 0) max_iter = DefaultMaxCgIterations(d);

  SubproblemResult result;
  result.step = Eigen::VectorXd::Zero(d);

  // Vanishing gradient: the zero step is already optimal for the linear term
  // and any curvature exploitation is left to the caller's outer loop.
  if (model.gradient.norm() <= kZeroGradTol) {
    result.termination = SubproblemTermination::kInterior;
    return result;
  }

  // Change of variables y = A^{1/2} s turning the ellipsoid into a sphere:
  // minimize gt'y + 1/2 y'(A^{-1/2} B A^{-1/2})y over ||y|| <= delta.
  const Eigen::VectorXd gt = geometry.SolveSqrt(model.gradient);
  const auto hvp_t = [&](const Eigen::VectorXd& v) {
    return geometry.SolveSqrt(model.hvp(geometry.SolveSqrt(v)));
  };

  const double g_norm = gt.norm();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd r = gt;
  Eigen::VectorXd dir = -r;
  double rr = r.squaredNorm();

  for (int j = 0; j < max_iter; ++j) {
    const Eigen::VectorXd bd = hvp_t(dir);
    const double curvature = dir.dot(bd);
    if (!std::isfinite(curvature)) {
      throw std::runtime_error(
          fmt::format("steihaug: non-finite curvature at iteration {}", j));
    }
    ++result.cg_iterations;

    if (curvature <= 0.0) {
      // Non-positive curvature: the model is unbounded along dir, so follow
      // it to the boundary.
      z += BoundaryTau(z, dir, delta) * dir;
      result.termination = SubproblemTermination::kNegativeCurvature;
      result.on_boundary = true;
      break;
    }

    const double alpha = rr / curvature;
    const Eigen::VectorXd z_next = z + alpha * dir;
    if (z_next.norm() >= delta) {
      z += BoundaryTau(z, dir, delta) * dir;
      result.termination = SubproblemTermination::kBoundary;
      result.on_boundary = true;
      break;
    }

    z = z_next;
    r += alpha * bd;
    const double rr_next = r.squaredNorm();
    if (!std::isfinite(rr_next)) {
      throw std::runtime_error(
          fmt::format("steihaug: non-finite residual at iteration {}", j));
    }
    const double r_norm = std::sqrt(rr_next);
    if (r_norm <= kappa_kry * g_norm || r_norm <= kZeroGradTol * g_norm) {
      result.termination = r_norm <= kZeroGradTol * g_norm
                               ? SubproblemTermination::kInterior
                               : SubproblemTermination::kResidualTol;
      break;
    }
    dir = -r + (rr_next / rr) * dir;
    rr = rr_next;
    if (j + 1 == max_iter) {
      result.termination = SubproblemTermination::kMaxIter;
    }
  }

  result.step = geometry.SolveSqrt(z);
  result.model_decrease = ModelDecrease(model, result.step);
  return result;
}

namespace {

// Secular function phi(sigma) = sum_i q_i^2 / (lambda_i + sigma)^2, i.e. the
// squared norm of the candidate step y(sigma) = -q_i / (lambda_i + sigma).
double SecularPhi(const Eigen::VectorXd& q, const Eigen::VectorXd& lambda, double sigma) {
  double phi = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double denom = lambda[i] + sigma;
    const double term = q[i] / denom;
    phi += term * term;
  }
  return phi;
}

}  // namespace

SubproblemResult SolveExact(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient,
                            const EllipsoidMatrix& geometry, double delta) {
  const Eigen::Index d = gradient.size();
  if (hessian.rows() != d || hessian.cols() != d || geometry.dim() != d) {
    throw std::invalid_argument(fmt::format(
        "exact solve: inconsistent dims (hessian {}x{}, gradient {}, geometry {})",
        hessian.rows(), hessian.cols(), d, geometry.dim()));
  }
  if (d > 512) {
    throw std::invalid_argument(
        fmt::format("exact solve: dim {} exceeds the dense cap of 512", d));
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument(fmt::format("exact solve: delta must be positive, got {}", delta));
  }
  if (!hessian.allFinite() || !gradient.allFinite()) {
    throw std::invalid_argument("exact solve: non-finite inputs");
  }

  // Transform to the sphere: Bt = A^{-1/2} B A^{-1/2}, gt = A^{-1/2} g.
  const Eigen::VectorXd gt = geometry.SolveSqrt(gradient);
  Eigen::MatrixXd bt(d, d);
  switch (geometry.shape()) {
    case EllipsoidShape::kUniform:
      bt = hessian;
      break;
    case EllipsoidShape::kDiagonal: {
      const Eigen::VectorXd inv_sqrt = geometry.entries().cwiseSqrt().cwiseInverse();
      bt = inv_sqrt.asDiagonal() * hessian * inv_sqrt.asDiagonal();
      break;
    }
    case EllipsoidShape::kFull: {
      Eigen::MatrixXd half(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        half.col(i) = geometry.SolveSqrt(hessian.col(i));
      }
      for (Eigen::Index i = 0; i < d; ++i) {
        bt.col(i) = geometry.SolveSqrt(half.row(i).transpose());
      }
      break;
    }
  }
  bt = 0.5 * (bt + bt.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(bt);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("exact solve: eigendecomposition failed");
  }
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Eigen::VectorXd q = v.transpose() * gt;

  // Gradient components numerically indistinguishable from zero are zeroed,
  // so hard-case detection does not chase phantom poles.
  const double q_scale = q.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(q[i]) <= 1e-14 * q_scale) q[i] = 0.0;
  }

  const double lambda_min = lambda.minCoeff();
  const double lambda_scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
  bool boundary = false;

  // Strictly convex and unconstrained-minimizer-inside case.
  if (lambda_min > 0.0) {
    y = -q.cwiseQuotient(lambda);
    if (y.norm() <= delta) {
      SubproblemResult result;
      result.step = geometry.SolveSqrt(v * y);
      double dec = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        dec -= q[i] * y[i] + 0.5 * lambda[i] * y[i] * y[i];
      }
      result.model_decrease = dec;
      result.on_boundary = false;
      result.termination = SubproblemTermination::kInterior;
      return result;
    }
    y.setZero();
  }

  // Boundary solution: find sigma >= max(0, -lambda_min) with
  // ||y(sigma)|| = delta, where y_i = -q_i / (lambda_i + sigma).
  const double sigma_lo_base = std::max(0.0, -lambda_min);
  const double gap_tol = 1e-12 * lambda_scale;

  // Split spectrum into the bottom eigenspace (lambda_i + sigma_lo ~ 0) and
  // the rest; phi restricted to the rest stays finite at sigma_lo.
  double phi_rest = 0.0;
  bool grad_in_bottom = false;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double denom = lambda[i] + sigma_lo_base;
    if (denom <= gap_tol) {
      if (q[i] != 0.0) grad_in_bottom = true;
    } else {
      const double term = q[i] / denom;
      phi_rest += term * term;
    }
  }

  const double delta_sq = delta * delta;
  if (!grad_in_bottom && phi_rest <= delta_sq) {
    // No pole at sigma_lo.  For sigma_lo > 0 this is the hard case: take the
    // regularized step on the non-degenerate eigenspace and pad with a bottom
    // eigenvector until the boundary.  For sigma_lo == 0 (singular PSD
    // Hessian, gradient orthogonal to the null space) the step is already a
    // global minimizer and padding would not change the model value.
    for (Eigen::Index i = 0; i < d; ++i) {
      const double denom = lambda[i] + sigma_lo_base;
      y[i] = denom <= gap_tol ? 0.0 : -q[i] / denom;
    }
    if (sigma_lo_base > 0.0) {
      const double pad = std::sqrt(std::max(0.0, delta_sq - y.squaredNorm()));
      for (Eigen::Index i = 0; i < d; ++i) {
        if (lambda[i] + sigma_lo_base <= gap_tol) {
          y[i] += pad;
          break;
        }
      }
      boundary = true;
    }
  } else {
    // Safeguarded bisection on phi(sigma) - delta^2, monotone decreasing on
    // (sigma_lo, inf).  Bracket the root first by growing the upper end.
    double lo = sigma_lo_base;
    double hi = sigma_lo_base + q.norm() / delta + 1.0;
    for (int grow = 0; grow < 200 && SecularPhi(q, lambda, hi) > delta_sq; ++grow) {
      hi = sigma_lo_base + 2.0 * (hi - sigma_lo_base);
    }
    for (int it = 0; it < 400; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;  // interval exhausted in fp
      if (SecularPhi(q, lambda, mid) > delta_sq) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double sigma = hi;  // feasible side: ||y(hi)|| <= delta
    for (Eigen::Index i = 0; i < d; ++i) {
      y[i] = -q[i] / (lambda[i] + sigma);
    }
    // Land exactly on the boundary; the bisection already has the direction
    // right to ~1e-15 relative.
    const double norm = y.norm();
    if (norm > 0.0) y *= delta / norm;
    boundary = true;
  }

  SubproblemResult result;
  result.step = geometry.SolveSqrt(v * y);
  double dec = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    dec -= q[i] * y[i] + 0.5 * lambda[i] * y[i] * y[i];
  }
  result.model_decrease = dec;
  result.on_boundary = boundary;
  result.termination =
      boundary ? SubproblemTermination::kBoundary : SubproblemTermination::kInterior;
  return result;
}

double CauchyDecrease(const QuadraticModel& model, const EllipsoidMatrix& geometry, double delta) {
  if (model.gradient.size() != geometry.dim()) {
    throw std::invalid_argument(fmt::format(
        "cauchy: gradient dim {} does not match geometry dim {}", model.gradient.size(),
        geometry.dim()));
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument(fmt::format("cauchy: delta must be positive, got {}", delta));
  }
  if (model.gradient.norm() <= kZeroGradTol) {
    return 0.0;
  }
  // Along s(tau) = -tau A^{-1} g the model reads
  //   m(0) - m(s) = tau c1 - tau^2/2 c2,  c1 = g'A^{-1}g,  c2 = u'Bu,
  // with the feasibility cap tau <= delta / ||u||_A = delta / sqrt(c1).
  const Eigen::VectorXd u = geometry.Solve(model.gradient);
  const double c1 = model.gradient.dot(u);
  const double c2 = u.dot(model.hvp(u));
  const double tau_max = delta / std::sqrt(c1);
  const double tau = c2 > 0.0 ? std::min(c1 / c2, tau_max) : tau_max;
  return tau * c1 - 0.5 * tau * tau * c2;
}

}  // namespace etr
