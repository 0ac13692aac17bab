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

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "etr/problems.hpp"

namespace etr {
namespace {

Eigen::MatrixXd BuildHessian(const QuadraticSpec& spec) {
  const Eigen::Index d = spec.dim;
  if (d < 1) {
    throw std::invalid_argument(fmt::format("quadratic: dim must be >= 1, got {}", d));
  }
  if (!(spec.kappa >= 1.0) || !std::isfinite(spec.kappa)) {
    throw std::invalid_argument(
        fmt::format("quadratic: kappa must be finite and >= 1, got {}", spec.kappa));
  }

  // Eigenvalues log-spaced in [1, kappa], so the condition number is exactly
  // kappa by construction.
  Eigen::VectorXd lambda(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
    lambda[i] = std::exp(t * std::log(spec.kappa));
  }

  if (spec.rotation == RotationKind::kAxisAligned) {
    return Eigen::MatrixXd(lambda.asDiagonal());
  }

  // Random orthogonal basis: QR of a Gaussian matrix with the sign of R's
  // diagonal fixed, which makes Q unique and the draw deterministic.
  std::mt19937_64 rng(spec.rotation_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      gauss(i, j) = normal(rng);
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  Eigen::MatrixXd h = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (h + h.transpose());
}

}  // namespace

QuadraticObjective::QuadraticObjective(const QuadraticSpec& spec) : hessian_(BuildHessian(spec)) {
  if (spec.optimum.size() == 0) {
    optimum_ = Eigen::VectorXd::Zero(spec.dim);
  } else if (spec.optimum.size() == spec.dim) {
    optimum_ = spec.optimum;
  } else {
    throw std::invalid_argument(fmt::format("quadratic: optimum has dim {}, expected {}",
                                            spec.optimum.size(), spec.dim));
  }
}

double QuadraticObjective::Loss(const Eigen::VectorXd& w, std::span<const int> /*batch*/) const {
  const Eigen::VectorXd e = w - optimum_;
  return 0.5 * e.dot(hessian_ * e);
}

Eigen::VectorXd QuadraticObjective::Grad(const Eigen::VectorXd& w,
                                         std::span<const int> /*batch*/) const {
  return hessian_ * (w - optimum_);
}

Eigen::VectorXd QuadraticObjective::Hvp(const Eigen::VectorXd& /*w*/, const Eigen::VectorXd& v,
                                        std::span<const int> /*batch*/) const {
  return hessian_ * v;
}

std::unique_ptr<QuadraticObjective> MakeQuadratic(const QuadraticSpec& spec) {
  return std::make_unique<QuadraticObjective>(spec);
}

Eigen::VectorXd FdGradient(const Objective& objective, const Eigen::VectorXd& w,
                           std::span<const int> batch, double h) {
  Eigen::VectorXd g(w.size());
  Eigen::VectorXd probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double up = objective.Loss(probe, batch);
    probe[i] = w[i] - h;
    const double down = objective.Loss(probe, batch);
    probe[i] = w[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd FdHvp(const Objective& objective, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& v, std::span<const int> batch, double h) {
  // Scale the probe so the perturbation size is independent of ||v||.
  const double vn = v.norm();
  if (vn == 0.0) return Eigen::VectorXd::Zero(w.size());
  const double step = h / vn;
  const Eigen::VectorXd up = objective.Grad(w + step * v, batch);
  const Eigen::VectorXd down = objective.Grad(w - step * v, batch);
  return (up - down) / (2.0 * step);
}

}  // namespace etr
