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

#include "etr/first_order.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "etr/data.hpp"
#include "etr/subproblem.hpp"

namespace etr {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void FirstOrderConfig::Validate() const {
  std::vector<std::string> bad;
  if (!(eta >= 0.0) || !std::isfinite(eta)) bad.push_back("eta must be finite and >= 0");
  if (method == FirstOrderMethod::kRmsprop && !(beta > 0.0 && beta < 1.0)) {
    bad.push_back("beta must be in (0, 1) for rmsprop");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) bad.push_back("epsilon must be >= 0");
  if (batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid first-order config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw std::invalid_argument(msg);
  }
}

FirstOrderStepResult PreconditionedStep(const Eigen::VectorXd& g, const EllipsoidMatrix& a,
                                        double eta) {
  if (g.size() != a.dim()) {
    throw std::invalid_argument(
        fmt::format("preconditioned step: gradient dim {} vs geometry dim {}", g.size(), a.dim()));
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument(fmt::format("preconditioned step: bad eta {}", eta));
  }
  FirstOrderStepResult result;
  result.zero_gradient = g.isZero(0.0);
  result.step = (-eta) * a.Solve(g);
  return result;
}

Eigen::VectorXd FirstOrderTrStep(const Eigen::VectorXd& g, const EllipsoidMatrix& a,
                                 double radius) {
  if (g.size() != a.dim()) {
    throw std::invalid_argument(
        fmt::format("linear tr step: gradient dim {} vs geometry dim {}", g.size(), a.dim()));
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument(fmt::format("linear tr step: bad radius {}", radius));
  }
  const double dual_norm = AInvNorm(g, a);
  if (dual_norm == 0.0) {
    throw std::invalid_argument("linear tr step: zero gradient has no boundary minimizer");
  }
  return (-radius / dual_norm) * a.Solve(g);
}

bool VerifyKkt(const Eigen::VectorXd& s, const Eigen::VectorXd& g, const EllipsoidMatrix& a,
               double eta, double tol) {
  if (g.size() != a.dim() || s.size() != a.dim()) {
    throw std::invalid_argument("kkt: dimension mismatch");
  }
  if (!(eta > 0.0) || !(tol > 0.0)) {
    throw std::invalid_argument("kkt: eta and tol must be positive");
  }
  const double g_norm = g.norm();
  if (g_norm == 0.0) {
    throw std::invalid_argument("kkt: zero gradient");
  }

  const double dual_norm = AInvNorm(g, a);  // the KKT multiplier
  const double radius = eta * dual_norm;
  const double s_norm = ANorm(s, a);
  const double scale = std::max(1.0, radius);

  // Dual feasibility: lambda = dual_norm >= 0 holds by construction.
  // Primal feasibility.
  if (s_norm > radius + tol * scale) return false;
  // Complementary slackness: the linear model pushes to the boundary.
  if (std::abs(s_norm - radius) > tol * scale) return false;
  // Stationarity g + lambda A s = 0 with lambda scaled per unit A-norm.
  if (s_norm == 0.0) return false;
  const Eigen::VectorXd residual = g + (dual_norm / s_norm) * a.Apply(s);
  return residual.norm() <= tol * g_norm;
}

RunResult FirstOrderRun(const Objective& objective, const Eigen::VectorXd& w0,
                        const FirstOrderConfig& config, const StoppingCriteria& stopping) {
  config.Validate();
  const Eigen::Index d = objective.dim();
  const Eigen::Index n = objective.num_samples();
  if (w0.size() != d) {
    throw std::invalid_argument(
        fmt::format("first order: w0 has dim {}, objective expects {}", w0.size(), d));
  }
  if (n < 1) {
    throw std::invalid_argument("first order: objective has no samples");
  }

  BatchSampler sampler(n, config.batch_size, config.seed,
                       SamplingScheme::kWithoutReplacementPerIter);

  std::optional<GradientHistory> history;
  if (config.method == FirstOrderMethod::kAdagrad) {
    history.emplace(config.full_matrix ? HistoryMode::kAdaFull : HistoryMode::kAdaDiag, d);
  } else if (config.method == FirstOrderMethod::kRmsprop) {
    history.emplace(config.full_matrix ? HistoryMode::kRmsFull : HistoryMode::kRmsDiag, d,
                    config.beta);
  }

  RunResult result;
  result.w = w0;
  std::optional<EllipsoidMatrix> last_ellipsoid;

  for (std::int64_t t = 0; t < stopping.max_iterations; ++t) {
    if (stopping.max_backprops >= 0 && result.backprops >= stopping.max_backprops) break;

    const std::vector<int> batch = sampler.Next();
    const Eigen::VectorXd g = objective.Grad(result.w, batch);
    result.backprops += static_cast<std::int64_t>(batch.size());
    if (!g.allFinite()) {
      result.aborted = true;
      result.abort_reason = fmt::format("non-finite gradient at iteration {}", t);
      break;
    }
    const double grad_norm = g.norm();
    result.max_grad_norm_sq = std::max(result.max_grad_norm_sq, grad_norm * grad_norm);
    if (grad_norm <= std::max(stopping.grad_tol, 1e-300)) break;

    const double loss = objective.Loss(result.w, batch);
    result.forward_passes += static_cast<std::int64_t>(batch.size());

    EllipsoidMatrix ellipsoid = EllipsoidMatrix::Uniform(d);
    if (history.has_value()) {
      history->Update(g);
      // The square-rooted accumulator, matching the classical update
      // w - eta (Acc + eps I)^{-1/2} g.
      ellipsoid = BuildEllipsoid(*history, config.epsilon, SpectralExponent::kHalf);
      last_ellipsoid = ellipsoid;
    }

    const FirstOrderStepResult step = PreconditionedStep(g, ellipsoid, config.eta);
    result.w += step.step;

    IterationRecord rec;
    rec.iteration = t;
    rec.backprops = result.backprops;
    rec.epoch_fraction = static_cast<double>(result.backprops) / static_cast<double>(n);
    rec.loss_batch = loss;
    rec.grad_norm = grad_norm;
    rec.delta = config.eta * AInvNorm(g, ellipsoid);  // implied trust radius
    rec.rho = kNan;
    rec.accepted = true;
    rec.outcome = StepOutcome::kSuccessful;
    rec.cg_iterations = 0;
    rec.termination = ToString(SubproblemTermination::kBoundary);
    rec.model_decrease = rec.delta * AInvNorm(g, ellipsoid);
    rec.loss_after = kNan;
    result.trace.push_back(std::move(rec));

    if (!result.w.allFinite()) {
      result.aborted = true;
      result.abort_reason = fmt::format("non-finite iterate after iteration {}", t);
      break;
    }
  }

  if (config.method == FirstOrderMethod::kRmsprop && last_ellipsoid.has_value() &&
      result.max_grad_norm_sq > 0.0) {
    result.certificate =
        CertifyUniformEquivalence(*last_ellipsoid, result.max_grad_norm_sq, config.beta,
                                  history->step_count(), config.epsilon);
  }
  return result;
}

}  // namespace etr
