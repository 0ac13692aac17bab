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

#include "etr/tr_loop.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "etr/data.hpp"
#include "etr/first_order.hpp"
#include "etr/subproblem.hpp"

namespace etr {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Derives decorrelated stream seeds from the run seed (splitmix64 step).
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

HistoryMode HistoryModeFor(EllipsoidMode mode) {
  switch (mode) {
    case EllipsoidMode::kAdaDiag:
      return HistoryMode::kAdaDiag;
    case EllipsoidMode::kRmsDiag:
      return HistoryMode::kRmsDiag;
    case EllipsoidMode::kAdaFull:
      return HistoryMode::kAdaFull;
    case EllipsoidMode::kRmsFull:
      return HistoryMode::kRmsFull;
    case EllipsoidMode::kUniform:
      break;
  }
  throw std::logic_error("uniform mode keeps no history");
}

bool IsRmsMode(EllipsoidMode mode) {
  return mode == EllipsoidMode::kRmsDiag || mode == EllipsoidMode::kRmsFull;
}

}  // namespace

void TRConfig::Validate() const {
  std::vector<std::string> bad;
  if (!(delta0 > 0.0) || !std::isfinite(delta0)) bad.push_back("delta0 must be positive");
  if (!(delta_max >= delta0) || !std::isfinite(delta_max)) {
    bad.push_back("delta_max must be finite and >= delta0");
  }
  if (!(eta1 > 0.0 && eta1 < 1.0)) bad.push_back("eta1 must be in (0, 1)");
  if (!(eta2 > eta1 && eta2 < 1.0)) bad.push_back("eta2 must be in (eta1, 1)");
  if (!(gamma1 > 1.0) || !std::isfinite(gamma1)) bad.push_back("gamma1 must be > 1");
  if (!(gamma2 > 1.0) || !std::isfinite(gamma2)) bad.push_back("gamma2 must be > 1");
  if (!(kappa_kry > 0.0 && kappa_kry < 1.0)) bad.push_back("kappa_kry must be in (0, 1)");
  if (batch_loss < 1) bad.push_back("batch_loss must be >= 1");
  if (batch_grad < 1) bad.push_back("batch_grad must be >= 1");
  if (batch_hess < 1) bad.push_back("batch_hess must be >= 1");
  if (IsRmsMode(ellipsoid_mode) && !(beta > 0.0 && beta < 1.0)) {
    bad.push_back("beta must be in (0, 1) for Rms modes");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) bad.push_back("epsilon must be >= 0");
  if (!bad.empty()) {
    std::string msg = "invalid trust-region config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw std::invalid_argument(msg);
  }
}

TRConfig TableDefaults(EllipsoidMode mode) {
  TRConfig config;
  config.delta0 = 1e-4;
  config.delta_max = 10.0;
  config.eta1 = 1e-4;
  config.eta2 = 0.95;
  config.gamma1 = 1.1;
  config.gamma2 = IsRmsMode(mode) ? 1.75 : 1.5;
  config.kappa_kry = 0.1;
  config.batch_loss = 512;
  config.batch_grad = 512;
  config.batch_hess = 512;
  config.ellipsoid_mode = mode;
  return config;
}

std::string ToString(StepOutcome outcome) {
  switch (outcome) {
    case StepOutcome::kVerySuccessful:
      return "very_successful";
    case StepOutcome::kSuccessful:
      return "successful";
    case StepOutcome::kUnsuccessful:
      return "unsuccessful";
  }
  throw std::logic_error("unreachable");
}

double ComputeRho(double loss_before, double loss_after, double model_decrease) {
  if (!(model_decrease > 0.0)) {
    throw std::invalid_argument(
        fmt::format("rho: model_decrease must be positive, got {}", model_decrease));
  }
  return (loss_before - loss_after) / model_decrease;
}

double UpdateRadius(double delta, double rho, const TRConfig& config) {
  if (rho > config.eta2) {
    return std::min(config.gamma1 * delta, config.delta_max);
  }
  if (rho >= config.eta1) {  // NaN falls through to the shrink branch
    return delta;
  }
  return delta / config.gamma2;
}

Eigen::VectorXd AcceptStep(const Eigen::VectorXd& w, const Eigen::VectorXd& s, double rho,
                           double eta1) {
  if (w.size() != s.size()) {
    throw std::invalid_argument(
        fmt::format("accept: step dim {} does not match iterate dim {}", s.size(), w.size()));
  }
  return rho >= eta1 ? (w + s).eval() : w;
}

RunResult TrMinimize(const Objective& objective, const Eigen::VectorXd& w0,
                     const TRConfig& config, const StoppingCriteria& stopping) {
  config.Validate();
  const Eigen::Index d = objective.dim();
  const Eigen::Index n = objective.num_samples();
  if (w0.size() != d) {
    throw std::invalid_argument(
        fmt::format("tr: w0 has dim {}, objective expects {}", w0.size(), d));
  }
  if (n < 1) {
    throw std::invalid_argument("tr: objective has no samples");
  }

  // Independent index streams for the three estimates.
  BatchSampler loss_sampler(n, config.batch_loss, MixSeed(config.seed, 1),
                            SamplingScheme::kWithoutReplacementPerIter);
  BatchSampler grad_sampler(n, config.batch_grad, MixSeed(config.seed, 2),
                            SamplingScheme::kWithoutReplacementPerIter);
  BatchSampler hess_sampler(n, config.batch_hess, MixSeed(config.seed, 3),
                            SamplingScheme::kWithoutReplacementPerIter);

  const bool uniform = config.ellipsoid_mode == EllipsoidMode::kUniform;
  std::optional<GradientHistory> history;
  if (!uniform) {
    history.emplace(HistoryModeFor(config.ellipsoid_mode), d, config.beta);
  }

  RunResult result;
  result.w = w0;
  double delta = config.delta0;
  std::optional<EllipsoidMatrix> last_ellipsoid;

  const int max_cg =
      config.max_cg_iterations > 0 ? config.max_cg_iterations : DefaultMaxCgIterations(d);

  for (std::int64_t t = 0; t < stopping.max_iterations; ++t) {
    if (stopping.max_backprops >= 0 && result.backprops >= stopping.max_backprops) break;

    const std::vector<int> grad_batch = grad_sampler.Next();
    const Eigen::VectorXd g = objective.Grad(result.w, grad_batch);
    result.backprops += static_cast<std::int64_t>(grad_batch.size());
    if (!g.allFinite()) {
      result.aborted = true;
      result.abort_reason = fmt::format("non-finite gradient at iteration {}", t);
      break;
    }
    const double grad_norm = g.norm();
    result.max_grad_norm_sq = std::max(result.max_grad_norm_sq, grad_norm * grad_norm);
    // The 1e-300 floor keeps step directions well-defined under fp underflow.
    if (grad_norm <= std::max(stopping.grad_tol, 1e-300)) break;

    EllipsoidMatrix ellipsoid = EllipsoidMatrix::Uniform(d);
    if (!uniform) {
      history->Update(g);
      ellipsoid = BuildEllipsoid(*history, config.epsilon, config.exponent);
    }
    last_ellipsoid = ellipsoid;

    const std::vector<int> loss_batch = loss_sampler.Next();
    const double loss_before = objective.Loss(result.w, loss_batch);
    result.forward_passes += static_cast<std::int64_t>(loss_batch.size());
    if (!std::isfinite(loss_before)) {
      result.aborted = true;
      result.abort_reason = fmt::format("non-finite loss at iteration {}", t);
      break;
    }

    SubproblemResult sub;
    if (config.model_order == ModelOrder::kSecond) {
      const std::vector<int> hess_batch = hess_sampler.Next();
      // Every product is charged at twice the batch size: one forward and
      // one backward sweep of the R-operator.
      std::int64_t hvp_cost = 0;
      QuadraticModel model;
      model.gradient = g;
      model.constant = loss_before;
      model.hvp = [&](const Eigen::VectorXd& v) {
        hvp_cost += 2 * static_cast<std::int64_t>(hess_batch.size());
        return objective.Hvp(result.w, v, hess_batch);
      };
      sub = SolveSteihaug(model, ellipsoid, delta, config.kappa_kry, max_cg);
      result.backprops += hvp_cost;
    } else {
      // Linear model: closed-form boundary step along -A^{-1} g.
      sub.step = FirstOrderTrStep(g, ellipsoid, delta);
      sub.model_decrease = delta * AInvNorm(g, ellipsoid);
      sub.on_boundary = true;
      sub.termination = SubproblemTermination::kBoundary;
      sub.cg_iterations = 0;
    }

    IterationRecord rec;
    rec.iteration = t;
    rec.backprops = result.backprops;
    rec.epoch_fraction = static_cast<double>(result.backprops) / static_cast<double>(n);
    rec.loss_batch = loss_before;
    rec.grad_norm = grad_norm;
    rec.delta = delta;
    rec.cg_iterations = sub.cg_iterations;
    rec.termination = ToString(sub.termination);
    rec.model_decrease = sub.model_decrease;

    // Degenerate model decrease: no trustworthy ratio exists, treat the step
    // as failed and shrink.
    if (!(sub.model_decrease > 1e-14 * (1.0 + std::abs(loss_before)))) {
      rec.rho = kNan;
      rec.accepted = false;
      rec.outcome = StepOutcome::kUnsuccessful;
      rec.loss_after = kNan;
      delta = delta / config.gamma2;
      result.trace.push_back(std::move(rec));
      continue;
    }

    const double loss_after = objective.Loss(result.w + sub.step, loss_batch);
    result.forward_passes += static_cast<std::int64_t>(loss_batch.size());
    if (!std::isfinite(loss_after)) {
      result.aborted = true;
      result.abort_reason = fmt::format("non-finite trial loss at iteration {}", t);
      result.trace.push_back(std::move(rec));
      break;
    }

    const double rho = ComputeRho(loss_before, loss_after, sub.model_decrease);
    rec.rho = rho;
    rec.loss_after = loss_after;
    rec.accepted = rho >= config.eta1;
    rec.outcome = rho > config.eta2
                      ? StepOutcome::kVerySuccessful
                      : (rho >= config.eta1 ? StepOutcome::kSuccessful
                                            : StepOutcome::kUnsuccessful);

    result.w = AcceptStep(result.w, sub.step, rho, config.eta1);
    delta = UpdateRadius(delta, rho, config);
    result.trace.push_back(std::move(rec));
  }

  if (IsRmsMode(config.ellipsoid_mode) && last_ellipsoid.has_value() &&
      result.max_grad_norm_sq > 0.0) {
    result.certificate =
        CertifyUniformEquivalence(*last_ellipsoid, result.max_grad_norm_sq, config.beta,
                                  history->step_count(), config.epsilon);
  }
  return result;
}

void WriteTraceCsv(std::ostream& os, const std::vector<IterationRecord>& trace) {
  fmt::print(os,
             "iteration,epoch_fraction,backprops,loss_batch,grad_norm,delta,rho,accepted,"
             "outcome,cg_iterations,termination\n");
  for (const IterationRecord& r : trace) {
    fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{}\n", r.iteration, r.epoch_fraction,
               r.backprops, r.loss_batch, r.grad_norm, r.delta, r.rho, r.accepted ? 1 : 0,
               ToString(r.outcome), r.cg_iterations, r.termination);
  }
}

}  // namespace etr
