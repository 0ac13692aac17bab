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

#ifndef ETR_TR_LOOP_HPP_
#define ETR_TR_LOOP_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "etr/ellipsoid.hpp"
#include "etr/objective.hpp"

namespace etr {

// Which running gradient statistic shapes the trust region.
enum class EllipsoidMode { kUniform, kAdaDiag, kRmsDiag, kAdaFull, kRmsFull };

// kFirst drops the curvature term: the model is linear and the subproblem
// has the closed-form boundary solution along -A^{-1} g.
enum class ModelOrder { kFirst, kSecond };

struct TRConfig {
  double delta0 = 1e-4;
  double delta_max = 10.0;
  double eta1 = 1e-4;   // acceptance threshold
  double eta2 = 0.95;   // expansion threshold
  double gamma1 = 1.1;  // expansion factor
  double gamma2 = 1.5;  // shrink factor
  double kappa_kry = 0.1;
  Eigen::Index batch_loss = 512;
  Eigen::Index batch_grad = 512;
  Eigen::Index batch_hess = 512;
  EllipsoidMode ellipsoid_mode = EllipsoidMode::kUniform;
  SpectralExponent exponent = SpectralExponent::kHalf;
  ModelOrder model_order = ModelOrder::kSecond;
  double beta = 0.9;
  double epsilon = 1e-8;
  int max_cg_iterations = 0;  // <= 0 selects min(dim, 250)
  std::uint64_t seed = 0;

  // Throws std::invalid_argument listing every offending field.
  void Validate() const;
};

// Stock parameter set; Rms modes shrink more aggressively (gamma2 = 1.75).
TRConfig TableDefaults(EllipsoidMode mode);

enum class StepOutcome { kVerySuccessful, kSuccessful, kUnsuccessful };

std::string ToString(StepOutcome outcome);

// One row of the optimization trace.  loss_batch is the sampled loss at the
// current iterate, before the step; delta is the radius in effect when the
// step was computed.  rho is NaN when no ratio was formed (degenerate model
// decrease, or methods that do not evaluate one).
struct IterationRecord {
  std::int64_t iteration = 0;
  double epoch_fraction = 0.0;
  std::int64_t backprops = 0;
  double loss_batch = 0.0;
  double grad_norm = 0.0;
  double delta = 0.0;
  double rho = 0.0;
  bool accepted = false;
  StepOutcome outcome = StepOutcome::kUnsuccessful;
  int cg_iterations = 0;
  std::string termination;

  // Diagnostics, not serialized to CSV.
  double model_decrease = 0.0;
  double loss_after = 0.0;
};

struct StoppingCriteria {
  std::int64_t max_iterations = 1000;
  double grad_tol = 0.0;           // stop when ||g|| <= grad_tol
  std::int64_t max_backprops = -1;  // < 0 means unlimited
};

struct RunResult {
  Eigen::VectorXd w;
  std::vector<IterationRecord> trace;
  std::int64_t backprops = 0;       // backward-pass sample count
  std::int64_t forward_passes = 0;  // forward-only sample count (not in backprops)
  double max_grad_norm_sq = 0.0;
  std::optional<EquivalenceCertificate> certificate;
  bool aborted = false;
  std::string abort_reason;
};

// rho = (loss_before - loss_after) / model_decrease; model_decrease must be
// positive.
double ComputeRho(double loss_before, double loss_after, double model_decrease);

// One radius update: grow by gamma1 (capped at delta_max) above eta2, keep
// inside [eta1, eta2], shrink by gamma2 below eta1 (NaN counts as failure).
double UpdateRadius(double delta, double rho, const TRConfig& config);

// w + s if rho >= eta1, otherwise w.
Eigen::VectorXd AcceptStep(const Eigen::VectorXd& w, const Eigen::VectorXd& s, double rho,
                           double eta1);

// Stochastic trust-region descent on the objective, starting from w0.
// Per iteration: independent loss/gradient/curvature batches are drawn, the
// gradient updates the ellipsoid statistic, the subproblem is solved at the
// current radius, and the rho test on the held-out loss batch decides
// acceptance.  Backprop accounting: a gradient on b samples costs b, a
// Hessian-vector product costs 2b, loss evaluations are counted separately
// as forward passes.
RunResult TrMinimize(const Objective& objective, const Eigen::VectorXd& w0,
                     const TRConfig& config, const StoppingCriteria& stopping);

// Writes the trace in CSV form (fixed header, one row per iteration).
void WriteTraceCsv(std::ostream& os, const std::vector<IterationRecord>& trace);

}  // namespace etr

#endif  // ETR_TR_LOOP_HPP_
