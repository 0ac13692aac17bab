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

#ifndef ETR_FIRST_ORDER_HPP_
#define ETR_FIRST_ORDER_HPP_

#include <Eigen/Dense>

#include <cstdint>

#include "etr/ellipsoid.hpp"
#include "etr/objective.hpp"
#include "etr/tr_loop.hpp"

namespace etr {

enum class FirstOrderMethod { kSgd, kAdagrad, kRmsprop };

struct FirstOrderConfig {
  FirstOrderMethod method = FirstOrderMethod::kSgd;
  double eta = 0.1;
  double beta = 0.9;      // Rmsprop decay
  double epsilon = 1e-8;  // accumulator floor
  bool full_matrix = false;  // dense accumulator instead of coordinate-wise
  Eigen::Index batch_size = 32;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct FirstOrderStepResult {
  Eigen::VectorXd step;
  bool zero_gradient = false;
};

// The preconditioned descent step -eta A^{-1} g.
FirstOrderStepResult PreconditionedStep(const Eigen::VectorXd& g, const EllipsoidMatrix& a,
                                        double eta);

// Minimizer of the linear model g's over the ellipsoid ||s||_A <= radius:
// the boundary point -radius / ||g||_{A^{-1}} * A^{-1} g.  Throws on g = 0,
// where the linear model has no unique boundary minimizer.
Eigen::VectorXd FirstOrderTrStep(const Eigen::VectorXd& g, const EllipsoidMatrix& a,
                                 double radius);

// Checks the KKT conditions certifying s as the global minimizer of the
// linear model over ||s||_A <= eta ||g||_{A^{-1}}: stationarity
// g + lambda A s = 0 with multiplier lambda = ||g||_{A^{-1}} / ||s||_A,
// primal feasibility, complementary slackness, and dual feasibility, all to
// relative tolerance tol.
bool VerifyKkt(const Eigen::VectorXd& s, const Eigen::VectorXd& g, const EllipsoidMatrix& a,
               double eta, double tol);

// Constant-stepsize first-order descent sharing the trust-region trace
// format.  Every step is applied (accepted = true); rho is NaN since no
// model ratio exists; the delta column reports the implied trust radius
// eta ||g||_{A^{-1}} of the step taken.
RunResult FirstOrderRun(const Objective& objective, const Eigen::VectorXd& w0,
                        const FirstOrderConfig& config, const StoppingCriteria& stopping);

}  // namespace etr

#endif  // ETR_FIRST_ORDER_HPP_
