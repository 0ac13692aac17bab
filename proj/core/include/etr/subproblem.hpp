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

#ifndef ETR_SUBPROBLEM_HPP_
#define ETR_SUBPROBLEM_HPP_

#include <Eigen/Dense>

#include <functional>
#include <string>

#include "etr/ellipsoid.hpp"

namespace etr {

// Quadratic model m(s) = constant + g's + 1/2 s'Bs with B accessed only
// through Hessian-vector products.
struct QuadraticModel {
  Eigen::VectorXd gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hvp;
  double constant = 0.0;
};

enum class SubproblemTermination {
  kInterior,           // residual driven to (numerical) zero inside the region
  kBoundary,           // a CG step crossed the boundary
  kNegativeCurvature,  // followed a direction of non-positive curvature out
  kMaxIter,            // iteration cap reached
  kResidualTol,        // relative residual dropped below the Krylov tolerance
};

std::string ToString(SubproblemTermination t);

struct SubproblemResult {
  Eigen::VectorXd step;
  double model_decrease = 0.0;  // m(0) - m(step), >= 0
  bool on_boundary = false;
  SubproblemTermination termination = SubproblemTermination::kInterior;
  int cg_iterations = 0;
};

// Default CG iteration cap: min(dim, 250).
int DefaultMaxCgIterations(Eigen::Index dim);

// Steihaug-Toint truncated conjugate gradient for
//   min_s g's + 1/2 s'Bs   s.t.  ||s||_A <= delta.
// Internally works on the sphere via the change of variables y = A^{1/2} s.
// kappa_kry is the relative residual tolerance; max_iter <= 0 selects the
// default cap.  Throws std::runtime_error naming the iteration if non-finite
// values appear, std::invalid_argument on bad inputs.
SubproblemResult SolveSteihaug(const QuadraticModel& model, const EllipsoidMatrix& geometry,
                               double delta, double kappa_kry, int max_iter = 0);

// Global solution of the same subproblem for a dense symmetric Hessian, via
// eigendecomposition and a safeguarded secular-equation bisection, including
// the hard case.  Intended as a reference for moderate dimensions (<= 512).
SubproblemResult SolveExact(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& gradient,
                            const EllipsoidMatrix& geometry, double delta);

// Model decrease of the Cauchy point: the minimizer of the model along the
// preconditioned steepest-descent direction -A^{-1} g within the region.
// Zero gradient yields zero.
double CauchyDecrease(const QuadraticModel& model, const EllipsoidMatrix& geometry, double delta);

}  // namespace etr

#endif  // ETR_SUBPROBLEM_HPP_
