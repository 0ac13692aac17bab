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

#include <catch2/catch.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "etr/ellipsoid.hpp"
#include "etr/problems.hpp"
#include "etr/tr_loop.hpp"

namespace {

using etr::AInvNorm;
using etr::ANorm;
using etr::EllipsoidMatrix;
using etr::FirstOrderConfig;
using etr::FirstOrderMethod;
using etr::FirstOrderRun;
using etr::FirstOrderTrStep;
using etr::MakeQuadratic;
using etr::PreconditionedStep;
using etr::QuadraticSpec;
using etr::RunResult;
using etr::StoppingCriteria;
using etr::VerifyKkt;

Eigen::VectorXd Vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

TEST_CASE("preconditioned step is -eta a-inverse g", "[firstorder]") {
  SECTION("identity geometry reduces to plain gradient descent") {
    const Eigen::VectorXd g = Vec2(3.0, 4.0);
    const auto res = PreconditionedStep(g, EllipsoidMatrix::Uniform(2), 0.1);
    REQUIRE_FALSE(res.zero_gradient);
    // Compare coordinates exactly; a fused norm-of-difference would see the
    // contraction residual of -0.1 * g instead of zero.
    REQUIRE(res.step(0) == -0.1 * 3.0);
    REQUIRE(res.step(1) == -0.1 * 4.0);
  }
  SECTION("diagonal geometry rescales coordinates") {
    const auto res =
        PreconditionedStep(Vec2(8.0, 2.0), EllipsoidMatrix::Diagonal(Vec2(4.0, 1.0)), 1.0);
    REQUIRE(res.step(0) == -2.0);
    REQUIRE(res.step(1) == -2.0);
  }
  SECTION("zero gradient is flagged") {
    const auto res = PreconditionedStep(Eigen::VectorXd::Zero(3), EllipsoidMatrix::Uniform(3), 0.1);
    REQUIRE(res.zero_gradient);
    REQUIRE(res.step.norm() == 0.0);
  }
  SECTION("bad inputs throw") {
    REQUIRE_THROWS_AS(PreconditionedStep(Vec2(1.0, 1.0), EllipsoidMatrix::Uniform(3), 0.1),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(PreconditionedStep(Vec2(1.0, 1.0), EllipsoidMatrix::Uniform(2), -1.0),
                      std::invalid_argument);
  }
}

TEST_CASE("the preconditioned step has a-norm eta times the dual norm", "[firstorder]") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.5, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 4;
    const Eigen::VectorXd g =
        Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) { return normal(rng); });
    EllipsoidMatrix a = EllipsoidMatrix::Diagonal(
        Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) { return uni(rng); }));
    if (trial % 2 == 1) {
      Eigen::MatrixXd f = Eigen::MatrixXd::NullaryExpr(
          d, d, [&](Eigen::Index, Eigen::Index) { return 0.3 * normal(rng); });
      a = EllipsoidMatrix::Full(f * f.transpose() + Eigen::MatrixXd::Identity(d, d));
    }
    const double eta = uni(rng);
    const auto res = PreconditionedStep(g, a, eta);
    REQUIRE(ANorm(res.step, a) == Approx(eta * AInvNorm(g, a)).epsilon(1e-10));

    // The same point solves the linear trust-region subproblem at the
    // implied radius.
    const Eigen::VectorXd tr = FirstOrderTrStep(g, a, eta * AInvNorm(g, a));
    REQUIRE((res.step - tr).norm() <= 1e-10 * (1.0 + tr.norm()));
  }
}

TEST_CASE("linear model minimizer sits on the boundary along -a-inverse g", "[firstorder]") {
  SECTION("identity geometry normalizes the gradient") {
    const Eigen::VectorXd s = FirstOrderTrStep(Vec2(3.0, 4.0), EllipsoidMatrix::Uniform(2), 1.0);
    REQUIRE(s(0) == Approx(-0.6).epsilon(1e-12));
    REQUIRE(s(1) == Approx(-0.8).epsilon(1e-12));
  }
  SECTION("the boundary is attained exactly") {
    const EllipsoidMatrix a = EllipsoidMatrix::Diagonal(Vec2(0.25, 9.0));
    const Eigen::VectorXd s = FirstOrderTrStep(Vec2(1.0, -2.0), a, 0.7);
    REQUIRE(ANorm(s, a) == Approx(0.7).epsilon(1e-10));
  }
  SECTION("positive gradient scaling leaves the step unchanged") {
    const EllipsoidMatrix a = EllipsoidMatrix::Diagonal(Vec2(0.25, 9.0));
    const Eigen::VectorXd g = Vec2(1.0, -2.0);
    const Eigen::VectorXd s1 = FirstOrderTrStep(g, a, 0.7);
    const Eigen::VectorXd s2 = FirstOrderTrStep(3.0 * g, a, 0.7);
    REQUIRE((s1 - s2).norm() <= 1e-12);
  }
  SECTION("zero gradient and bad radius throw") {
    REQUIRE_THROWS_AS(FirstOrderTrStep(Eigen::VectorXd::Zero(2), EllipsoidMatrix::Uniform(2), 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(FirstOrderTrStep(Vec2(1.0, 1.0), EllipsoidMatrix::Uniform(2), 0.0),
                      std::invalid_argument);
  }
}

TEST_CASE("no feasible point beats the linear-model minimizer", "[firstorder]") {
  Eigen::VectorXd diag(3);
  diag << 0.5, 2.0, 1.0;
  const EllipsoidMatrix a = EllipsoidMatrix::Diagonal(diag);
  Eigen::VectorXd g(3);
  g << 1.0, -0.5, 2.0;
  const double radius = 0.8;
  const Eigen::VectorXd best = FirstOrderTrStep(g, a, radius);
  const double best_value = g.dot(best);

  std::mt19937_64 rng(2718);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    // Uniform draw from the ellipsoidal ball via the spherical transform.
    Eigen::VectorXd y =
        Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return normal(rng); });
    y *= radius * std::cbrt(uni(rng)) / y.norm();
    const Eigen::VectorXd s = a.SolveSqrt(y);
    REQUIRE(g.dot(s) >= best_value - 1e-9 * (1.0 + std::abs(best_value)));
  }
}

TEST_CASE("kkt verification accepts the step and rejects impostors", "[firstorder]") {
  const EllipsoidMatrix a = EllipsoidMatrix::Diagonal(Vec2(4.0, 1.0));
  const Eigen::VectorXd g = Vec2(1.0, 1.0);
  const double eta = 0.7;

  const auto step = PreconditionedStep(g, a, eta);
  REQUIRE(VerifyKkt(step.step, g, a, eta, 1e-8));

  // Unpreconditioned descent violates stationarity under this geometry.
  REQUIRE_FALSE(VerifyKkt((-eta * g).eval(), g, a, eta, 1e-8));
  // Interior points violate complementary slackness.
  REQUIRE_FALSE(VerifyKkt((0.5 * step.step).eval(), g, a, eta, 1e-8));
  // Wrong sign maximizes instead.
  REQUIRE_FALSE(VerifyKkt((-step.step).eval(), g, a, eta, 1e-8));

  REQUIRE_THROWS_AS(VerifyKkt(step.step, Eigen::VectorXd::Zero(2), a, eta, 1e-8),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(VerifyKkt(step.step, g, a, 0.0, 1e-8), std::invalid_argument);
}

TEST_CASE("a zero learning rate leaves the iterate fixed", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 4.0;
  const auto objective = MakeQuadratic(spec);
  FirstOrderConfig config;
  config.eta = 0.0;
  StoppingCriteria stopping;
  stopping.max_iterations = 5;

  Eigen::VectorXd w0 = Vec2(1.0, -1.0);
  const RunResult result = FirstOrderRun(*objective, w0, config, stopping);
  REQUIRE((result.w - w0).norm() == 0.0);
  REQUIRE(result.trace.size() == 5);
  for (const auto& rec : result.trace) {
    REQUIRE(std::isnan(rec.rho));
    REQUIRE(rec.accepted);
    REQUIRE(rec.delta == 0.0);
  }
}

TEST_CASE("sgd on the unit quadratic contracts geometrically", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 1.0;
  const auto objective = MakeQuadratic(spec);
  FirstOrderConfig config;
  config.eta = 0.5;
  config.batch_size = 1;
  StoppingCriteria stopping;
  stopping.max_iterations = 100;
  stopping.grad_tol = 1e-8;

  Eigen::VectorXd w0 = Vec2(1.0, 1.0);
  const RunResult result = FirstOrderRun(*objective, w0, config, stopping);
  REQUIRE_FALSE(result.aborted);
  REQUIRE(result.trace.size() < 100);  // converged, not exhausted
  REQUIRE(objective->Grad(result.w, std::vector<int>{0}).norm() <= 1e-8);

  double prev_norm = std::numeric_limits<double>::infinity();
  for (const auto& rec : result.trace) {
    REQUIRE(rec.grad_norm < prev_norm);
    prev_norm = rec.grad_norm;
    REQUIRE(rec.cg_iterations == 0);
    REQUIRE(rec.termination == "boundary");
    // Uniform geometry: the implied radius is eta ||g||.
    REQUIRE(rec.delta == Approx(config.eta * rec.grad_norm).epsilon(1e-12));
  }
  // One backprop per recorded step plus the draw that proved convergence.
  REQUIRE(result.backprops == static_cast<std::int64_t>(result.trace.size()) + 1);
  REQUIRE(result.forward_passes == static_cast<std::int64_t>(result.trace.size()));
}

TEST_CASE("adagrad's first step is sign descent up to the floor", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 1.0;
  spec.optimum = Vec2(-3.0, 2.0);  // gradient at zero is (3, -2)
  const auto objective = MakeQuadratic(spec);

  FirstOrderConfig config;
  config.method = FirstOrderMethod::kAdagrad;
  config.eta = 0.1;
  StoppingCriteria stopping;
  stopping.max_iterations = 1;

  const RunResult result = FirstOrderRun(*objective, Eigen::VectorXd::Zero(2), config, stopping);
  // step_i = -eta g_i / sqrt(g_i^2 + eps) ~ -eta sign(g_i).
  REQUIRE(result.w(0) == Approx(-0.1).epsilon(1e-6));
  REQUIRE(result.w(1) == Approx(0.1).epsilon(1e-6));
}

TEST_CASE("rmsprop runs carry a spectral certificate", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 2.0;
  const auto objective = MakeQuadratic(spec);
  StoppingCriteria stopping;
  stopping.max_iterations = 20;
  Eigen::VectorXd w0 = Vec2(3.0, 1.0);

  FirstOrderConfig rms;
  rms.method = FirstOrderMethod::kRmsprop;
  rms.eta = 0.05;
  const RunResult rms_run = FirstOrderRun(*objective, w0, rms, stopping);
  REQUIRE(rms_run.certificate.has_value());
  REQUIRE(rms_run.certificate->valid);
  REQUIRE(rms_run.certificate->lambda_min_bound == Approx(1e-4));  // sqrt(epsilon)

  FirstOrderConfig ada;
  ada.method = FirstOrderMethod::kAdagrad;
  REQUIRE_FALSE(FirstOrderRun(*objective, w0, ada, stopping).certificate.has_value());

  FirstOrderConfig sgd;
  REQUIRE_FALSE(FirstOrderRun(*objective, w0, sgd, stopping).certificate.has_value());
}

TEST_CASE("first-order runs are reproducible and validated", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 3.0;
  const auto objective = MakeQuadratic(spec);
  FirstOrderConfig config;
  config.method = FirstOrderMethod::kRmsprop;
  config.eta = 0.01;
  config.seed = 7;
  StoppingCriteria stopping;
  stopping.max_iterations = 25;
  Eigen::VectorXd w0 = Vec2(2.0, -1.0);

  const RunResult a = FirstOrderRun(*objective, w0, config, stopping);
  const RunResult b = FirstOrderRun(*objective, w0, config, stopping);
  REQUIRE((a.w - b.w).norm() == 0.0);
  std::ostringstream csv_a;
  std::ostringstream csv_b;
  etr::WriteTraceCsv(csv_a, a.trace);
  etr::WriteTraceCsv(csv_b, b.trace);
  REQUIRE(csv_a.str() == csv_b.str());

  REQUIRE_THROWS_AS(FirstOrderRun(*objective, Eigen::VectorXd::Zero(3), config, stopping),
                    std::invalid_argument);
  FirstOrderConfig bad = config;
  bad.eta = -0.1;
  REQUIRE_THROWS_AS(FirstOrderRun(*objective, w0, bad, stopping), std::invalid_argument);
  FirstOrderConfig bad_batch = config;
  bad_batch.batch_size = 0;
  REQUIRE_THROWS_AS(FirstOrderRun(*objective, w0, bad_batch, stopping), std::invalid_argument);
}

TEST_CASE("divergence to non-finite iterates aborts the run", "[firstorder]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 1.0;
  const auto objective = MakeQuadratic(spec);
  FirstOrderConfig config;
  config.eta = 1e10;
  StoppingCriteria stopping;
  stopping.max_iterations = 10;

  Eigen::VectorXd w0(2);
  w0 << 1e300, 0.0;
  const RunResult result = FirstOrderRun(*objective, w0, config, stopping);
  REQUIRE(result.aborted);
  REQUIRE(result.abort_reason == "non-finite iterate after iteration 0");
  REQUIRE(result.trace.size() == 1);
}

}  // namespace
