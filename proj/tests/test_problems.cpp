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

#include "etr/problems.hpp"

#include <catch2/catch.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "etr/data.hpp"

namespace {

using etr::Activation;
using etr::Dataset;
using etr::FdGradient;
using etr::FdHvp;
using etr::GaussianBlobsSpec;
using etr::LossKind;
using etr::MakeMlp;
using etr::MakeQuadratic;
using etr::MakeSynthetic;
using etr::MlpSpec;
using etr::QuadraticSpec;
using etr::RandomRegressionSpec;
using etr::RotationKind;

const std::vector<int> kSingle = {0};

std::vector<int> Range(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

TEST_CASE("quadratic hessian spectrum matches the spec", "[problems]") {
  SECTION("condition number one is the identity") {
    QuadraticSpec spec;
    spec.dim = 3;
    spec.kappa = 1.0;
    const auto q = MakeQuadratic(spec);
    REQUIRE((q->hessian() - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-14);
  }
  SECTION("axis-aligned eigenvalues are log-spaced endpoints") {
    QuadraticSpec spec;
    spec.dim = 2;
    spec.kappa = 20.0;
    const auto q = MakeQuadratic(spec);
    REQUIRE(q->hessian()(0, 0) == Approx(1.0).epsilon(1e-12));
    REQUIRE(q->hessian()(1, 1) == Approx(20.0).epsilon(1e-12));
    REQUIRE(q->hessian()(0, 1) == 0.0);
  }
  SECTION("random rotation preserves the spectrum") {
    QuadraticSpec spec;
    spec.dim = 2;
    spec.kappa = 20.0;
    spec.rotation = RotationKind::kRandomOrthogonal;
    spec.rotation_seed = 5;
    const auto q = MakeQuadratic(spec);
    REQUIRE((q->hessian() - q->hessian().transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q->hessian());
    REQUIRE(eig.eigenvalues()(0) == Approx(1.0).epsilon(1e-9));
    REQUIRE(eig.eigenvalues()(1) == Approx(20.0).epsilon(1e-9));
    REQUIRE(std::abs(q->hessian()(0, 1)) > 1e-6);  // genuinely rotated
  }
}

TEST_CASE("quadratic objective evaluates its closed form", "[problems]") {
  QuadraticSpec spec;
  spec.dim = 2;
  spec.kappa = 20.0;
  spec.optimum = Eigen::VectorXd::Ones(2);
  const auto q = MakeQuadratic(spec);

  REQUIRE(q->Loss(q->optimum(), kSingle) == 0.0);
  REQUIRE(q->Grad(q->optimum(), kSingle).norm() == 0.0);

  Eigen::VectorXd w(2);
  w << 3.0, 0.0;  // w - w* = (2, -1)
  REQUIRE(q->Loss(w, kSingle) == Approx(0.5 * (4.0 + 20.0)).epsilon(1e-12));
  const Eigen::VectorXd g = q->Grad(w, kSingle);
  REQUIRE(g(0) == Approx(2.0).epsilon(1e-12));
  REQUIRE(g(1) == Approx(-20.0).epsilon(1e-12));

  // The Hessian-vector product is independent of the evaluation point.
  Eigen::VectorXd v(2);
  v << 0.3, -0.7;
  const Eigen::VectorXd h1 = q->Hvp(w, v, kSingle);
  const Eigen::VectorXd h2 = q->Hvp(q->optimum(), v, kSingle);
  REQUIRE((h1 - h2).norm() == 0.0);
  REQUIRE((h1 - q->hessian() * v).norm() <= 1e-14);
}

TEST_CASE("zero weights give the uniform-prediction cross-entropy", "[problems]") {
  GaussianBlobsSpec blobs;
  blobs.classes = 10;
  blobs.dim = 4;
  blobs.n = 40;
  blobs.seed = 7;
  const Dataset data = MakeSynthetic(blobs);

  MlpSpec spec;
  spec.layer_sizes = {4, 10};
  const auto mlp = MakeMlp(spec, data);
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(mlp->dim());
  REQUIRE(mlp->Loss(w, Range(40)) == Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("single linear layer reproduces the hand-computed gradient", "[problems]") {
  Dataset data;
  data.features.resize(1, 2);
  data.features << 0.4, 0.7;
  data.name = "tiny";

  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  spec.loss = LossKind::kSquaredError;
  const auto mlp = MakeMlp(spec, data);
  REQUIRE(mlp->dim() == 6);

  // Parameters pack column-major weights then biases: W = [[1, .5], [-.3, 2]],
  // b = (.1, -.2).  With x = (.4, .7) the residual z - x is (.45, .38).
  Eigen::VectorXd w(6);
  w << 1.0, -0.3, 0.5, 2.0, 0.1, -0.2;
  REQUIRE(mlp->Loss(w, kSingle) == Approx(0.17345).epsilon(1e-12));

  // dL/dW = r x', dL/db = r.
  Eigen::VectorXd expected(6);
  expected << 0.18, 0.152, 0.315, 0.266, 0.45, 0.38;
  const Eigen::VectorXd g = mlp->Grad(w, kSingle);
  REQUIRE((g - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("initial parameters are seeded and keep biases at zero", "[problems]") {
  Dataset data;
  data.features.resize(1, 2);
  data.features << 0.4, 0.7;

  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  spec.loss = LossKind::kSquaredError;
  const auto mlp = MakeMlp(spec, data);

  const Eigen::VectorXd w1 = mlp->InitialParameters(42);
  const Eigen::VectorXd w2 = mlp->InitialParameters(42);
  REQUIRE((w1 - w2).norm() == 0.0);
  REQUIRE((w1 - mlp->InitialParameters(43)).norm() > 0.0);
  const double limit = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(std::abs(w1(i)) <= limit);
  }
  REQUIRE(w1(4) == 0.0);
  REQUIRE(w1(5) == 0.0);
}

TEST_CASE("analytic derivatives match central differences", "[problems]") {
  struct Case {
    MlpSpec spec;
    Dataset data;
    std::vector<int> batch;
  };
  std::vector<Case> cases;

  {
    GaussianBlobsSpec blobs;
    blobs.classes = 3;
    blobs.dim = 4;
    blobs.n = 12;
    blobs.seed = 3;
    Case c;
    c.spec.layer_sizes = {4, 6, 3};
    c.spec.activation = Activation::kTanh;
    c.spec.loss = LossKind::kCrossEntropy;
    c.data = MakeSynthetic(blobs);
    c.batch = Range(12);
    cases.push_back(std::move(c));
  }
  {
    RandomRegressionSpec reg;
    reg.dim = 5;
    reg.n = 8;
    reg.seed = 5;
    Case c;
    c.spec.layer_sizes = {5, 4, 5};
    c.spec.activation = Activation::kSigmoid;
    c.spec.loss = LossKind::kPixelBce;
    c.data = MakeSynthetic(reg);
    c.batch = Range(8);
    cases.push_back(std::move(c));
  }
  {
    RandomRegressionSpec reg;
    reg.dim = 5;
    reg.n = 8;
    reg.seed = 9;
    Case c;
    c.spec.layer_sizes = {5, 3, 5};
    c.spec.activation = Activation::kTanh;
    c.spec.loss = LossKind::kSquaredError;
    c.data = MakeSynthetic(reg);
    c.batch = Range(8);
    cases.push_back(std::move(c));
  }

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  for (const Case& c : cases) {
    const auto mlp = MakeMlp(c.spec, c.data);
    const Eigen::VectorXd w = mlp->InitialParameters(11);

    const Eigen::VectorXd g = mlp->Grad(w, c.batch);
    const Eigen::VectorXd g_fd = FdGradient(*mlp, w, c.batch);
    REQUIRE((g - g_fd).lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + g.lpNorm<Eigen::Infinity>()));

    Eigen::VectorXd v =
        Eigen::VectorXd::NullaryExpr(mlp->dim(), [&](Eigen::Index) { return normal(rng); });
    v.normalize();
    const Eigen::VectorXd hv = mlp->Hvp(w, v, c.batch);
    const Eigen::VectorXd hv_fd = FdHvp(*mlp, w, v, c.batch);
    REQUIRE((hv - hv_fd).lpNorm<Eigen::Infinity>() <=
            1e-5 * (1.0 + hv.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("hessian-vector products are linear and symmetric", "[problems]") {
  GaussianBlobsSpec blobs;
  blobs.classes = 3;
  blobs.dim = 4;
  blobs.n = 10;
  blobs.seed = 17;
  MlpSpec spec;
  spec.layer_sizes = {4, 5, 3};
  const auto mlp = MakeMlp(spec, MakeSynthetic(blobs));
  const Eigen::VectorXd w = mlp->InitialParameters(2);
  const auto batch = Range(10);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  const auto draw = [&] {
    return Eigen::VectorXd::NullaryExpr(mlp->dim(), [&](Eigen::Index) { return normal(rng); })
        .eval();
  };
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd u = draw();
    const Eigen::VectorXd v = draw();
    const Eigen::VectorXd lhs = mlp->Hvp(w, u + 2.0 * v, batch);
    const Eigen::VectorXd rhs = mlp->Hvp(w, u, batch) + 2.0 * mlp->Hvp(w, v, batch);
    REQUIRE((lhs - rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
    const double uhv = u.dot(mlp->Hvp(w, v, batch));
    const double vhu = v.dot(mlp->Hvp(w, u, batch));
    REQUIRE(uhv == Approx(vhu).epsilon(1e-8).margin(1e-12));
  }
}

TEST_CASE("batch losses and gradients decompose as size-weighted means", "[problems]") {
  GaussianBlobsSpec blobs;
  blobs.classes = 2;
  blobs.dim = 3;
  blobs.n = 8;
  blobs.seed = 21;
  MlpSpec spec;
  spec.layer_sizes = {3, 4, 2};
  const auto mlp = MakeMlp(spec, MakeSynthetic(blobs));
  const Eigen::VectorXd w = mlp->InitialParameters(6);

  const std::vector<int> b1 = {0, 1, 2};
  const std::vector<int> b2 = {3, 4, 5, 6, 7};
  const std::vector<int> all = Range(8);

  const double combined = (3.0 * mlp->Loss(w, b1) + 5.0 * mlp->Loss(w, b2)) / 8.0;
  REQUIRE(mlp->Loss(w, all) == Approx(combined).epsilon(1e-12));

  const Eigen::VectorXd g_combined =
      (3.0 * mlp->Grad(w, b1) + 5.0 * mlp->Grad(w, b2)) / 8.0;
  REQUIRE((mlp->Grad(w, all) - g_combined).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("accuracy counts argmax hits on the cross-entropy head", "[problems]") {
  Dataset data;
  data.features.resize(2, 2);
  data.features << 1.0, 0.0, 0.0, 1.0;
  data.labels.resize(2);
  data.labels << 0, 1;

  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  const auto mlp = MakeMlp(spec, data);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(6);
  w(0) = 1.0;  // W = I column-major, b = 0: logits equal the features
  w(3) = 1.0;
  REQUIRE(mlp->Accuracy(w, Range(2)) == 1.0);

  Eigen::VectorXd flipped = Eigen::VectorXd::Zero(6);
  flipped(1) = 1.0;  // W swaps the coordinates: every sample is missed
  flipped(2) = 1.0;
  REQUIRE(mlp->Accuracy(flipped, Range(2)) == 0.0);

  MlpSpec se = spec;
  se.loss = LossKind::kSquaredError;
  const auto wrong_head = MakeMlp(se, data);
  REQUIRE_THROWS_AS(wrong_head->Accuracy(w, Range(2)), std::logic_error);
}

TEST_CASE("finite-difference hvp is exact on quadratics", "[problems]") {
  QuadraticSpec spec;
  spec.dim = 4;
  spec.kappa = 10.0;
  spec.rotation = RotationKind::kRandomOrthogonal;
  spec.rotation_seed = 3;
  const auto q = MakeQuadratic(spec);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const Eigen::VectorXd w =
      Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return normal(rng); });
  const Eigen::VectorXd v =
      Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return normal(rng); });
  const Eigen::VectorXd fd = FdHvp(*q, w, v, kSingle);
  REQUIRE((fd - q->hessian() * v).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("mlp construction validates shapes", "[problems]") {
  Dataset data;
  data.features.resize(1, 3);
  data.features << 0.1, 0.2, 0.3;

  MlpSpec spec;
  spec.layer_sizes = {3, 2};  // reconstruction losses need out == feature dim
  spec.loss = LossKind::kSquaredError;
  REQUIRE_THROWS_AS(MakeMlp(spec, data), std::invalid_argument);

  MlpSpec ce;
  ce.layer_sizes = {3, 2};
  ce.loss = LossKind::kCrossEntropy;
  REQUIRE_THROWS_AS(MakeMlp(ce, data), std::invalid_argument);  // unlabeled data

  MlpSpec short_spec;
  short_spec.layer_sizes = {3};
  REQUIRE_THROWS_AS(MakeMlp(short_spec, data), std::invalid_argument);
}

}  // namespace
