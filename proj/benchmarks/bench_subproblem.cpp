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

// Subproblem solver throughput at several dimensions and geometries.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include <random>

#include "etr/ellipsoid.hpp"
#include "etr/subproblem.hpp"

namespace {

struct Instance {
  Eigen::MatrixXd hessian;
  etr::QuadraticModel model;
  etr::EllipsoidMatrix geometry;
  double delta = 1.0;
};

Instance MakeInstance(Eigen::Index dim, bool diagonal_geometry) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) m(i, j) = normal(rng);
  }
  // Indefinite symmetric Hessian so negative-curvature paths get exercised.
  Eigen::MatrixXd hessian = 0.5 * (m + m.transpose());
  etr::QuadraticModel model;
  model.gradient =
      Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return normal(rng); });
  model.hvp = [hessian](const Eigen::VectorXd& v) { return Eigen::VectorXd(hessian * v); };
  Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(
      dim, [&](Eigen::Index) { return 0.1 + std::abs(normal(rng)); });
  etr::EllipsoidMatrix geometry = diagonal_geometry ? etr::EllipsoidMatrix::Diagonal(d)
                                                    : etr::EllipsoidMatrix::Uniform(dim);
  return Instance{std::move(hessian), std::move(model), std::move(geometry), 1.0};
}

void BM_Steihaug(benchmark::State& state) {
  const Instance inst = MakeInstance(state.range(0), state.range(1) != 0);
  for (auto _ : state) {
    auto result = etr::SolveSteihaug(inst.model, inst.geometry, inst.delta, 0.1);
    benchmark::DoNotOptimize(result.model_decrease);
  }
}
BENCHMARK(BM_Steihaug)
    ->Args({50, 0})
    ->Args({50, 1})
    ->Args({500, 0})
    ->Args({500, 1})
    ->Args({5000, 1});

void BM_SolveExact(benchmark::State& state) {
  const Instance inst = MakeInstance(state.range(0), state.range(1) != 0);
  for (auto _ : state) {
    auto result = etr::SolveExact(inst.hessian, inst.model.gradient, inst.geometry, inst.delta);
    benchmark::DoNotOptimize(result.model_decrease);
  }
}
BENCHMARK(BM_SolveExact)->Args({50, 0})->Args({50, 1})->Args({200, 1});

}  // namespace

BENCHMARK_MAIN();
