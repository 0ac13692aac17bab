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

// Gradient and Hessian-vector product throughput on the desk-scale network.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "etr/data.hpp"
#include "etr/problems.hpp"

namespace {

struct Setup {
  std::unique_ptr<etr::MlpObjective> objective;
  Eigen::VectorXd w;
  std::vector<int> batch;
};

Setup MakeSetup(int batch_size) {
  etr::GaussianBlobsSpec blobs;
  blobs.classes = 10;
  blobs.dim = 784;
  blobs.sep = 4.0;
  blobs.n = 2048;
  blobs.seed = 3;
  const etr::Dataset data = MakeSynthetic(blobs);
  etr::MlpSpec spec;
  spec.layer_sizes = {784, 128, 10};
  spec.activation = etr::Activation::kTanh;
  spec.loss = etr::LossKind::kCrossEntropy;
  spec.init_seed = 5;
  Setup s;
  s.objective = MakeMlp(spec, data);
  s.w = s.objective->InitialParameters();
  s.batch.resize(batch_size);
  std::iota(s.batch.begin(), s.batch.end(), 0);
  return s;
}

void BM_MlpGrad(benchmark::State& state) {
  const Setup s = MakeSetup(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Eigen::VectorXd g = s.objective->Grad(s.w, s.batch);
    benchmark::DoNotOptimize(g.squaredNorm());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpGrad)->Arg(32)->Arg(128)->Arg(512);

void BM_MlpHvp(benchmark::State& state) {
  const Setup s = MakeSetup(static_cast<int>(state.range(0)));
  const Eigen::VectorXd v = Eigen::VectorXd::Constant(s.w.size(), 0.01);
  for (auto _ : state) {
    Eigen::VectorXd hv = s.objective->Hvp(s.w, v, s.batch);
    benchmark::DoNotOptimize(hv.squaredNorm());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpHvp)->Arg(32)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
