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

#ifndef ETR_EXPERIMENT_HPP_
#define ETR_EXPERIMENT_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "etr/data.hpp"
#include "etr/first_order.hpp"
#include "etr/problems.hpp"
#include "etr/tr_loop.hpp"

namespace etr {

// Dataset sources for network problems.
struct IdxPairSpec {
  std::string images;
  std::string labels;  // may be empty for reconstruction losses
  std::string dir;     // overrides the resolved data directory
  Eigen::Index max_samples = -1;
};
using DatasetSpec = std::variant<IdxPairSpec, GaussianBlobsSpec, RandomRegressionSpec>;

struct QuadraticProblemConfig {
  QuadraticSpec spec;
  double init_radius = 1.0;  // w0 = optimum + init_radius * random unit vector
};

struct MlpProblemConfig {
  MlpSpec mlp;
  DatasetSpec dataset;
};

using ProblemConfig = std::variant<QuadraticProblemConfig, MlpProblemConfig>;

using OptimizerConfig = std::variant<TRConfig, FirstOrderConfig>;

struct MethodSpec {
  std::string name;
  OptimizerConfig optimizer;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ProblemConfig problem;
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds;  // one run per (method, seed)
  StoppingCriteria stopping;
  std::string output_dir = "out";
  int checkpoints = 100;  // aggregation grid resolution

  void Validate() const;
};

// Parses a JSON experiment description; also accepts a previously written
// metadata.json (the config is taken from its "config" key), so a finished
// experiment can be re-run from its own output.  Throws
// std::invalid_argument naming the offending field.
ExperimentConfig ParseExperimentConfig(const std::string& json_text);

// Serializes the fully resolved config (all defaults filled in).
std::string ExperimentConfigToJson(const ExperimentConfig& config);

// Trace file name for one run: <experiment>__<method>__seed<k>.csv.
std::string TraceFileName(const std::string& experiment, const std::string& method,
                          std::uint64_t seed);

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  std::string trace_file;
  std::int64_t iterations = 0;
  std::int64_t backprops = 0;
  double final_loss = 0.0;
  std::optional<EquivalenceCertificate> certificate;
  bool aborted = false;
};

struct ExperimentSummary {
  std::string output_dir;
  std::vector<RunRecord> runs;
  std::string aggregate_file;
  std::string metadata_file;
};

// Runs every (method, seed) combination, writes one trace CSV per run plus
// aggregate.csv (per-method mean log10 loss with 95% confidence bands on a
// shared log-spaced backprop grid) and metadata.json (resolved config, run
// inventory, conventions).  All files are written atomically
// (temp + rename).  data_dir overrides ETR_DATA_DIR for IDX datasets.
ExperimentSummary RunExperiment(const ExperimentConfig& config,
                                const std::string& data_dir = "");

// ---------------------------------------------------------------------------
// Deterministic quadratic benchmark: median iterations to a target
// suboptimality across seeds, with the stepsize (constant-step methods) or
// initial radius (trust-region methods) tuned on a log grid.

struct QuadraticStudyConfig {
  double kappa = 20.0;
  Eigen::Index dim = 2;
  bool rotate = false;
  int seeds = 30;
  std::int64_t max_iterations = 2000;
  double target_log10_drop = -6.0;  // declare success at log10(L/L0) <= this
  std::vector<std::string> methods;
  std::vector<double> tuning_grid;  // defaults to 7 points log-spaced in [1e-4, 1]
  double init_radius = 1.0;
  std::uint64_t base_seed = 1234;
};

struct QuadraticStudyResult {
  std::string method;
  double tuned_value = 0.0;        // selected stepsize or initial radius
  double median_iterations = 0.0;  // capped at max_iterations when unreached
  double median_final_log10_drop = 0.0;
  int reached_target = 0;  // seeds that hit the target
};

// Known method presets: gd, adagrad, adagrad_full, rmsprop, tr1_uni,
// tr1_ada, tr1_rms, tr2_uni, tr2_ada, tr2_rms, tr2_ada_full, tr2_rms_full.
std::vector<std::string> QuadraticStudyMethods();

std::vector<QuadraticStudyResult> RunQuadraticStudy(const QuadraticStudyConfig& config);

std::string StudyResultsToJson(const std::vector<QuadraticStudyResult>& results);

}  // namespace etr

#endif  // ETR_EXPERIMENT_HPP_
