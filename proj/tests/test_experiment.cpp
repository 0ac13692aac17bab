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

#include "etr/experiment.hpp"

#include <catch2/catch.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

using etr::EllipsoidMode;
using etr::ExperimentConfig;
using etr::ExperimentConfigToJson;
using etr::FirstOrderConfig;
using etr::FirstOrderMethod;
using etr::ModelOrder;
using etr::ParseExperimentConfig;
using etr::QuadraticProblemConfig;
using etr::QuadraticStudyConfig;
using etr::RunExperiment;
using etr::RunQuadraticStudy;
using etr::SpectralExponent;
using etr::TraceFileName;
using etr::TRConfig;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* leaf) {
    path = fs::temp_directory_path() / leaf;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string ReadFile(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> ParseCsv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::istringstream cs(line);
    std::string cell;
    while (std::getline(cs, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

constexpr const char* kMinimalConfig = R"({
  "name": "mini",
  "problem": {"kind": "quadratic", "dim": 2, "kappa": 2.0},
  "methods": [{"name": "tr"}],
  "seeds": [1, 2],
  "output_dir": "unused"
})";

TEST_CASE("minimal config parses with stock defaults", "[experiment]") {
  const ExperimentConfig cfg = ParseExperimentConfig(kMinimalConfig);
  REQUIRE(cfg.name == "mini");
  REQUIRE(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  REQUIRE(cfg.checkpoints == 100);
  REQUIRE(cfg.stopping.max_iterations == 1000);
  REQUIRE(cfg.stopping.grad_tol == 0.0);
  REQUIRE(cfg.stopping.max_backprops == -1);

  const auto& quad = std::get<QuadraticProblemConfig>(cfg.problem);
  REQUIRE(quad.spec.dim == 2);
  REQUIRE(quad.spec.kappa == 2.0);
  REQUIRE(quad.init_radius == 1.0);

  REQUIRE(cfg.methods.size() == 1);
  const auto& tr = std::get<TRConfig>(cfg.methods[0].optimizer);
  REQUIRE(tr.ellipsoid_mode == EllipsoidMode::kUniform);
  REQUIRE(tr.delta0 == 1e-4);
  REQUIRE(tr.gamma2 == 1.5);
  REQUIRE(tr.batch_grad == 512);
}

TEST_CASE("method fields map onto the optimizer configs", "[experiment]") {
  const ExperimentConfig cfg = ParseExperimentConfig(R"({
    "name": "map",
    "problem": {"kind": "quadratic"},
    "methods": [
      {"name": "rms1", "kind": "tr", "ellipsoid": "rms_diag", "model_order": 1,
       "exponent": "one", "batch_size": 16, "delta0": 0.5},
      {"name": "ada", "kind": "adagrad", "eta": 0.3, "full_matrix": true, "batch_size": 64}
    ],
    "seeds": [7],
    "output_dir": "unused"
  })");

  const auto& tr = std::get<TRConfig>(cfg.methods[0].optimizer);
  REQUIRE(tr.ellipsoid_mode == EllipsoidMode::kRmsDiag);
  REQUIRE(tr.gamma2 == 1.75);  // rms default survives when not overridden
  REQUIRE(tr.model_order == ModelOrder::kFirst);
  REQUIRE(tr.exponent == SpectralExponent::kOne);
  REQUIRE(tr.batch_loss == 16);
  REQUIRE(tr.batch_grad == 16);
  REQUIRE(tr.batch_hess == 16);
  REQUIRE(tr.delta0 == 0.5);

  const auto& fo = std::get<FirstOrderConfig>(cfg.methods[1].optimizer);
  REQUIRE(fo.method == FirstOrderMethod::kAdagrad);
  REQUIRE(fo.eta == 0.3);
  REQUIRE(fo.full_matrix);
  REQUIRE(fo.batch_size == 64);
}

TEST_CASE("repeats expand to consecutive seeds", "[experiment]") {
  const ExperimentConfig cfg = ParseExperimentConfig(R"({
    "name": "rep",
    "problem": {"kind": "quadratic"},
    "methods": [{"name": "tr"}],
    "repeats": 3,
    "output_dir": "unused"
  })");
  REQUIRE(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("config errors name the offending field", "[experiment]") {
  REQUIRE_THROWS_WITH(ParseExperimentConfig("{not json"), Catch::Contains("parse error"));
  REQUIRE_THROWS_WITH(ParseExperimentConfig(R"({"name": "x"})"), Catch::Contains("problem"));
  REQUIRE_THROWS_WITH(
      ParseExperimentConfig(
          R"({"problem": {"kind": "banana"}, "methods": [{"name": "m"}], "output_dir": "o"})"),
      Catch::Contains("unknown kind"));
  REQUIRE_THROWS_WITH(
      ParseExperimentConfig(
          R"({"problem": {"kind": "quadratic"},
              "methods": [{"name": "m", "ellipsoid": "oval"}], "output_dir": "o"})"),
      Catch::Contains("ellipsoid"));
  REQUIRE_THROWS_WITH(
      ParseExperimentConfig(
          R"({"problem": {"kind": "quadratic"},
              "methods": [{"name": "m", "model_order": 3}], "output_dir": "o"})"),
      Catch::Contains("model_order"));
  REQUIRE_THROWS_WITH(
      ParseExperimentConfig(
          R"({"problem": {"kind": "mlp", "layer_sizes": [2, 2]},
              "methods": [{"name": "m"}], "output_dir": "o"})"),
      Catch::Contains("dataset"));
  REQUIRE_THROWS_WITH(
      ParseExperimentConfig(
          R"({"problem": {"kind": "quadratic"}, "methods": [{"name": "m"}],
              "output_dir": "o", "checkpoints": 1})"),
      Catch::Contains("checkpoints"));
}

TEST_CASE("trace file names follow the double-underscore convention", "[experiment]") {
  REQUIRE(TraceFileName("exp", "tr", 3) == "exp__tr__seed3.csv");
  REQUIRE(TraceFileName("curves", "rms_diag", 12) == "curves__rms_diag__seed12.csv");
}

TEST_CASE("config serialization round-trips", "[experiment]") {
  const ExperimentConfig cfg = ParseExperimentConfig(R"({
    "name": "round",
    "problem": {"kind": "quadratic", "dim": 5, "kappa": 12.0, "rotate": true, "init_radius": 2.0},
    "methods": [
      {"name": "a", "kind": "tr", "ellipsoid": "ada_diag", "delta0": 0.01},
      {"name": "b", "kind": "rmsprop", "eta": 0.002}
    ],
    "seeds": [3, 5, 8],
    "stopping": {"max_iterations": 77, "max_backprops": 9000},
    "output_dir": "somewhere",
    "checkpoints": 9
  })");
  const ExperimentConfig back = ParseExperimentConfig(ExperimentConfigToJson(cfg));

  REQUIRE(back.name == cfg.name);
  REQUIRE(back.seeds == cfg.seeds);
  REQUIRE(back.checkpoints == 9);
  REQUIRE(back.output_dir == "somewhere");
  REQUIRE(back.stopping.max_iterations == 77);
  REQUIRE(back.stopping.max_backprops == 9000);

  const auto& quad = std::get<QuadraticProblemConfig>(back.problem);
  REQUIRE(quad.spec.kappa == 12.0);
  REQUIRE(quad.spec.rotation == etr::RotationKind::kRandomOrthogonal);
  REQUIRE(quad.init_radius == 2.0);

  REQUIRE(back.methods.size() == 2);
  REQUIRE(back.methods[0].name == "a");
  REQUIRE(std::get<TRConfig>(back.methods[0].optimizer).delta0 == 0.01);
  REQUIRE(std::get<TRConfig>(back.methods[0].optimizer).ellipsoid_mode ==
          EllipsoidMode::kAdaDiag);
  REQUIRE(std::get<FirstOrderConfig>(back.methods[1].optimizer).eta == 0.002);
}

TEST_CASE("a tiny experiment writes traces, aggregate, and metadata", "[experiment]") {
  TempDir tmp("etr-exp-tests");
  ExperimentConfig cfg = ParseExperimentConfig(R"({
    "name": "tiny",
    "problem": {"kind": "quadratic", "dim": 2, "kappa": 2.0},
    "methods": [
      {"name": "tr_uni", "kind": "tr", "batch_size": 1},
      {"name": "sgd", "kind": "sgd", "eta": 0.05, "batch_size": 1}
    ],
    "seeds": [1, 2],
    "stopping": {"max_iterations": 40},
    "output_dir": "unused",
    "checkpoints": 5
  })");
  cfg.output_dir = (tmp.path / "out").string();

  const auto summary = RunExperiment(cfg);
  REQUIRE(summary.runs.size() == 4);
  for (const auto& run : summary.runs) {
    REQUIRE_FALSE(run.aborted);
    REQUIRE(run.iterations > 0);
    REQUIRE(std::isfinite(run.final_loss));
    REQUIRE(fs::exists(fs::path(cfg.output_dir) / run.trace_file));
  }
  REQUIRE(summary.runs[0].trace_file == "tiny__tr_uni__seed1.csv");

  // The aggregate holds methods x checkpoints rows on one shared grid.
  const auto rows = ParseCsv(ReadFile(fs::path(cfg.output_dir) / summary.aggregate_file));
  REQUIRE(rows.at(0) ==
          std::vector<std::string>{"method", "checkpoint", "backprops", "epochs",
                                   "mean_log10_loss", "ci95_lo", "ci95_hi"});
  REQUIRE(rows.size() == 1 + 2 * 5);
  std::map<std::string, std::vector<std::string>> grid;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 7);
    grid[rows[i][0]].push_back(rows[i][2]);
  }
  REQUIRE(grid.size() == 2);
  REQUIRE(grid.at("tr_uni") == grid.at("sgd"));  // same backprop grid
  REQUIRE(grid.at("tr_uni").front() == "1");     // log grid starts at one backprop

  // Metadata embeds the resolved config and one entry per run.
  const json meta = json::parse(ReadFile(fs::path(cfg.output_dir) / summary.metadata_file));
  REQUIRE(meta.contains("config"));
  REQUIRE(meta.contains("conventions"));
  REQUIRE(meta.at("runs").size() == 4);
  REQUIRE(meta.at("config").at("name") == "tiny");
}

TEST_CASE("experiments re-run bitwise identically from their metadata", "[experiment]") {
  TempDir tmp("etr-rerun-tests");
  ExperimentConfig cfg = ParseExperimentConfig(R"({
    "name": "redo",
    "problem": {"kind": "mlp", "layer_sizes": [3, 4, 2],
                "dataset": {"kind": "gaussian_blobs", "classes": 2, "dim": 3, "n": 40, "seed": 5}},
    "methods": [
      {"name": "tr_rms", "kind": "tr", "ellipsoid": "rms_diag", "batch_size": 8}
    ],
    "seeds": [1],
    "stopping": {"max_iterations": 20},
    "output_dir": "unused",
    "checkpoints": 4
  })");
  cfg.output_dir = (tmp.path / "first").string();
  const auto first = RunExperiment(cfg);
  REQUIRE(first.runs.size() == 1);
  REQUIRE(first.runs[0].certificate.has_value());  // rms mode certifies

  ExperimentConfig again =
      ParseExperimentConfig(ReadFile(fs::path(cfg.output_dir) / first.metadata_file));
  again.output_dir = (tmp.path / "second").string();
  const auto second = RunExperiment(again);

  REQUIRE(ReadFile(fs::path(first.output_dir) / first.runs[0].trace_file) ==
          ReadFile(fs::path(second.output_dir) / second.runs[0].trace_file));
  REQUIRE(ReadFile(fs::path(first.output_dir) / first.aggregate_file) ==
          ReadFile(fs::path(second.output_dir) / second.aggregate_file));
}

TEST_CASE("the quadratic study tunes each method on the grid", "[experiment]") {
  QuadraticStudyConfig study;
  study.kappa = 4.0;
  study.dim = 2;
  study.seeds = 3;
  study.max_iterations = 400;
  study.target_log10_drop = -3.0;
  study.methods = {"gd", "tr2_uni"};
  study.tuning_grid = {0.1, 0.5};

  const auto results = RunQuadraticStudy(study);
  REQUIRE(results.size() == 2);
  REQUIRE(results[0].method == "gd");
  REQUIRE(results[1].method == "tr2_uni");
  for (const auto& r : results) {
    REQUIRE((r.tuned_value == 0.1 || r.tuned_value == 0.5));
    REQUIRE(r.reached_target == 3);
    REQUIRE(r.median_final_log10_drop <= -3.0);
    REQUIRE(r.median_iterations < 400.0);
  }
  // eta = 0.5 leaves the stiff coordinate oscillating on kappa = 4, so the
  // tuner must settle on the smaller stepsize for gradient descent.
  REQUIRE(results[0].tuned_value == 0.1);
  // The curvature-aware method needs far fewer iterations.
  REQUIRE(results[1].median_iterations < results[0].median_iterations);

  const json parsed = json::parse(etr::StudyResultsToJson(results));
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == 2);
  REQUIRE(parsed.at(0).at("method") == "gd");

  QuadraticStudyConfig bad = study;
  bad.methods = {"warp_drive"};
  REQUIRE_THROWS_AS(RunQuadraticStudy(bad), std::invalid_argument);
  bad.methods = {};
  REQUIRE_THROWS_AS(RunQuadraticStudy(bad), std::invalid_argument);
}

TEST_CASE("study presets cover every documented method", "[experiment]") {
  const auto methods = etr::QuadraticStudyMethods();
  REQUIRE(methods.size() == 12);
  const std::vector<std::string> expected = {
      "gd",      "adagrad", "adagrad_full", "rmsprop",      "tr1_uni",     "tr1_ada",
      "tr1_rms", "tr2_uni", "tr2_ada",      "tr2_rms",      "tr2_ada_full", "tr2_rms_full"};
  REQUIRE(methods == expected);
}

}  // namespace
