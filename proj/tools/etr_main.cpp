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

// etr: trust-region optimization experiments on ellipsoidal geometries.
//
//   etr run --config cfg.json [--out DIR] [--data-dir DIR]
//   etr verify --suite NAME        (firstorder|spectrum|steihaug|derivatives|all)
//   etr quadratic --kappa F --method NAME[,NAME...] --seeds K
//                 [--dim N] [--rotate] [--iters N] [--out FILE]
//
// Exit codes: 0 success, 1 run or suite failure, 2 configuration error.

#include <getopt.h>

#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "etr/experiment.hpp"
#include "etr/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

void PrintUsage() {
  fmt::print(
      "usage: etr <command> [options]\n"
      "\n"
      "commands:\n"
      "  run        run an experiment described by a JSON config\n"
      "  verify     run a named self-check suite and print a JSON report\n"
      "  quadratic  tuned-method comparison on a random quadratic\n"
      "\n"
      "run options:\n"
      "  --config FILE   experiment config (or a metadata.json) [required]\n"
      "  --out DIR       override the configured output directory\n"
      "  --data-dir DIR  directory with IDX files (else $ETR_DATA_DIR)\n"
      "\n"
      "verify options:\n"
      "  --suite NAME    firstorder|spectrum|steihaug|derivatives|all [required]\n"
      "\n"
      "quadratic options:\n"
      "  --kappa F       condition number of the quadratic (default 20)\n"
      "  --method LIST   comma-separated method names (default: all presets)\n"
      "  --seeds K       number of random initializations (default 30)\n"
      "  --dim N         problem dimension (default 2)\n"
      "  --rotate        rotate the Hessian out of the coordinate axes\n"
      "  --iters N       per-run iteration cap (default 2000)\n"
      "  --out FILE      also write the JSON results to FILE\n");
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> SplitCommas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int CmdRun(int argc, char** argv) {
  static const option kOpts[] = {{"config", required_argument, nullptr, 'c'},
                                 {"out", required_argument, nullptr, 'o'},
                                 {"data-dir", required_argument, nullptr, 'd'},
                                 {"help", no_argument, nullptr, 'h'},
                                 {nullptr, 0, nullptr, 0}};
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  int opt = 0;
  while ((opt = getopt_long(argc, argv, "c:o:d:h", kOpts, nullptr)) != -1) {
    switch (opt) {
      case 'c':
        config_path = optarg;
        break;
      case 'o':
        out_dir = optarg;
        break;
      case 'd':
        data_dir = optarg;
        break;
      case 'h':
        PrintUsage();
        return kExitOk;
      default:
        return kExitConfig;
    }
  }
  if (config_path.empty()) {
    fmt::print(stderr, "etr run: --config is required\n");
    return kExitConfig;
  }

  etr::ExperimentConfig config;
  try {
    config = etr::ParseExperimentConfig(ReadFile(config_path));
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.Validate();
  } catch (const std::exception& e) {
    fmt::print(stderr, "etr run: invalid config: {}\n", e.what());
    return kExitConfig;
  }

  try {
    const etr::ExperimentSummary summary = etr::RunExperiment(config, data_dir);
    for (const auto& run : summary.runs) {
      fmt::print("{:<24} seed {:<6} iters {:<6} backprops {:<12} final loss {:.6e}{}\n",
                 run.method, run.seed, run.iterations, run.backprops, run.final_loss,
                 run.aborted ? "  [aborted]" : "");
    }
    fmt::print("wrote {} traces, {} and {}\n", summary.runs.size(), summary.aggregate_file,
               summary.metadata_file);
    for (const auto& run : summary.runs) {
      if (run.aborted) return kExitFailure;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    fmt::print(stderr, "etr run: {}\n", e.what());
    return kExitFailure;
  }
}

int CmdVerify(int argc, char** argv) {
  static const option kOpts[] = {{"suite", required_argument, nullptr, 's'},
                                 {"help", no_argument, nullptr, 'h'},
                                 {nullptr, 0, nullptr, 0}};
  std::string suite;
  int opt = 0;
  while ((opt = getopt_long(argc, argv, "s:h", kOpts, nullptr)) != -1) {
    switch (opt) {
      case 's':
        suite = optarg;
        break;
      case 'h':
        PrintUsage();
        return kExitOk;
      default:
        return kExitConfig;
    }
  }
  if (suite.empty()) {
    fmt::print(stderr, "etr verify: --suite is required\n");
    return kExitConfig;
  }

  std::vector<std::string> suites;
  if (suite == "all") {
    suites = etr::VerificationSuites();
  } else {
    suites.push_back(suite);
  }

  bool all_passed = true;
  try {
    for (const auto& name : suites) {
      const etr::VerificationReport report = etr::RunVerification(name);
      fmt::print("{}\n", etr::ReportToJson(report));
      all_passed = all_passed && report.passed;
    }
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "etr verify: {}\n", e.what());
    return kExitConfig;
  }
  return all_passed ? kExitOk : kExitFailure;
}

int CmdQuadratic(int argc, char** argv) {
  static const option kOpts[] = {{"kappa", required_argument, nullptr, 'k'},
                                 {"method", required_argument, nullptr, 'm'},
                                 {"seeds", required_argument, nullptr, 's'},
                                 {"dim", required_argument, nullptr, 'n'},
                                 {"rotate", no_argument, nullptr, 'r'},
                                 {"iters", required_argument, nullptr, 'i'},
                                 {"out", required_argument, nullptr, 'o'},
                                 {"help", no_argument, nullptr, 'h'},
                                 {nullptr, 0, nullptr, 0}};
  etr::QuadraticStudyConfig config;
  std::string out_path;
  int opt = 0;
  try {
    while ((opt = getopt_long(argc, argv, "k:m:s:n:ri:o:h", kOpts, nullptr)) != -1) {
      switch (opt) {
        case 'k':
          config.kappa = std::stod(optarg);
          break;
        case 'm':
          config.methods = SplitCommas(optarg);
          break;
        case 's':
          config.seeds = std::stoi(optarg);
          break;
        case 'n':
          config.dim = std::stol(optarg);
          break;
        case 'r':
          config.rotate = true;
          break;
        case 'i':
          config.max_iterations = std::stol(optarg);
          break;
        case 'o':
          out_path = optarg;
          break;
        case 'h':
          PrintUsage();
          return kExitOk;
        default:
          return kExitConfig;
      }
    }
  } catch (const std::exception&) {
    fmt::print(stderr, "etr quadratic: malformed numeric option\n");
    return kExitConfig;
  }
  if (config.methods.empty()) config.methods = etr::QuadraticStudyMethods();

  try {
    const auto results = etr::RunQuadraticStudy(config);
    const std::string json = etr::StudyResultsToJson(results);
    fmt::print("{}\n", json);
    if (!out_path.empty()) {
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      if (!out) {
        fmt::print(stderr, "etr quadratic: cannot write {}\n", out_path);
        return kExitFailure;
      }
      out << json << "\n";
    }
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "etr quadratic: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "etr quadratic: {}\n", e.what());
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    PrintUsage();
    return kExitConfig;
  }
  const std::string command = argv[1];
  if (command == "--help" || command == "-h" || command == "help") {
    PrintUsage();
    return kExitOk;
  }
  // Shift so each subcommand parses its own options from position 1.
  argc -= 1;
  argv += 1;
  optind = 1;
  if (command == "run") return CmdRun(argc, argv);
  if (command == "verify") return CmdVerify(argc, argv);
  if (command == "quadratic") return CmdQuadratic(argc, argv);
  fmt::print(stderr, "etr: unknown command '{}'\n", command);
  PrintUsage();
  return kExitConfig;
}
