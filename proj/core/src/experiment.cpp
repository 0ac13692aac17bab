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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

namespace etr {
namespace {

using nlohmann::json;

std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Writes content to path via a temp file + rename, so readers never observe
// a partial file.
void AtomicWrite(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) {
      throw std::runtime_error(fmt::format("cannot open {} for writing", tmp.string()));
    }
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) {
      throw std::runtime_error(fmt::format("write to {} failed", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
T GetOr(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

[[noreturn]] void BadField(const std::string& context, const std::string& detail) {
  throw std::invalid_argument(fmt::format("experiment config: {}: {}", context, detail));
}

EllipsoidMode ParseEllipsoidMode(const std::string& s) {
  if (s == "uniform") return EllipsoidMode::kUniform;
  if (s == "ada_diag") return EllipsoidMode::kAdaDiag;
  if (s == "rms_diag") return EllipsoidMode::kRmsDiag;
  if (s == "ada_full") return EllipsoidMode::kAdaFull;
  if (s == "rms_full") return EllipsoidMode::kRmsFull;
  BadField("methods", fmt::format("unknown ellipsoid \"{}\"", s));
}

std::string EllipsoidModeName(EllipsoidMode m) {
  switch (m) {
    case EllipsoidMode::kUniform:
      return "uniform";
    case EllipsoidMode::kAdaDiag:
      return "ada_diag";
    case EllipsoidMode::kRmsDiag:
      return "rms_diag";
    case EllipsoidMode::kAdaFull:
      return "ada_full";
    case EllipsoidMode::kRmsFull:
      return "rms_full";
  }
  throw std::logic_error("unreachable");
}

TRConfig ParseTrConfig(const json& j) {
  const EllipsoidMode mode = ParseEllipsoidMode(GetOr<std::string>(j, "ellipsoid", "uniform"));
  TRConfig cfg = TableDefaults(mode);
  cfg.delta0 = GetOr(j, "delta0", cfg.delta0);
  cfg.delta_max = GetOr(j, "delta_max", cfg.delta_max);
  cfg.eta1 = GetOr(j, "eta1", cfg.eta1);
  cfg.eta2 = GetOr(j, "eta2", cfg.eta2);
  cfg.gamma1 = GetOr(j, "gamma1", cfg.gamma1);
  cfg.gamma2 = GetOr(j, "gamma2", cfg.gamma2);
  cfg.kappa_kry = GetOr(j, "kappa_kry", cfg.kappa_kry);
  if (j.contains("batch_size")) {
    const auto b = j.at("batch_size").get<Eigen::Index>();
    cfg.batch_loss = cfg.batch_grad = cfg.batch_hess = b;
  }
  cfg.batch_loss = GetOr(j, "batch_loss", cfg.batch_loss);
  cfg.batch_grad = GetOr(j, "batch_grad", cfg.batch_grad);
  cfg.batch_hess = GetOr(j, "batch_hess", cfg.batch_hess);
  cfg.beta = GetOr(j, "beta", cfg.beta);
  cfg.epsilon = GetOr(j, "epsilon", cfg.epsilon);
  cfg.max_cg_iterations = GetOr(j, "max_cg_iterations", cfg.max_cg_iterations);
  const int order = GetOr(j, "model_order", 2);
  if (order != 1 && order != 2) {
    BadField("methods", fmt::format("model_order must be 1 or 2, got {}", order));
  }
  cfg.model_order = order == 1 ? ModelOrder::kFirst : ModelOrder::kSecond;
  const std::string exponent = GetOr<std::string>(j, "exponent", "half");
  if (exponent == "half") {
    cfg.exponent = SpectralExponent::kHalf;
  } else if (exponent == "one") {
    cfg.exponent = SpectralExponent::kOne;
  } else {
    BadField("methods", fmt::format("unknown exponent \"{}\"", exponent));
  }
  return cfg;
}

json TrConfigToJson(const TRConfig& cfg) {
  json j;
  j["kind"] = "tr";
  j["ellipsoid"] = EllipsoidModeName(cfg.ellipsoid_mode);
  j["model_order"] = cfg.model_order == ModelOrder::kFirst ? 1 : 2;
  j["exponent"] = cfg.exponent == SpectralExponent::kHalf ? "half" : "one";
  j["delta0"] = cfg.delta0;
  j["delta_max"] = cfg.delta_max;
  j["eta1"] = cfg.eta1;
  j["eta2"] = cfg.eta2;
  j["gamma1"] = cfg.gamma1;
  j["gamma2"] = cfg.gamma2;
  j["kappa_kry"] = cfg.kappa_kry;
  j["batch_loss"] = cfg.batch_loss;
  j["batch_grad"] = cfg.batch_grad;
  j["batch_hess"] = cfg.batch_hess;
  j["beta"] = cfg.beta;
  j["epsilon"] = cfg.epsilon;
  j["max_cg_iterations"] = cfg.max_cg_iterations;
  return j;
}

FirstOrderConfig ParseFoConfig(const json& j, const std::string& kind) {
  FirstOrderConfig cfg;
  if (kind == "sgd") {
    cfg.method = FirstOrderMethod::kSgd;
  } else if (kind == "adagrad") {
    cfg.method = FirstOrderMethod::kAdagrad;
  } else if (kind == "rmsprop") {
    cfg.method = FirstOrderMethod::kRmsprop;
  } else {
    BadField("methods", fmt::format("unknown optimizer kind \"{}\"", kind));
  }
  cfg.eta = GetOr(j, "eta", cfg.eta);
  cfg.beta = GetOr(j, "beta", cfg.beta);
  cfg.epsilon = GetOr(j, "epsilon", cfg.epsilon);
  cfg.full_matrix = GetOr(j, "full_matrix", cfg.full_matrix);
  cfg.batch_size = GetOr(j, "batch_size", cfg.batch_size);
  return cfg;
}

json FoConfigToJson(const FirstOrderConfig& cfg) {
  json j;
  switch (cfg.method) {
    case FirstOrderMethod::kSgd:
      j["kind"] = "sgd";
      break;
    case FirstOrderMethod::kAdagrad:
      j["kind"] = "adagrad";
      break;
    case FirstOrderMethod::kRmsprop:
      j["kind"] = "rmsprop";
      break;
  }
  j["eta"] = cfg.eta;
  j["beta"] = cfg.beta;
  j["epsilon"] = cfg.epsilon;
  j["full_matrix"] = cfg.full_matrix;
  j["batch_size"] = cfg.batch_size;
  return j;
}

DatasetSpec ParseDatasetSpec(const json& j) {
  const std::string kind = GetOr<std::string>(j, "kind", "idx");
  if (kind == "idx") {
    IdxPairSpec spec;
    if (!j.contains("images")) BadField("dataset", "idx source needs an \"images\" file");
    spec.images = j.at("images").get<std::string>();
    spec.labels = GetOr<std::string>(j, "labels", "");
    spec.dir = GetOr<std::string>(j, "dir", "");
    spec.max_samples = GetOr<Eigen::Index>(j, "max_samples", -1);
    return spec;
  }
  if (kind == "gaussian_blobs") {
    GaussianBlobsSpec spec;
    spec.classes = GetOr(j, "classes", spec.classes);
    spec.dim = GetOr(j, "dim", spec.dim);
    spec.sep = GetOr(j, "sep", spec.sep);
    spec.n = GetOr(j, "n", spec.n);
    spec.seed = GetOr(j, "seed", spec.seed);
    return spec;
  }
  if (kind == "random") {
    RandomRegressionSpec spec;
    spec.dim = GetOr(j, "dim", spec.dim);
    spec.n = GetOr(j, "n", spec.n);
    spec.seed = GetOr(j, "seed", spec.seed);
    return spec;
  }
  BadField("dataset", fmt::format("unknown kind \"{}\"", kind));
}

json DatasetSpecToJson(const DatasetSpec& spec) {
  json j;
  if (const auto* idx = std::get_if<IdxPairSpec>(&spec)) {
    j["kind"] = "idx";
    j["images"] = idx->images;
    j["labels"] = idx->labels;
    j["dir"] = idx->dir;
    j["max_samples"] = idx->max_samples;
  } else if (const auto* blobs = std::get_if<GaussianBlobsSpec>(&spec)) {
    j["kind"] = "gaussian_blobs";
    j["classes"] = blobs->classes;
    j["dim"] = blobs->dim;
    j["sep"] = blobs->sep;
    j["n"] = blobs->n;
    j["seed"] = blobs->seed;
  } else if (const auto* rnd = std::get_if<RandomRegressionSpec>(&spec)) {
    j["kind"] = "random";
    j["dim"] = rnd->dim;
    j["n"] = rnd->n;
    j["seed"] = rnd->seed;
  }
  return j;
}

ProblemConfig ParseProblemConfig(const json& j) {
  const std::string kind = GetOr<std::string>(j, "kind", "");
  if (kind == "quadratic") {
    QuadraticProblemConfig cfg;
    cfg.spec.dim = GetOr<Eigen::Index>(j, "dim", 2);
    cfg.spec.kappa = GetOr(j, "kappa", 1.0);
    cfg.spec.rotation =
        GetOr(j, "rotate", false) ? RotationKind::kRandomOrthogonal : RotationKind::kAxisAligned;
    cfg.spec.rotation_seed = GetOr<std::uint64_t>(j, "rotation_seed", 0);
    cfg.init_radius = GetOr(j, "init_radius", 1.0);
    return cfg;
  }
  if (kind == "mlp") {
    MlpProblemConfig cfg;
    if (!j.contains("layer_sizes")) BadField("problem", "mlp needs \"layer_sizes\"");
    cfg.mlp.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    const std::string act = GetOr<std::string>(j, "activation", "tanh");
    if (act == "tanh") {
      cfg.mlp.activation = Activation::kTanh;
    } else if (act == "sigmoid") {
      cfg.mlp.activation = Activation::kSigmoid;
    } else {
      BadField("problem", fmt::format("unknown activation \"{}\"", act));
    }
    const std::string loss = GetOr<std::string>(j, "loss", "cross_entropy");
    if (loss == "cross_entropy") {
      cfg.mlp.loss = LossKind::kCrossEntropy;
    } else if (loss == "pixel_bce") {
      cfg.mlp.loss = LossKind::kPixelBce;
    } else if (loss == "squared_error") {
      cfg.mlp.loss = LossKind::kSquaredError;
    } else {
      BadField("problem", fmt::format("unknown loss \"{}\"", loss));
    }
    if (!j.contains("dataset")) BadField("problem", "mlp needs a \"dataset\"");
    cfg.dataset = ParseDatasetSpec(j.at("dataset"));
    return cfg;
  }
  BadField("problem", fmt::format("unknown kind \"{}\"", kind));
}

json ProblemConfigToJson(const ProblemConfig& problem) {
  json j;
  if (const auto* quad = std::get_if<QuadraticProblemConfig>(&problem)) {
    j["kind"] = "quadratic";
    j["dim"] = quad->spec.dim;
    j["kappa"] = quad->spec.kappa;
    j["rotate"] = quad->spec.rotation == RotationKind::kRandomOrthogonal;
    j["rotation_seed"] = quad->spec.rotation_seed;
    j["init_radius"] = quad->init_radius;
  } else if (const auto* mlp = std::get_if<MlpProblemConfig>(&problem)) {
    j["kind"] = "mlp";
    j["layer_sizes"] = mlp->mlp.layer_sizes;
    j["activation"] = mlp->mlp.activation == Activation::kTanh ? "tanh" : "sigmoid";
    switch (mlp->mlp.loss) {
      case LossKind::kCrossEntropy:
        j["loss"] = "cross_entropy";
        break;
      case LossKind::kPixelBce:
        j["loss"] = "pixel_bce";
        break;
      case LossKind::kSquaredError:
        j["loss"] = "squared_error";
        break;
    }
    j["dataset"] = DatasetSpecToJson(mlp->dataset);
  }
  return j;
}

struct BuiltProblem {
  std::unique_ptr<Objective> objective;
  std::function<Eigen::VectorXd(std::uint64_t)> initial_point;
};

BuiltProblem BuildProblem(const ProblemConfig& problem, const std::string& data_dir) {
  BuiltProblem built;
  if (const auto* quad = std::get_if<QuadraticProblemConfig>(&problem)) {
    auto objective = MakeQuadratic(quad->spec);
    const Eigen::VectorXd optimum = objective->optimum();
    const double radius = quad->init_radius;
    built.initial_point = [optimum, radius](std::uint64_t seed) {
      std::mt19937_64 rng(MixSeed(seed, 11));
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::VectorXd dir(optimum.size());
      for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
      const double norm = dir.norm();
      if (norm < 1e-12) dir.setOnes();
      dir.normalize();
      return (optimum + radius * dir).eval();
    };
    built.objective = std::move(objective);
    return built;
  }

  const auto& mlp = std::get<MlpProblemConfig>(problem);
  Dataset data;
  if (const auto* idx = std::get_if<IdxPairSpec>(&mlp.dataset)) {
    const std::filesystem::path dir = ResolveDataDir(idx->dir.empty() ? data_dir : idx->dir);
    const std::filesystem::path labels =
        idx->labels.empty() ? std::filesystem::path() : dir / idx->labels;
    data = LoadIdxDataset(dir / idx->images, labels, idx->images, idx->max_samples);
  } else if (const auto* blobs = std::get_if<GaussianBlobsSpec>(&mlp.dataset)) {
    data = MakeSynthetic(*blobs);
  } else {
    data = MakeSynthetic(std::get<RandomRegressionSpec>(mlp.dataset));
  }
  auto objective = MakeMlp(mlp.mlp, data);
  const MlpObjective* raw = objective.get();
  built.initial_point = [raw](std::uint64_t seed) {
    return raw->InitialParameters(MixSeed(seed, 17));
  };
  built.objective = std::move(objective);
  return built;
}

double TraceLossAt(const std::vector<IterationRecord>& trace, double backprops) {
  // Forward-filled loss at the given backprop count; before the first record
  // the initial loss is the best available stand-in.
  double loss = trace.front().loss_batch;
  for (const IterationRecord& r : trace) {
    if (static_cast<double>(r.backprops) > backprops) break;
    loss = r.loss_batch;
  }
  return loss;
}

double Median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json CertificateToJson(const EquivalenceCertificate& cert) {
  json j;
  j["lambda_min_bound"] = cert.lambda_min_bound;
  j["lambda_max_bound"] = cert.lambda_max_bound;
  j["zeta"] = std::isfinite(cert.zeta) ? json(cert.zeta) : json();
  j["mu"] = std::isfinite(cert.mu) ? json(cert.mu) : json();
  j["valid"] = cert.valid;
  return j;
}

}  // namespace

void ExperimentConfig::Validate() const {
  if (name.empty()) throw std::invalid_argument("experiment config: name must be non-empty");
  if (methods.empty()) throw std::invalid_argument("experiment config: methods must be non-empty");
  if (seeds.empty()) throw std::invalid_argument("experiment config: seeds must be non-empty");
  if (checkpoints < 2) {
    throw std::invalid_argument("experiment config: checkpoints must be >= 2");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("experiment config: output_dir must be non-empty");
  }
  for (const MethodSpec& m : methods) {
    if (m.name.empty()) {
      throw std::invalid_argument("experiment config: every method needs a name");
    }
    if (const auto* tr = std::get_if<TRConfig>(&m.optimizer)) {
      tr->Validate();
    } else {
      std::get<FirstOrderConfig>(m.optimizer).Validate();
    }
  }
}

ExperimentConfig ParseExperimentConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(fmt::format("experiment config: parse error: {}", e.what()));
  }
  try {
    // A metadata.json written by RunExperiment re-parses through its
    // embedded config.
    const json& j = root.contains("config") && root.at("config").is_object() &&
                            root.at("config").contains("problem")
                        ? root.at("config")
                        : root;

    ExperimentConfig cfg;
    cfg.name = GetOr<std::string>(j, "name", cfg.name);
    if (!j.contains("problem")) BadField("problem", "missing");
    cfg.problem = ParseProblemConfig(j.at("problem"));

    if (!j.contains("methods") || !j.at("methods").is_array()) {
      BadField("methods", "must be a non-empty array");
    }
    for (const json& mj : j.at("methods")) {
      MethodSpec m;
      if (!mj.contains("name")) BadField("methods", "every method needs a name");
      m.name = mj.at("name").get<std::string>();
      const std::string kind = GetOr<std::string>(mj, "kind", "tr");
      if (kind == "tr") {
        m.optimizer = ParseTrConfig(mj);
      } else {
        m.optimizer = ParseFoConfig(mj, kind);
      }
      cfg.methods.push_back(std::move(m));
    }

    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const int repeats = GetOr(j, "repeats", 1);
      if (repeats < 1) BadField("repeats", "must be >= 1");
      for (int k = 1; k <= repeats; ++k) cfg.seeds.push_back(static_cast<std::uint64_t>(k));
    }

    if (j.contains("stopping")) {
      const json& s = j.at("stopping");
      cfg.stopping.max_iterations = GetOr(s, "max_iterations", cfg.stopping.max_iterations);
      cfg.stopping.grad_tol = GetOr(s, "grad_tol", cfg.stopping.grad_tol);
      cfg.stopping.max_backprops = GetOr(s, "max_backprops", cfg.stopping.max_backprops);
    }
    cfg.output_dir = GetOr<std::string>(j, "output_dir", cfg.output_dir);
    cfg.checkpoints = GetOr(j, "checkpoints", cfg.checkpoints);
    cfg.Validate();
    return cfg;
  } catch (const json::exception& e) {
    throw std::invalid_argument(fmt::format("experiment config: {}", e.what()));
  }
}

std::string ExperimentConfigToJson(const ExperimentConfig& config) {
  json j;
  j["name"] = config.name;
  j["problem"] = ProblemConfigToJson(config.problem);
  json methods = json::array();
  for (const MethodSpec& m : config.methods) {
    json mj = std::holds_alternative<TRConfig>(m.optimizer)
                  ? TrConfigToJson(std::get<TRConfig>(m.optimizer))
                  : FoConfigToJson(std::get<FirstOrderConfig>(m.optimizer));
    mj["name"] = m.name;
    methods.push_back(std::move(mj));
  }
  j["methods"] = std::move(methods);
  j["seeds"] = config.seeds;
  j["stopping"]["max_iterations"] = config.stopping.max_iterations;
  j["stopping"]["grad_tol"] = config.stopping.grad_tol;
  j["stopping"]["max_backprops"] = config.stopping.max_backprops;
  j["output_dir"] = config.output_dir;
  j["checkpoints"] = config.checkpoints;
  return j.dump(2);
}

std::string TraceFileName(const std::string& experiment, const std::string& method,
                          std::uint64_t seed) {
  return fmt::format("{}__{}__seed{}.csv", experiment, method, seed);
}

ExperimentSummary RunExperiment(const ExperimentConfig& config, const std::string& data_dir) {
  config.Validate();
  const BuiltProblem problem = BuildProblem(config.problem, data_dir);
  const Eigen::Index n = problem.objective->num_samples();

  std::filesystem::create_directories(config.output_dir);
  ExperimentSummary summary;
  summary.output_dir = config.output_dir;

  struct MethodRuns {
    std::string name;
    std::vector<std::vector<IterationRecord>> traces;
  };
  std::vector<MethodRuns> all_runs;

  for (const MethodSpec& method : config.methods) {
    MethodRuns runs;
    runs.name = method.name;
    for (std::uint64_t seed : config.seeds) {
      const Eigen::VectorXd w0 = problem.initial_point(seed);
      RunResult result;
      if (const auto* tr = std::get_if<TRConfig>(&method.optimizer)) {
        TRConfig cfg = *tr;
        cfg.seed = seed;
        result = TrMinimize(*problem.objective, w0, cfg, config.stopping);
      } else {
        FirstOrderConfig cfg = std::get<FirstOrderConfig>(method.optimizer);
        cfg.seed = seed;
        result = FirstOrderRun(*problem.objective, w0, cfg, config.stopping);
      }

      const std::string file = TraceFileName(config.name, method.name, seed);
      std::ostringstream csv;
      WriteTraceCsv(csv, result.trace);
      AtomicWrite(std::filesystem::path(config.output_dir) / file, csv.str());

      RunRecord record;
      record.method = method.name;
      record.seed = seed;
      record.trace_file = file;
      record.iterations = static_cast<std::int64_t>(result.trace.size());
      record.backprops = result.backprops;
      record.final_loss = result.trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : result.trace.back().loss_batch;
      record.certificate = result.certificate;
      record.aborted = result.aborted;
      summary.runs.push_back(record);
      runs.traces.push_back(std::move(result.trace));
    }
    all_runs.push_back(std::move(runs));
  }

  // Aggregate on a shared log-spaced backprop grid.
  double grid_max = static_cast<double>(config.stopping.max_backprops);
  if (config.stopping.max_backprops < 0) {
    grid_max = 1.0;
    for (const MethodRuns& runs : all_runs) {
      for (const auto& trace : runs.traces) {
        if (!trace.empty()) {
          grid_max = std::max(grid_max, static_cast<double>(trace.back().backprops));
        }
      }
    }
  }
  grid_max = std::max(grid_max, 1.0);

  std::ostringstream agg;
  fmt::print(agg, "method,checkpoint,backprops,epochs,mean_log10_loss,ci95_lo,ci95_hi\n");
  for (const MethodRuns& runs : all_runs) {
    for (int c = 0; c < config.checkpoints; ++c) {
      const double frac = static_cast<double>(c) / static_cast<double>(config.checkpoints - 1);
      const double backprops = std::exp(frac * std::log(grid_max));
      std::vector<double> logs;
      for (const auto& trace : runs.traces) {
        if (trace.empty()) continue;
        const double loss = TraceLossAt(trace, backprops);
        logs.push_back(std::log10(std::max(loss, 1e-300)));
      }
      if (logs.empty()) continue;
      const double k = static_cast<double>(logs.size());
      double mean = 0.0;
      for (double v : logs) mean += v;
      mean /= k;
      double var = 0.0;
      for (double v : logs) var += (v - mean) * (v - mean);
      const double stderr_ = logs.size() > 1 ? std::sqrt(var / (k - 1.0) / k) : 0.0;
      fmt::print(agg, "{},{},{},{},{},{},{}\n", runs.name, c, backprops,
                 backprops / static_cast<double>(n), mean, mean - 1.96 * stderr_,
                 mean + 1.96 * stderr_);
    }
  }
  summary.aggregate_file = "aggregate.csv";
  AtomicWrite(std::filesystem::path(config.output_dir) / summary.aggregate_file, agg.str());

  // Metadata: resolved config, run inventory, and the conventions a reader
  // needs to interpret the numbers.
  json meta;
  meta["config"] = json::parse(ExperimentConfigToJson(config));
  meta["conventions"] = {
      {"backprop_unit", "one backward pass over one sample; hessian-vector products count twice"},
      {"epoch", "backprops / num_samples"},
      {"loss_curve", "loss_batch column: sampled loss at the iterate before each step"},
      {"aggregate", "mean log10 loss with 95% normal confidence bands over seeds"},
      {"rho", "NaN when no model ratio was formed (constant-stepsize methods, degenerate decrease)"},
  };
  json runs_json = json::array();
  for (const RunRecord& r : summary.runs) {
    json rj;
    rj["method"] = r.method;
    rj["seed"] = r.seed;
    rj["trace_file"] = r.trace_file;
    rj["iterations"] = r.iterations;
    rj["backprops"] = r.backprops;
    rj["final_loss"] =
        std::isfinite(r.final_loss) ? json(r.final_loss) : json();
    rj["aborted"] = r.aborted;
    if (r.certificate.has_value()) {
      rj["certificate"] = CertificateToJson(*r.certificate);
    }
    runs_json.push_back(std::move(rj));
  }
  meta["runs"] = std::move(runs_json);
  summary.metadata_file = "metadata.json";
  AtomicWrite(std::filesystem::path(config.output_dir) / summary.metadata_file,
              meta.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// Quadratic study

namespace {

struct StudyMethod {
  bool is_tr = false;
  TRConfig tr;
  FirstOrderConfig fo;
};

StudyMethod MakeStudyMethod(const std::string& name) {
  StudyMethod m;
  auto tr_preset = [&](EllipsoidMode mode, ModelOrder order) {
    m.is_tr = true;
    m.tr = TableDefaults(mode);
    m.tr.model_order = order;
    m.tr.batch_loss = m.tr.batch_grad = m.tr.batch_hess = 1;
  };
  auto fo_preset = [&](FirstOrderMethod method, bool full) {
    m.is_tr = false;
    m.fo.method = method;
    m.fo.full_matrix = full;
    m.fo.batch_size = 1;
  };
  if (name == "gd") {
    fo_preset(FirstOrderMethod::kSgd, false);
  } else if (name == "adagrad") {
    fo_preset(FirstOrderMethod::kAdagrad, false);
  } else if (name == "adagrad_full") {
    fo_preset(FirstOrderMethod::kAdagrad, true);
  } else if (name == "rmsprop") {
    fo_preset(FirstOrderMethod::kRmsprop, false);
  } else if (name == "tr1_uni") {
    tr_preset(EllipsoidMode::kUniform, ModelOrder::kFirst);
  } else if (name == "tr1_ada") {
    tr_preset(EllipsoidMode::kAdaDiag, ModelOrder::kFirst);
  } else if (name == "tr1_rms") {
    tr_preset(EllipsoidMode::kRmsDiag, ModelOrder::kFirst);
  } else if (name == "tr2_uni") {
    tr_preset(EllipsoidMode::kUniform, ModelOrder::kSecond);
  } else if (name == "tr2_ada") {
    tr_preset(EllipsoidMode::kAdaDiag, ModelOrder::kSecond);
  } else if (name == "tr2_rms") {
    tr_preset(EllipsoidMode::kRmsDiag, ModelOrder::kSecond);
  } else if (name == "tr2_ada_full") {
    tr_preset(EllipsoidMode::kAdaFull, ModelOrder::kSecond);
  } else if (name == "tr2_rms_full") {
    tr_preset(EllipsoidMode::kRmsFull, ModelOrder::kSecond);
  } else {
    throw std::invalid_argument(fmt::format("quadratic study: unknown method \"{}\"", name));
  }
  return m;
}

}  // namespace

std::vector<std::string> QuadraticStudyMethods() {
  return {"gd",      "adagrad", "adagrad_full", "rmsprop",      "tr1_uni",     "tr1_ada",
          "tr1_rms", "tr2_uni", "tr2_ada",      "tr2_rms",      "tr2_ada_full", "tr2_rms_full"};
}

std::vector<QuadraticStudyResult> RunQuadraticStudy(const QuadraticStudyConfig& config) {
  if (config.methods.empty()) {
    throw std::invalid_argument("quadratic study: no methods given");
  }
  if (config.seeds < 1 || config.max_iterations < 1) {
    throw std::invalid_argument("quadratic study: seeds and max_iterations must be >= 1");
  }

  QuadraticSpec spec;
  spec.dim = config.dim;
  spec.kappa = config.kappa;
  spec.rotation = config.rotate ? RotationKind::kRandomOrthogonal : RotationKind::kAxisAligned;
  spec.rotation_seed = config.base_seed;
  const auto objective = MakeQuadratic(spec);

  std::vector<double> grid = config.tuning_grid;
  if (grid.empty()) {
    for (int i = 0; i < 7; ++i) {
      grid.push_back(std::pow(10.0, -4.0 + 4.0 * static_cast<double>(i) / 6.0));
    }
  }

  StoppingCriteria stopping;
  stopping.max_iterations = config.max_iterations;

  // Per-seed starts shared across methods and grid points.
  std::vector<Eigen::VectorXd> starts;
  std::vector<double> initial_losses;
  for (int k = 0; k < config.seeds; ++k) {
    std::mt19937_64 rng(MixSeed(config.base_seed, 100 + static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd dir(config.dim);
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
    if (dir.norm() < 1e-12) dir.setOnes();
    dir.normalize();
    starts.push_back(objective->optimum() + config.init_radius * dir);
    const std::vector<int> all{0};
    initial_losses.push_back(objective->Loss(starts.back(), all));
  }

  std::vector<QuadraticStudyResult> results;
  for (const std::string& name : config.methods) {
    const StudyMethod method = MakeStudyMethod(name);

    double best_value = grid.front();
    double best_median_drop = std::numeric_limits<double>::infinity();
    double best_median_iters = static_cast<double>(config.max_iterations);
    int best_reached = 0;

    for (double value : grid) {
      std::vector<double> drops;
      std::vector<double> iters;
      int reached = 0;
      for (int k = 0; k < config.seeds; ++k) {
        RunResult run;
        const std::uint64_t seed = MixSeed(config.base_seed, 1000 + static_cast<std::uint64_t>(k));
        if (method.is_tr) {
          TRConfig cfg = method.tr;
          cfg.delta0 = value;
          cfg.delta_max = std::max(cfg.delta_max, value);
          cfg.seed = seed;
          run = TrMinimize(*objective, starts[static_cast<std::size_t>(k)], cfg, stopping);
        } else {
          FirstOrderConfig cfg = method.fo;
          cfg.eta = value;
          cfg.seed = seed;
          run = FirstOrderRun(*objective, starts[static_cast<std::size_t>(k)], cfg, stopping);
        }

        const std::vector<int> all{0};
        const double l0 = initial_losses[static_cast<std::size_t>(k)];
        const double final_loss = objective->Loss(run.w, all);
        double drop = std::log10(std::max(final_loss, 1e-300) / l0);
        if (!std::isfinite(drop)) drop = std::numeric_limits<double>::infinity();
        drops.push_back(drop);

        // First iteration whose recorded loss already meets the target; the
        // final iterate counts as one more step past the last record.
        double hit = static_cast<double>(config.max_iterations);
        bool found = false;
        for (const IterationRecord& r : run.trace) {
          if (std::log10(std::max(r.loss_batch, 1e-300) / l0) <= config.target_log10_drop) {
            hit = static_cast<double>(r.iteration);
            found = true;
            break;
          }
        }
        if (!found && drop <= config.target_log10_drop) {
          hit = static_cast<double>(run.trace.size());
          found = true;
        }
        if (found) ++reached;
        iters.push_back(hit);
      }

      const double median_drop = Median(drops);
      if (median_drop < best_median_drop) {
        best_median_drop = median_drop;
        best_median_iters = Median(iters);
        best_value = value;
        best_reached = reached;
      }
    }

    QuadraticStudyResult result;
    result.method = name;
    result.tuned_value = best_value;
    result.median_iterations = best_median_iters;
    result.median_final_log10_drop = best_median_drop;
    result.reached_target = best_reached;
    results.push_back(result);
  }
  return results;
}

std::string StudyResultsToJson(const std::vector<QuadraticStudyResult>& results) {
  json arr = json::array();
  for (const QuadraticStudyResult& r : results) {
    json j;
    j["method"] = r.method;
    j["tuned_value"] = r.tuned_value;
    j["median_iterations"] = r.median_iterations;
    j["median_final_log10_drop"] =
        std::isfinite(r.median_final_log10_drop) ? json(r.median_final_log10_drop) : json();
    j["reached_target"] = r.reached_target;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace etr
