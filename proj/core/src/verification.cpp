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

#include "etr/verification.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "etr/ellipsoid.hpp"
#include "etr/first_order.hpp"
#include "etr/problems.hpp"
#include "etr/subproblem.hpp"

namespace etr {
namespace {

constexpr int kMaxNotes = 10;

void Check(VerificationReport& report, bool ok, const std::string& note) {
  ++report.checks;
  if (!ok) {
    ++report.failures;
    if (static_cast<int>(report.notes.size()) < kMaxNotes) {
      report.notes.push_back(note);
    }
  }
}

Eigen::VectorXd RandomGaussian(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

double LogUniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

Eigen::MatrixXd RandomOrthogonal(std::mt19937_64& rng, Eigen::Index d) {
  Eigen::MatrixXd gauss(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) gauss(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  return qr.householderQ();
}

// Uniform / diagonal / dense SPD geometry with eigenvalues in [0.05, 20].
EllipsoidMatrix RandomGeometry(std::mt19937_64& rng, Eigen::Index d, int shape) {
  if (shape == 0) return EllipsoidMatrix::Uniform(d);
  Eigen::VectorXd lambda(d);
  for (Eigen::Index i = 0; i < d; ++i) lambda[i] = LogUniform(rng, 0.05, 20.0);
  if (shape == 1) return EllipsoidMatrix::Diagonal(lambda);
  const Eigen::MatrixXd q = RandomOrthogonal(rng, d);
  Eigen::MatrixXd m = q * lambda.asDiagonal() * q.transpose();
  m = 0.5 * (m + m.transpose()).eval();
  return EllipsoidMatrix::Full(m);
}

}  // namespace

VerificationReport VerifyFirstOrder() {
  VerificationReport report;
  report.suite = "firstorder";
  std::mt19937_64 rng(20240817ULL);
  std::uniform_int_distribution<int> dim_pick(1, 10);
  std::uniform_int_distribution<int> shape_pick(0, 2);

  for (int i = 0; i < 1000; ++i) {
    const Eigen::Index d = dim_pick(rng);
    const EllipsoidMatrix a = RandomGeometry(rng, d, shape_pick(rng));
    Eigen::VectorXd g = RandomGaussian(rng, d);
    while (g.norm() < 1e-10) g = RandomGaussian(rng, d);
    const double eta = LogUniform(rng, 1e-3, 1.0);

    // The linear subproblem at radius eta ||g||_{A^{-1}} must reproduce the
    // preconditioned step exactly.
    const double radius = eta * AInvNorm(g, a);
    const Eigen::VectorXd tr_step = FirstOrderTrStep(g, a, radius);
    const Eigen::VectorXd pre_step = PreconditionedStep(g, a, eta).step;

    const double rel = (tr_step - pre_step).norm() / std::max(pre_step.norm(), 1e-300);
    Check(report, rel <= 1e-10,
          fmt::format("instance {}: step mismatch, relative error {:.3e}", i, rel));
    Check(report, VerifyKkt(tr_step, g, a, eta, 1e-8),
          fmt::format("instance {}: kkt certificate failed", i));
  }
  report.notes.push_back(fmt::format("{} randomized instances", 1000));
  report.passed = report.failures == 0;
  return report;
}

VerificationReport VerifySpectrum() {
  VerificationReport report;
  report.suite = "spectrum";
  std::mt19937_64 rng(7ULL);
  std::uniform_int_distribution<int> dim_pick(2, 20);
  std::uniform_int_distribution<int> t_pick(1, 200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double betas[3] = {0.5, 0.9, 0.99};
  const double epsilons[3] = {1e-8, 1e-4, 1e-2};

  for (int i = 0; i < 100; ++i) {
    const Eigen::Index d = dim_pick(rng);
    const int t = t_pick(rng);
    const double beta = betas[i % 3];
    const double epsilon = epsilons[(i / 3) % 3];
    const double l_bound = LogUniform(rng, 0.5, 100.0);
    const HistoryMode mode = i % 2 == 0 ? HistoryMode::kRmsDiag : HistoryMode::kRmsFull;

    GradientHistory history(mode, d, beta);
    for (int s = 0; s < t; ++s) {
      Eigen::VectorXd g = RandomGaussian(rng, d);
      if (g.norm() < 1e-12) g.setOnes();
      g *= l_bound * unit(rng) / g.norm();  // ||g|| <= l_bound
      history.Update(g);
    }

    const EllipsoidMatrix a = BuildEllipsoid(history, epsilon, SpectralExponent::kOne);
    const auto [lambda_min, lambda_max] = a.EigenBounds();
    const double upper =
        (1.0 - std::pow(beta, static_cast<double>(t) + 1.0)) * l_bound * l_bound + epsilon;

    Check(report, lambda_min >= epsilon * (1.0 - 1e-9) - 1e-12,
          fmt::format("sequence {}: lambda_min {:.6e} below floor {:.6e}", i, lambda_min,
                      epsilon));
    Check(report, lambda_max <= upper * (1.0 + 1e-9) + 1e-12,
          fmt::format("sequence {}: lambda_max {:.6e} above bound {:.6e}", i, lambda_max, upper));
  }

  // Validity predicate spot checks at the operating floor 1e-8: gradients up
  // to ||g||^2 = 1e6 admit the equivalence, 2e8 does not.
  GradientHistory probe(HistoryMode::kRmsDiag, 2, 0.9);
  probe.Update(Eigen::Vector2d(1.0, 1.0));
  const EllipsoidMatrix a = BuildEllipsoid(probe, 1e-8, SpectralExponent::kOne);
  const EquivalenceCertificate ok = CertifyUniformEquivalence(a, 1e6, 0.9, 2000, 1e-8);
  const EquivalenceCertificate bad = CertifyUniformEquivalence(a, 2e8, 0.9, 2000, 1e-8);
  Check(report, ok.valid, "certificate: l^2 = 1e6 at eps = 1e-8 should be valid");
  Check(report, !bad.valid, "certificate: l^2 = 2e8 at eps = 1e-8 should be invalid");

  report.notes.push_back("100 randomized accumulator sequences plus predicate spot checks");
  report.passed = report.failures == 0;
  return report;
}

VerificationReport VerifySteihaug() {
  VerificationReport report;
  report.suite = "steihaug";
  std::mt19937_64 rng(99ULL);
  std::uniform_int_distribution<int> dim_pick(2, 20);
  std::uniform_int_distribution<int> shape_pick(0, 2);
  std::uniform_real_distribution<double> curv_pick(-2.0, 4.0);
  std::uniform_real_distribution<double> scale_pick(0.1, 2.0);
  const double kappas[3] = {0.01, 0.1, 0.5};

  for (int i = 0; i < 1000; ++i) {
    const Eigen::Index d = dim_pick(rng);
    const EllipsoidMatrix a = RandomGeometry(rng, d, shape_pick(rng));

    Eigen::VectorXd lambda(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      lambda[k] = curv_pick(rng);
      if (i % 3 == 0) lambda[k] = std::abs(lambda[k]) + 0.1;  // convex share
    }
    const Eigen::MatrixXd q = RandomOrthogonal(rng, d);
    Eigen::MatrixXd b = q * lambda.asDiagonal() * q.transpose();
    b = 0.5 * (b + b.transpose()).eval();

    Eigen::VectorXd g = RandomGaussian(rng, d);
    while (g.norm() < 1e-10) g = RandomGaussian(rng, d);
    g *= scale_pick(rng);
    const double delta = LogUniform(rng, 1e-3, 2.0);
    const double kappa = kappas[i % 3];

    QuadraticModel model;
    model.gradient = g;
    model.hvp = [&b](const Eigen::VectorXd& v) { return (b * v).eval(); };

    const SubproblemResult st = SolveSteihaug(model, a, delta, kappa);
    const SubproblemResult ex = SolveExact(b, g, a, delta);
    const double cauchy = CauchyDecrease(model, a, delta);
    const double tol = 1e-10 * std::max(1.0, std::abs(ex.model_decrease));

    Check(report, ANorm(st.step, a) <= delta * (1.0 + 1e-9),
          fmt::format("instance {}: steihaug step infeasible ({:.6e} > {:.6e})", i,
                      ANorm(st.step, a), delta));
    Check(report, ANorm(ex.step, a) <= delta * (1.0 + 1e-9),
          fmt::format("instance {}: exact step infeasible", i));
    Check(report, cauchy <= st.model_decrease + tol,
          fmt::format("instance {}: cauchy {:.12e} exceeds steihaug {:.12e}", i, cauchy,
                      st.model_decrease));
    Check(report, st.model_decrease <= ex.model_decrease + tol,
          fmt::format("instance {}: steihaug {:.12e} exceeds exact {:.12e}", i,
                      st.model_decrease, ex.model_decrease));
  }
  report.notes.push_back("1000 randomized subproblems, dominance and feasibility");
  report.passed = report.failures == 0;
  return report;
}

VerificationReport VerifyDerivatives() {
  VerificationReport report;
  report.suite = "derivatives";
  std::mt19937_64 rng(4242ULL);

  struct NetCase {
    MlpSpec spec;
    int probes;
  };
  std::vector<NetCase> cases;
  cases.push_back({{{7, 11, 5, 3}, Activation::kTanh, LossKind::kCrossEntropy, 21}, 5});
  cases.push_back({{{6, 10, 6}, Activation::kSigmoid, LossKind::kPixelBce, 22}, 5});
  cases.push_back({{{9, 8, 9}, Activation::kTanh, LossKind::kSquaredError, 23}, 5});
  cases.push_back({{{20, 40, 20, 10}, Activation::kSigmoid, LossKind::kCrossEntropy, 24}, 5});

  int case_idx = 0;
  for (const NetCase& c : cases) {
    RandomRegressionSpec data_spec;
    data_spec.dim = c.spec.layer_sizes.front();
    data_spec.n = 32;
    data_spec.seed = 1000 + static_cast<std::uint64_t>(case_idx);
    Dataset data = MakeSynthetic(data_spec);
    if (c.spec.loss == LossKind::kCrossEntropy) {
      data.labels.resize(data.n());
      std::uniform_int_distribution<int> label_pick(0, c.spec.layer_sizes.back() - 1);
      for (Eigen::Index i = 0; i < data.n(); ++i) data.labels[i] = label_pick(rng);
    }

    const auto net = MakeMlp(c.spec, data);
    const Eigen::VectorXd w = net->InitialParameters();
    const std::vector<int> batch{0, 1, 2, 3, 4, 5, 6, 7};

    const Eigen::VectorXd grad = net->Grad(w, batch);
    const Eigen::VectorXd grad_fd = FdGradient(*net, w, batch, 1e-6);
    const double grad_rel = (grad - grad_fd).cwiseAbs().maxCoeff() /
                            std::max(1e-8, grad.cwiseAbs().maxCoeff());
    Check(report, grad_rel < 1e-6,
          fmt::format("net {}: gradient mismatch, relative error {:.3e}", case_idx, grad_rel));

    for (int p = 0; p < c.probes; ++p) {
      const Eigen::VectorXd v = RandomGaussian(rng, net->dim());
      const Eigen::VectorXd hv = net->Hvp(w, v, batch);
      const Eigen::VectorXd hv_fd = FdHvp(*net, w, v, batch, 1e-5);
      const double rel =
          (hv - hv_fd).cwiseAbs().maxCoeff() / std::max(1e-8, hv.cwiseAbs().maxCoeff());
      Check(report, rel < 1e-5,
            fmt::format("net {} probe {}: hvp mismatch, relative error {:.3e}", case_idx, p,
                        rel));
    }
    ++case_idx;
  }
  report.notes.push_back("4 networks, 4 gradient checks, 20 hvp probes");
  report.passed = report.failures == 0;
  return report;
}

std::vector<std::string> VerificationSuites() {
  return {"firstorder", "spectrum", "steihaug", "derivatives"};
}

VerificationReport RunVerification(const std::string& suite) {
  if (suite == "firstorder") return VerifyFirstOrder();
  if (suite == "spectrum") return VerifySpectrum();
  if (suite == "steihaug") return VerifySteihaug();
  if (suite == "derivatives") return VerifyDerivatives();
  throw std::invalid_argument(
      fmt::format("unknown verification suite \"{}\" (known: firstorder, spectrum, steihaug, "
                  "derivatives)",
                  suite));
}

std::string ReportToJson(const VerificationReport& report) {
  nlohmann::json j;
  j["suite"] = report.suite;
  j["passed"] = report.passed;
  j["checks"] = report.checks;
  j["failures"] = report.failures;
  j["notes"] = report.notes;
  return j.dump(2);
}

}  // namespace etr
