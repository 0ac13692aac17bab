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

#include "etr/ellipsoid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace etr {
namespace {

constexpr Eigen::Index kMaxFullDim = 512;

void RequireFinite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(fmt::format("{}: contains non-finite values", what));
  }
}

}  // namespace

EllipsoidMatrix EllipsoidMatrix::Uniform(Eigen::Index dim) {
  if (dim < 1) {
    throw std::invalid_argument(fmt::format("uniform ellipsoid: dim must be >= 1, got {}", dim));
  }
  EllipsoidMatrix a;
  a.shape_ = EllipsoidShape::kUniform;
  a.dim_ = dim;
  a.epsilon_ = 1.0;
  return a;
}

EllipsoidMatrix EllipsoidMatrix::Diagonal(Eigen::VectorXd entries, double epsilon,
                                          SpectralExponent exponent) {
  if (entries.size() < 1) {
    throw std::invalid_argument("diagonal ellipsoid: entries must be non-empty");
  }
  RequireFinite(entries, "diagonal ellipsoid: entries");
  const double min_entry = entries.minCoeff();
  if (min_entry <= 0.0) {
    throw std::invalid_argument(
        fmt::format("diagonal ellipsoid: entries must be positive, min is {}", min_entry));
  }
  if (epsilon < 0.0) epsilon = min_entry;
  if (!std::isfinite(epsilon)) {
    throw std::invalid_argument("diagonal ellipsoid: epsilon must be finite");
  }
  if (min_entry < epsilon * (1.0 - 1e-15)) {
    throw std::invalid_argument(fmt::format(
        "diagonal ellipsoid: entries must be >= epsilon, min entry {} < epsilon {}", min_entry,
        epsilon));
  }
  EllipsoidMatrix a;
  a.shape_ = EllipsoidShape::kDiagonal;
  a.exponent_ = exponent;
  a.dim_ = entries.size();
  a.epsilon_ = epsilon;
  a.entries_sqrt_ = entries.cwiseSqrt();
  a.entries_ = std::move(entries);
  return a;
}

EllipsoidMatrix EllipsoidMatrix::Full(Eigen::MatrixXd matrix, double epsilon,
                                      SpectralExponent exponent) {
  if (matrix.rows() != matrix.cols() || matrix.rows() < 1) {
    throw std::invalid_argument(fmt::format("full ellipsoid: matrix must be square, got {}x{}",
                                            matrix.rows(), matrix.cols()));
  }
  if (matrix.rows() > kMaxFullDim) {
    throw std::invalid_argument(fmt::format(
        "full ellipsoid: dim {} exceeds the cap of {} for dense geometries", matrix.rows(),
        kMaxFullDim));
  }
  if (!matrix.allFinite()) {
    throw std::invalid_argument("full ellipsoid: matrix contains non-finite values");
  }
  const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw std::invalid_argument(fmt::format(
        "full ellipsoid: matrix is not symmetric (max asymmetry {:.3e}, scale {:.3e})", asym,
        scale));
  }
  matrix = 0.5 * (matrix + matrix.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix);
  if (eig.info() != Eigen::Success) {
    throw std::invalid_argument("full ellipsoid: eigendecomposition failed");
  }
  const double lambda_min = eig.eigenvalues().minCoeff();
  if (lambda_min <= 0.0) {
    throw std::invalid_argument(fmt::format(
        "full ellipsoid: matrix must be positive definite, lambda_min is {:.3e}", lambda_min));
  }
  if (epsilon < 0.0) epsilon = lambda_min;
  if (!std::isfinite(epsilon)) {
    throw std::invalid_argument("full ellipsoid: epsilon must be finite");
  }
  if (lambda_min < epsilon - 1e-12) {
    throw std::invalid_argument(
        fmt::format("full ellipsoid: lambda_min {:.6e} is below epsilon {:.6e}", lambda_min,
                    epsilon));
  }
  EllipsoidMatrix a;
  a.shape_ = EllipsoidShape::kFull;
  a.exponent_ = exponent;
  a.dim_ = matrix.rows();
  a.epsilon_ = epsilon;
  a.matrix_ = std::move(matrix);
  a.eigvecs_ = eig.eigenvectors();
  a.eigvals_ = eig.eigenvalues();
  a.eigvals_sqrt_ = a.eigvals_.cwiseSqrt();
  return a;
}

const Eigen::VectorXd& EllipsoidMatrix::entries() const {
  if (shape_ != EllipsoidShape::kDiagonal) {
    throw std::logic_error("entries() is only available for diagonal ellipsoids");
  }
  return entries_;
}

const Eigen::MatrixXd& EllipsoidMatrix::matrix() const {
  if (shape_ != EllipsoidShape::kFull) {
    throw std::logic_error("matrix() is only available for full ellipsoids");
  }
  return matrix_;
}

void EllipsoidMatrix::CheckDim(const Eigen::VectorXd& v) const {
  if (v.size() != dim_) {
    throw std::invalid_argument(
        fmt::format("ellipsoid: vector has dim {}, expected {}", v.size(), dim_));
  }
}

Eigen::VectorXd EllipsoidMatrix::Apply(const Eigen::VectorXd& v) const {
  CheckDim(v);
  switch (shape_) {
    case EllipsoidShape::kUniform:
      return v;
    case EllipsoidShape::kDiagonal:
      return entries_.cwiseProduct(v);
    case EllipsoidShape::kFull:
      return eigvecs_ * eigvals_.cwiseProduct(eigvecs_.transpose() * v);
  }
  throw std::logic_error("unreachable");
}

Eigen::VectorXd EllipsoidMatrix::Solve(const Eigen::VectorXd& v) const {
  CheckDim(v);
  switch (shape_) {
    case EllipsoidShape::kUniform:
      return v;
    case EllipsoidShape::kDiagonal:
      return v.cwiseQuotient(entries_);
    case EllipsoidShape::kFull:
      return eigvecs_ * (eigvecs_.transpose() * v).cwiseQuotient(eigvals_);
  }
  throw std::logic_error("unreachable");
}

Eigen::VectorXd EllipsoidMatrix::ApplySqrt(const Eigen::VectorXd& v) const {
  CheckDim(v);
  switch (shape_) {
    case EllipsoidShape::kUniform:
      return v;
    case EllipsoidShape::kDiagonal:
      return entries_sqrt_.cwiseProduct(v);
    case EllipsoidShape::kFull:
      return eigvecs_ * eigvals_sqrt_.cwiseProduct(eigvecs_.transpose() * v);
  }
  throw std::logic_error("unreachable");
}

Eigen::VectorXd EllipsoidMatrix::SolveSqrt(const Eigen::VectorXd& v) const {
  CheckDim(v);
  switch (shape_) {
    case EllipsoidShape::kUniform:
      return v;
    case EllipsoidShape::kDiagonal:
      return v.cwiseQuotient(entries_sqrt_);
    case EllipsoidShape::kFull:
      return eigvecs_ * (eigvecs_.transpose() * v).cwiseQuotient(eigvals_sqrt_);
  }
  throw std::logic_error("unreachable");
}

std::pair<double, double> EllipsoidMatrix::EigenBounds() const {
  switch (shape_) {
    case EllipsoidShape::kUniform:
      return {1.0, 1.0};
    case EllipsoidShape::kDiagonal:
      return {entries_.minCoeff(), entries_.maxCoeff()};
    case EllipsoidShape::kFull:
      return {eigvals_.minCoeff(), eigvals_.maxCoeff()};
  }
  throw std::logic_error("unreachable");
}

double ANorm(const Eigen::VectorXd& w, const EllipsoidMatrix& a) {
  if (w.size() != a.dim()) {
    throw std::invalid_argument(
        fmt::format("ellipsoid: vector has dim {}, expected {}", w.size(), a.dim()));
  }
  switch (a.shape()) {
    case EllipsoidShape::kUniform:
      return w.norm();
    case EllipsoidShape::kDiagonal:
      return std::sqrt(a.entries().cwiseProduct(w).dot(w));
    case EllipsoidShape::kFull:
      // ||diag(sqrt(lambda)) U' w||, non-negative by construction.
      return a.ApplySqrt(w).norm();
  }
  throw std::logic_error("unreachable");
}

double AInvNorm(const Eigen::VectorXd& w, const EllipsoidMatrix& a) {
  if (w.size() != a.dim()) {
    throw std::invalid_argument(
        fmt::format("ellipsoid: vector has dim {}, expected {}", w.size(), a.dim()));
  }
  switch (a.shape()) {
    case EllipsoidShape::kUniform:
      return w.norm();
    case EllipsoidShape::kDiagonal:
      return std::sqrt(w.cwiseQuotient(a.entries()).dot(w));
    case EllipsoidShape::kFull:
      return a.SolveSqrt(w).norm();
  }
  throw std::logic_error("unreachable");
}

GradientHistory::GradientHistory(HistoryMode mode, Eigen::Index dim, double beta)
    : mode_(mode), dim_(dim), beta_(beta) {
  if (dim < 1) {
    throw std::invalid_argument(fmt::format("gradient history: dim must be >= 1, got {}", dim));
  }
  const bool is_full = mode == HistoryMode::kRmsFull || mode == HistoryMode::kAdaFull;
  const bool is_rms = mode == HistoryMode::kRmsDiag || mode == HistoryMode::kRmsFull;
  if (is_full && dim > kMaxFullDim) {
    throw std::invalid_argument(fmt::format(
        "gradient history: dim {} exceeds the cap of {} for full modes", dim, kMaxFullDim));
  }
  if (is_rms && !(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument(
        fmt::format("gradient history: beta must be in (0, 1) for Rms modes, got {}", beta));
  }
  if (is_full) {
    full_ = Eigen::MatrixXd::Zero(dim, dim);
  } else {
    diag_ = Eigen::VectorXd::Zero(dim);
  }
}

const Eigen::VectorXd& GradientHistory::diag_accumulator() const {
  if (mode_ != HistoryMode::kRmsDiag && mode_ != HistoryMode::kAdaDiag) {
    throw std::logic_error("diag_accumulator() is only available for diag modes");
  }
  return diag_;
}

const Eigen::MatrixXd& GradientHistory::full_accumulator() const {
  if (mode_ != HistoryMode::kRmsFull && mode_ != HistoryMode::kAdaFull) {
    throw std::logic_error("full_accumulator() is only available for full modes");
  }
  return full_;
}

void GradientHistory::Update(const Eigen::VectorXd& g) {
  if (g.size() != dim_) {
    throw std::invalid_argument(
        fmt::format("gradient history: gradient has dim {}, expected {}", g.size(), dim_));
  }
  RequireFinite(g, "gradient history: gradient");
  switch (mode_) {
    case HistoryMode::kRmsDiag:
      diag_ = beta_ * diag_ + (1.0 - beta_) * g.cwiseAbs2();
      break;
    case HistoryMode::kAdaDiag:
      diag_ += g.cwiseAbs2();
      break;
    case HistoryMode::kRmsFull:
      full_ = beta_ * full_ + (1.0 - beta_) * (g * g.transpose());
      break;
    case HistoryMode::kAdaFull:
      full_ += g * g.transpose();
      break;
  }
  ++step_count_;
}

EllipsoidMatrix BuildEllipsoid(const GradientHistory& history, double epsilon,
                               SpectralExponent exponent) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument(
        fmt::format("build ellipsoid: epsilon must be finite and >= 0, got {}", epsilon));
  }
  const bool half = exponent == SpectralExponent::kHalf;
  const double floor = half ? std::sqrt(epsilon) : epsilon;
  switch (history.mode()) {
    case HistoryMode::kRmsDiag:
    case HistoryMode::kAdaDiag: {
      Eigen::VectorXd entries = history.diag_accumulator().array() + epsilon;
      if (half) entries = entries.cwiseSqrt();
      return EllipsoidMatrix::Diagonal(std::move(entries), floor, exponent);
    }
    case HistoryMode::kRmsFull:
    case HistoryMode::kAdaFull: {
      // Eigendecompose the accumulator and shift the spectrum by epsilon, so
      // the floor holds exactly instead of up to eigensolver rounding.  The
      // accumulator is a sum/average of outer products, hence PSD up to
      // rounding; tiny negative eigenvalues are clamped to zero.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(history.full_accumulator());
      if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("build ellipsoid: eigendecomposition failed");
      }
      Eigen::VectorXd lambda =
          eig.eigenvalues().cwiseMax(0.0).array() + epsilon;
      if (half) lambda = lambda.cwiseSqrt();
      if (lambda.minCoeff() <= 0.0) {
        throw std::invalid_argument(
            "build ellipsoid: accumulator plus epsilon is not positive definite");
      }
      Eigen::MatrixXd m =
          eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
      m = 0.5 * (m + m.transpose()).eval();
      return EllipsoidMatrix::Full(std::move(m), floor, exponent);
    }
  }
  throw std::logic_error("unreachable");
}

EquivalenceCertificate CertifyUniformEquivalence(const EllipsoidMatrix& a, double l_h_sq,
                                                 double beta, std::int64_t step_count,
                                                 double epsilon) {
  if (!std::isfinite(l_h_sq) || l_h_sq <= 0.0) {
    throw std::invalid_argument(
        fmt::format("certificate: l_h_sq must be finite and positive, got {}", l_h_sq));
  }
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument(fmt::format("certificate: beta must be in (0, 1), got {}", beta));
  }
  if (step_count < 0 || !std::isfinite(epsilon)) {
    throw std::invalid_argument("certificate: step_count must be >= 0 and epsilon finite");
  }

  // Geometric-series weight of the step_count + 1 most recent gradients.
  const double weight = 1.0 - std::pow(beta, static_cast<double>(step_count) + 1.0);
  EquivalenceCertificate cert;
  cert.lambda_min_bound = epsilon;
  cert.lambda_max_bound = weight * l_h_sq + epsilon;

  if (epsilon <= 0.0) {
    // No positive floor: the lower spectral bound degenerates and no finite
    // equivalence constant exists.
    cert.zeta = std::numeric_limits<double>::infinity();
    cert.mu = std::numeric_limits<double>::infinity();
    cert.valid = false;
    return cert;
  }

  cert.zeta = std::max(1.0 / epsilon, cert.lambda_max_bound);

  // Validity criterion: eps^2 + (1 - beta^{t+1}) L^2 eps - 1 <= 0, evaluated
  // directly to dodge the cancellation in the closed-form root
  // eps_max = (sqrt(L^4 + 4) - L^2) / 2.  A few ulps of slack keep boundary
  // instances on the valid side.
  const double cross = weight * l_h_sq * epsilon;
  const double lhs = epsilon * epsilon + cross - 1.0;
  const double slack = 8e-16 * (1.0 + cross + epsilon * epsilon);
  cert.valid = lhs <= slack;

  if (a.exponent() == SpectralExponent::kHalf) {
    cert.lambda_min_bound = std::sqrt(cert.lambda_min_bound);
    cert.lambda_max_bound = std::sqrt(cert.lambda_max_bound);
    cert.zeta = std::sqrt(cert.zeta);
  }
  cert.mu = std::sqrt(cert.zeta);
  return cert;
}

std::string ToJson(const EllipsoidMatrix& a) {
  nlohmann::json j;
  j["epsilon"] = a.epsilon();
  j["exponent"] = a.exponent() == SpectralExponent::kHalf ? "half" : "one";
  switch (a.shape()) {
    case EllipsoidShape::kUniform:
      j["shape"] = "uniform";
      j["dim"] = a.dim();
      break;
    case EllipsoidShape::kDiagonal: {
      j["shape"] = "diag";
      j["entries"] = std::vector<double>(a.entries().begin(), a.entries().end());
      break;
    }
    case EllipsoidShape::kFull: {
      j["shape"] = "full";
      const Eigen::MatrixXd& m = a.matrix();
      std::vector<std::vector<double>> rows(m.rows());
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        rows[i].assign(m.row(i).begin(), m.row(i).end());
      }
      j["matrix"] = rows;
      break;
    }
  }
  return j.dump();
}

EllipsoidMatrix EllipsoidFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("ellipsoid json: parse error: {}", e.what()));
  }
  try {
    const std::string shape = j.at("shape").get<std::string>();
    SpectralExponent exponent = SpectralExponent::kOne;
    if (j.contains("exponent")) {
      const std::string e = j.at("exponent").get<std::string>();
      if (e == "half") {
        exponent = SpectralExponent::kHalf;
      } else if (e != "one") {
        throw std::invalid_argument(
            fmt::format("ellipsoid json: unknown exponent \"{}\"", e));
      }
    }
    if (shape == "uniform") {
      return EllipsoidMatrix::Uniform(j.at("dim").get<Eigen::Index>());
    }
    const double epsilon = j.contains("epsilon") ? j.at("epsilon").get<double>() : -1.0;
    if (shape == "diag") {
      const auto entries = j.at("entries").get<std::vector<double>>();
      return EllipsoidMatrix::Diagonal(
          Eigen::Map<const Eigen::VectorXd>(entries.data(), entries.size()), epsilon, exponent);
    }
    if (shape == "full") {
      const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
      const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd m(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != n) {
          throw std::invalid_argument(
              fmt::format("ellipsoid json: matrix row {} has {} columns, expected {}", i,
                          rows[i].size(), n));
        }
        m.row(i) = Eigen::Map<const Eigen::VectorXd>(rows[i].data(), n);
      }
      return EllipsoidMatrix::Full(std::move(m), epsilon, exponent);
    }
    throw std::invalid_argument(fmt::format("ellipsoid json: unknown shape \"{}\"", shape));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("ellipsoid json: {}", e.what()));
  }
}

}  // namespace etr
