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

#ifndef ETR_PROBLEMS_HPP_
#define ETR_PROBLEMS_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "etr/data.hpp"
#include "etr/objective.hpp"

namespace etr {

// ---------------------------------------------------------------------------
// Convex quadratic test problem L(w) = 1/2 (w - w*)' H (w - w*).

enum class RotationKind { kAxisAligned, kRandomOrthogonal };

struct QuadraticSpec {
  Eigen::Index dim = 2;
  double kappa = 1.0;  // target condition number, eigenvalues log-spaced in [1, kappa]
  RotationKind rotation = RotationKind::kAxisAligned;
  std::uint64_t rotation_seed = 0;
  Eigen::VectorXd optimum;  // defaults to the origin
};

class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(const QuadraticSpec& spec);

  Eigen::Index dim() const override { return hessian_.rows(); }
  Eigen::Index num_samples() const override { return 1; }
  double Loss(const Eigen::VectorXd& w, std::span<const int> batch) const override;
  Eigen::VectorXd Grad(const Eigen::VectorXd& w, std::span<const int> batch) const override;
  Eigen::VectorXd Hvp(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                      std::span<const int> batch) const override;

  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const Eigen::VectorXd& optimum() const { return optimum_; }

 private:
  Eigen::MatrixXd hessian_;
  Eigen::VectorXd optimum_;
};

std::unique_ptr<QuadraticObjective> MakeQuadratic(const QuadraticSpec& spec);

// ---------------------------------------------------------------------------
// Fully-connected network trained from scratch; gradients by backprop and
// exact Hessian-vector products by the forward-over-reverse R-operator.

enum class Activation { kTanh, kSigmoid };

// kCrossEntropy: softmax cross-entropy on integer labels.
// kPixelBce: sigmoid outputs, binary cross-entropy summed over output
//            coordinates against the input features (autoencoding).
// kSquaredError: 1/2 || output - target ||^2 against the input features,
//                with a linear output layer.
enum class LossKind { kCrossEntropy, kPixelBce, kSquaredError };

struct MlpSpec {
  std::vector<int> layer_sizes;  // input size first, output size last
  Activation activation = Activation::kTanh;
  LossKind loss = LossKind::kCrossEntropy;
  std::uint64_t init_seed = 0;
};

class MlpObjective final : public Objective {
 public:
  // The dataset is copied in.  Cross-entropy requires labels; the other
  // losses reconstruct the input features.
  MlpObjective(const MlpSpec& spec, const Dataset& data);

  Eigen::Index dim() const override { return dim_; }
  Eigen::Index num_samples() const override { return features_.cols(); }
  double Loss(const Eigen::VectorXd& w, std::span<const int> batch) const override;
  Eigen::VectorXd Grad(const Eigen::VectorXd& w, std::span<const int> batch) const override;
  Eigen::VectorXd Hvp(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                      std::span<const int> batch) const override;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, drawn
  // from the spec's init_seed (or an explicit seed).
  Eigen::VectorXd InitialParameters() const;
  Eigen::VectorXd InitialParameters(std::uint64_t seed) const;

  // Fraction of batch samples whose argmax output matches the label
  // (cross-entropy only).
  double Accuracy(const Eigen::VectorXd& w, std::span<const int> batch) const;

  const MlpSpec& spec() const { return spec_; }

 private:
  struct Workspace;
  void Forward(const Eigen::VectorXd& w, std::span<const int> batch, Workspace& ws) const;

  MlpSpec spec_;
  Eigen::MatrixXd features_;  // feature_dim x n, column per sample
  Eigen::VectorXi labels_;
  Eigen::Index dim_ = 0;
  std::vector<Eigen::Index> weight_offsets_;
  std::vector<Eigen::Index> bias_offsets_;
};

std::unique_ptr<MlpObjective> MakeMlp(const MlpSpec& spec, const Dataset& data);

// ---------------------------------------------------------------------------
// Central-difference derivative probes used to cross-check analytic code.

Eigen::VectorXd FdGradient(const Objective& objective, const Eigen::VectorXd& w,
                           std::span<const int> batch, double h = 1e-6);
Eigen::VectorXd FdHvp(const Objective& objective, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& v, std::span<const int> batch, double h = 1e-5);

}  // namespace etr

#endif  // ETR_PROBLEMS_HPP_
