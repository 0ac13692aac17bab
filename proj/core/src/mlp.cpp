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

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "etr/problems.hpp"

namespace etr {
namespace {

// Activation derivatives expressed through the activation value itself, so
// the backward passes never need the preactivations.
double ActPrime(Activation act, double a) {
  return act == Activation::kTanh ? 1.0 - a * a : a * (1.0 - a);
}

double ActSecond(Activation act, double a) {
  return act == Activation::kTanh ? -2.0 * a * (1.0 - a * a) : a * (1.0 - a) * (1.0 - 2.0 * a);
}

double StableSigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// Per-call forward state.  a[0] is the gathered input batch; a[l] for
// 0 < l < L holds hidden activations; z_top the output preactivations and
// `out` their loss-specific transform (softmax probabilities, sigmoids, or
// z_top itself for the squared error).
struct MlpObjective::Workspace {
  std::vector<Eigen::MatrixXd> a;
  Eigen::MatrixXd z_top;
  Eigen::MatrixXd out;
  Eigen::VectorXi y;
};

MlpObjective::MlpObjective(const MlpSpec& spec, const Dataset& data) : spec_(spec) {
  const std::size_t layers = spec.layer_sizes.size();
  if (layers < 2) {
    throw std::invalid_argument("mlp: layer_sizes needs at least input and output");
  }
  for (int s : spec.layer_sizes) {
    if (s < 1) {
      throw std::invalid_argument(fmt::format("mlp: layer size {} must be >= 1", s));
    }
  }
  if (data.feature_dim() != spec.layer_sizes.front()) {
    throw std::invalid_argument(fmt::format("mlp: input layer has {} units but features have {}",
                                            spec.layer_sizes.front(), data.feature_dim()));
  }
  const int out_units = spec.layer_sizes.back();
  if (spec.loss == LossKind::kCrossEntropy) {
    if (data.labels.size() != data.n()) {
      throw std::invalid_argument("mlp: cross-entropy needs one label per sample");
    }
    if (data.labels.size() > 0 &&
        (data.labels.minCoeff() < 0 || data.labels.maxCoeff() >= out_units)) {
      throw std::invalid_argument(
          fmt::format("mlp: labels must lie in [0, {}) for {} output units",
                      out_units, out_units));
    }
  } else if (out_units != data.feature_dim()) {
    throw std::invalid_argument(
        fmt::format("mlp: reconstruction losses need output size {} == feature dim {}",
                    out_units, data.feature_dim()));
  }

  features_ = data.features.transpose();
  labels_ = data.labels;

  Eigen::Index offset = 0;
  for (std::size_t l = 1; l < layers; ++l) {
    const Eigen::Index rows = spec.layer_sizes[l];
    const Eigen::Index cols = spec.layer_sizes[l - 1];
    weight_offsets_.push_back(offset);
    offset += rows * cols;
    bias_offsets_.push_back(offset);
    offset += rows;
  }
  dim_ = offset;
}

Eigen::VectorXd MlpObjective::InitialParameters() const {
  return InitialParameters(spec_.init_seed);
}

Eigen::VectorXd MlpObjective::InitialParameters(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim_);
  for (std::size_t l = 1; l < spec_.layer_sizes.size(); ++l) {
    const Eigen::Index rows = spec_.layer_sizes[l];
    const Eigen::Index cols = spec_.layer_sizes[l - 1];
    const double limit = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    double* dst = w.data() + weight_offsets_[l - 1];
    for (Eigen::Index i = 0; i < rows * cols; ++i) dst[i] = uniform(rng);
    // Biases stay zero.
  }
  return w;
}

void MlpObjective::Forward(const Eigen::VectorXd& w, std::span<const int> batch,
                           Workspace& ws) const {
  if (w.size() != dim_) {
    throw std::invalid_argument(
        fmt::format("mlp: parameter vector has dim {}, expected {}", w.size(), dim_));
  }
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index n = num_samples();
  const std::size_t layers = spec_.layer_sizes.size();

  ws.a.assign(layers - 1, Eigen::MatrixXd());
  ws.a[0].resize(features_.rows(), b);
  ws.y.resize(spec_.loss == LossKind::kCrossEntropy ? b : 0);
  for (Eigen::Index j = 0; j < b; ++j) {
    const int idx = batch[static_cast<std::size_t>(j)];
    if (idx < 0 || idx >= n) {
      throw std::invalid_argument(
          fmt::format("mlp: batch index {} outside [0, {})", idx, n));
    }
    ws.a[0].col(j) = features_.col(idx);
    if (ws.y.size() > 0) ws.y[j] = labels_[idx];
  }

  for (std::size_t l = 1; l < layers; ++l) {
    const Eigen::Index rows = spec_.layer_sizes[l];
    const Eigen::Index cols = spec_.layer_sizes[l - 1];
    const Eigen::Map<const Eigen::MatrixXd> weight(w.data() + weight_offsets_[l - 1], rows, cols);
    const Eigen::Map<const Eigen::VectorXd> bias(w.data() + bias_offsets_[l - 1], rows);
    Eigen::MatrixXd z = weight * ws.a[l - 1];
    z.colwise() += bias;
    if (l + 1 < layers) {
      if (spec_.activation == Activation::kTanh) {
        ws.a[l] = z.array().tanh();
      } else {
        ws.a[l] = z.unaryExpr([](double v) { return StableSigmoid(v); });
      }
    } else {
      ws.z_top = std::move(z);
    }
  }

  switch (spec_.loss) {
    case LossKind::kCrossEntropy: {
      // Column-stabilized softmax.
      ws.out.resizeLike(ws.z_top);
      for (Eigen::Index j = 0; j < b; ++j) {
        const double zmax = ws.z_top.col(j).maxCoeff();
        ws.out.col(j) = (ws.z_top.col(j).array() - zmax).exp();
        ws.out.col(j) /= ws.out.col(j).sum();
      }
      break;
    }
    case LossKind::kPixelBce:
      ws.out = ws.z_top.unaryExpr([](double v) { return StableSigmoid(v); });
      break;
    case LossKind::kSquaredError:
      ws.out = ws.z_top;
      break;
  }
}

double MlpObjective::Loss(const Eigen::VectorXd& w, std::span<const int> batch) const {
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) return 0.0;
  Workspace ws;
  Forward(w, batch, ws);

  double total = 0.0;
  switch (spec_.loss) {
    case LossKind::kCrossEntropy: {
      for (Eigen::Index j = 0; j < b; ++j) {
        const double zmax = ws.z_top.col(j).maxCoeff();
        const double lse = zmax + std::log((ws.z_top.col(j).array() - zmax).exp().sum());
        total += lse - ws.z_top(ws.y[j], j);
      }
      break;
    }
    case LossKind::kPixelBce: {
      // Logit formulation: max(z, 0) - z t + log(1 + exp(-|z|)), summed over
      // pixels.
      const Eigen::MatrixXd& t = ws.a[0];
      for (Eigen::Index j = 0; j < b; ++j) {
        for (Eigen::Index i = 0; i < ws.z_top.rows(); ++i) {
          const double z = ws.z_top(i, j);
          total += std::max(z, 0.0) - z * t(i, j) + std::log1p(std::exp(-std::abs(z)));
        }
      }
      break;
    }
    case LossKind::kSquaredError:
      total = 0.5 * (ws.z_top - ws.a[0]).squaredNorm();
      break;
  }
  return total / static_cast<double>(b);
}

Eigen::VectorXd MlpObjective::Grad(const Eigen::VectorXd& w, std::span<const int> batch) const {
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim_);
  if (b == 0) return grad;
  Workspace ws;
  Forward(w, batch, ws);
  const std::size_t layers = spec_.layer_sizes.size();
  const double inv_b = 1.0 / static_cast<double>(b);

  // dz of the output layer.
  Eigen::MatrixXd dz;
  switch (spec_.loss) {
    case LossKind::kCrossEntropy:
      dz = ws.out * inv_b;
      for (Eigen::Index j = 0; j < b; ++j) dz(ws.y[j], j) -= inv_b;
      break;
    case LossKind::kPixelBce:
    case LossKind::kSquaredError:
      dz = (ws.out - ws.a[0]) * inv_b;
      break;
  }

  for (std::size_t l = layers - 1; l >= 1; --l) {
    const Eigen::Index rows = spec_.layer_sizes[l];
    const Eigen::Index cols = spec_.layer_sizes[l - 1];
    Eigen::Map<Eigen::MatrixXd> dw(grad.data() + weight_offsets_[l - 1], rows, cols);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_offsets_[l - 1], rows);
    dw.noalias() = dz * ws.a[l - 1].transpose();
    db = dz.rowwise().sum();
    if (l > 1) {
      const Eigen::Map<const Eigen::MatrixXd> weight(w.data() + weight_offsets_[l - 1], rows,
                                                     cols);
      Eigen::MatrixXd da = weight.transpose() * dz;
      const Eigen::MatrixXd& act = ws.a[l - 1];
      dz = da.binaryExpr(act, [this](double g, double a) { return g * ActPrime(spec_.activation, a); });
    }
  }
  return grad;
}

Eigen::VectorXd MlpObjective::Hvp(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                  std::span<const int> batch) const {
  if (v.size() != dim_) {
    throw std::invalid_argument(
        fmt::format("mlp: direction has dim {}, expected {}", v.size(), dim_));
  }
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd hv = Eigen::VectorXd::Zero(dim_);
  if (b == 0) return hv;
  Workspace ws;
  Forward(w, batch, ws);
  const std::size_t layers = spec_.layer_sizes.size();
  const Eigen::Index top = static_cast<Eigen::Index>(layers - 1);
  const double inv_b = 1.0 / static_cast<double>(b);
  const Activation act = spec_.activation;

  // Forward sweep of the R-operator: directional derivatives of the
  // preactivations (rzs) and activations (ra) along v.
  std::vector<Eigen::MatrixXd> ra(layers);
  std::vector<Eigen::MatrixXd> rzs(layers);
  Eigen::MatrixXd rz_top;
  ra[0] = Eigen::MatrixXd::Zero(ws.a[0].rows(), b);
  for (std::size_t l = 1; l < layers; ++l) {
    const Eigen::Index rows = spec_.layer_sizes[l];
    const Eigen::Index cols = spec_.layer_sizes[l - 1];
    const Eigen::Map<const Eigen::MatrixXd> weight(w.data() + weight_offsets_[l - 1], rows, cols);
    const Eigen::Map<const Eigen::MatrixXd> vweight(v.data() + weight_offsets_[l - 1], rows,
                                                    cols);
    const Eigen::Map<const Eigen::VectorXd> vbias(v.data() + bias_offsets_[l - 1], rows);
    Eigen::MatrixXd rz = weight * ra[l - 1] + vweight * ws.a[l - 1];
    rz.colwise() += vbias;
    if (l + 1 < layers) {
      // R(a) = phi'(z) . R(z)
      ra[l] = rz.binaryExpr(ws.a[l],
                            [act](double r, double a) { return r * ActPrime(act, a); });
      rzs[l] = std::move(rz);
    } else {
      rz_top = std::move(rz);
    }
  }

  // Output-layer curvature: R(dz_top).
  Eigen::MatrixXd dz;
  Eigen::MatrixXd rdz;
  switch (spec_.loss) {
    case LossKind::kCrossEntropy: {
      const Eigen::MatrixXd& p = ws.out;
      dz = p * inv_b;
      for (Eigen::Index j = 0; j < b; ++j) dz(ws.y[j], j) -= inv_b;
      // R(softmax) = p . rz - p (p' rz), per column.
      rdz.resizeLike(rz_top);
      for (Eigen::Index j = 0; j < b; ++j) {
        const double mix = p.col(j).dot(rz_top.col(j));
        rdz.col(j) = (p.col(j).array() * (rz_top.col(j).array() - mix)) * inv_b;
      }
      break;
    }
    case LossKind::kPixelBce: {
      dz = (ws.out - ws.a[0]) * inv_b;
      rdz = ws.out.binaryExpr(rz_top, [](double s, double r) { return s * (1.0 - s) * r; }) *
            inv_b;
      break;
    }
    case LossKind::kSquaredError:
      dz = (ws.out - ws.a[0]) * inv_b;
      rdz = rz_top * inv_b;
      break;
  }

  // Joint reverse sweep for dz and R(dz).
  for (Eigen::Index l = top; l >= 1; --l) {
    const Eigen::Index rows = spec_.layer_sizes[l];
    const Eigen::Index cols = spec_.layer_sizes[l - 1];
    const Eigen::Map<const Eigen::MatrixXd> weight(w.data() + weight_offsets_[l - 1], rows, cols);
    const Eigen::Map<const Eigen::MatrixXd> vweight(v.data() + weight_offsets_[l - 1], rows,
                                                    cols);
    Eigen::Map<Eigen::MatrixXd> hw(hv.data() + weight_offsets_[l - 1], rows, cols);
    Eigen::Map<Eigen::VectorXd> hb(hv.data() + bias_offsets_[l - 1], rows);

    hw.noalias() = rdz * ws.a[l - 1].transpose();
    hw.noalias() += dz * ra[l - 1].transpose();
    hb = rdz.rowwise().sum();

    if (l > 1) {
      const Eigen::MatrixXd& a_prev = ws.a[l - 1];
      Eigen::MatrixXd da = weight.transpose() * dz;
      Eigen::MatrixXd rda = weight.transpose() * rdz;
      rda.noalias() += vweight.transpose() * dz;

      const Eigen::MatrixXd& rz_prev = rzs[l - 1];
      Eigen::MatrixXd dz_prev(cols, b);
      Eigen::MatrixXd rdz_prev(cols, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        for (Eigen::Index i = 0; i < cols; ++i) {
          const double a = a_prev(i, j);
          const double p1 = ActPrime(act, a);
          const double p2 = ActSecond(act, a);
          dz_prev(i, j) = da(i, j) * p1;
          rdz_prev(i, j) = rda(i, j) * p1 + da(i, j) * p2 * rz_prev(i, j);
        }
      }
      dz = std::move(dz_prev);
      rdz = std::move(rdz_prev);
    }
  }
  return hv;
}

double MlpObjective::Accuracy(const Eigen::VectorXd& w, std::span<const int> batch) const {
  if (spec_.loss != LossKind::kCrossEntropy) {
    throw std::logic_error("mlp: accuracy needs the cross-entropy head");
  }
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) return 0.0;
  Workspace ws;
  Forward(w, batch, ws);
  Eigen::Index hits = 0;
  for (Eigen::Index j = 0; j < b; ++j) {
    Eigen::Index argmax = 0;
    ws.z_top.col(j).maxCoeff(&argmax);
    if (argmax == ws.y[j]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(b);
}

std::unique_ptr<MlpObjective> MakeMlp(const MlpSpec& spec, const Dataset& data) {
  return std::make_unique<MlpObjective>(spec, data);
}

}  // namespace etr
