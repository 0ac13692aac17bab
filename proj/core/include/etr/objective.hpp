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

#ifndef ETR_OBJECTIVE_HPP_
#define ETR_OBJECTIVE_HPP_

#include <Eigen/Dense>

#include <span>

namespace etr {

// Finite-sum training objective L(w) = 1/n sum_i l_i(w), exposing loss,
// gradient and Hessian-vector product on arbitrary sample subsets.  Batch
// entries index into [0, num_samples()).  Implementations must be
// deterministic: identical (w, v, batch) inputs give bitwise identical
// outputs.  Methods are const and safe to call concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index num_samples() const = 0;

  // Mean loss over the batch.
  virtual double Loss(const Eigen::VectorXd& w, std::span<const int> batch) const = 0;
  // Gradient of the mean batch loss.
  virtual Eigen::VectorXd Grad(const Eigen::VectorXd& w, std::span<const int> batch) const = 0;
  // Hessian-vector product of the mean batch loss.
  virtual Eigen::VectorXd Hvp(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                              std::span<const int> batch) const = 0;
};

}  // namespace etr

#endif  // ETR_OBJECTIVE_HPP_
