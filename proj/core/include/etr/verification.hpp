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

#ifndef ETR_VERIFICATION_HPP_
#define ETR_VERIFICATION_HPP_

#include <string>
#include <vector>

namespace etr {

struct VerificationReport {
  std::string suite;
  bool passed = false;
  int checks = 0;
  int failures = 0;
  std::vector<std::string> notes;  // one entry per failure (truncated), plus stats
};

// Randomized self-check suites with fixed seeds.
//
// firstorder:  the preconditioned step -eta A^{-1} g solves the linear
//              trust-region subproblem at radius eta ||g||_{A^{-1}}, and its
//              KKT certificate checks out (1000 instances).
// spectrum:    eigenvalues of built Rms ellipsoids respect the certified
//              bounds [eps, (1 - beta^{t+1}) L^2 + eps] (100 sequences), and
//              the validity predicate matches hand-computed cases.
// steihaug:    Cauchy decrease <= Steihaug decrease <= exact decrease and
//              feasibility on random quadratics (1000 instances).
// derivatives: backprop gradients and R-operator Hessian-vector products
//              match central differences on small networks of every
//              activation/loss combination.
VerificationReport VerifyFirstOrder();
VerificationReport VerifySpectrum();
VerificationReport VerifySteihaug();
VerificationReport VerifyDerivatives();

// Dispatch by lowercase suite name ("firstorder", "spectrum", "steihaug",
// "derivatives"); throws std::invalid_argument on unknown names.
VerificationReport RunVerification(const std::string& suite);

std::vector<std::string> VerificationSuites();

std::string ReportToJson(const VerificationReport& report);

}  // namespace etr

#endif  // ETR_VERIFICATION_HPP_
