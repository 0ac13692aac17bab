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

#ifndef ETR_ELLIPSOID_HPP_
#define ETR_ELLIPSOID_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>

namespace etr {

// Structure of the SPD matrix A that defines the ellipsoidal norm
// ||w||_A = sqrt(w' A w).
enum class EllipsoidShape { kUniform, kDiagonal, kFull };

// Records whether a matrix built from a gradient accumulator Acc is
// (Acc + eps I) itself (kOne) or its matrix square root (kHalf).  The
// annotation only affects how spectral bounds are certified; the matrix
// operations below always act on the stored entries.
enum class SpectralExponent { kHalf, kOne };

// SPD matrix defining an ellipsoidal trust-region geometry.  Uniform is the
// identity, diagonal stores per-coordinate entries, full stores a dense
// matrix together with its eigendecomposition (computed once on
// construction).  Full matrices are capped at dimension 512: beyond that the
// dense eigensolve dominates everything else, so construction refuses.
class EllipsoidMatrix {
 public:
  // Identity geometry (the classical spherical trust region).
  static EllipsoidMatrix Uniform(Eigen::Index dim);

  // Diagonal geometry.  All entries must be positive, finite and >= epsilon;
  // epsilon defaults to the smallest entry.
  static EllipsoidMatrix Diagonal(Eigen::VectorXd entries, double epsilon = -1.0,
                                  SpectralExponent exponent = SpectralExponent::kOne);

  // Dense geometry.  The matrix must be square, symmetric to 1e-12 relative
  // tolerance and have lambda_min >= epsilon - 1e-12; epsilon defaults to
  // lambda_min.  Dimension is capped at 512.
  static EllipsoidMatrix Full(Eigen::MatrixXd matrix, double epsilon = -1.0,
                              SpectralExponent exponent = SpectralExponent::kOne);

  EllipsoidShape shape() const { return shape_; }
  Eigen::Index dim() const { return dim_; }
  double epsilon() const { return epsilon_; }
  SpectralExponent exponent() const { return exponent_; }

  // Diagonal entries; valid only for kDiagonal.
  const Eigen::VectorXd& entries() const;
  // Dense matrix; valid only for kFull.
  const Eigen::MatrixXd& matrix() const;

  // A v, A^{-1} v, A^{1/2} v and A^{-1/2} v.
  Eigen::VectorXd Apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd Solve(const Eigen::VectorXd& v) const;
  Eigen::VectorXd ApplySqrt(const Eigen::VectorXd& v) const;
  Eigen::VectorXd SolveSqrt(const Eigen::VectorXd& v) const;

  // Smallest and largest eigenvalue of the stored matrix.  Exact for uniform
  // and diagonal shapes, from the cached eigendecomposition for full.
  std::pair<double, double> EigenBounds() const;

 private:
  EllipsoidMatrix() = default;
  void CheckDim(const Eigen::VectorXd& v) const;

  EllipsoidShape shape_ = EllipsoidShape::kUniform;
  SpectralExponent exponent_ = SpectralExponent::kOne;
  Eigen::Index dim_ = 0;
  double epsilon_ = 1.0;
  Eigen::VectorXd entries_;       // kDiagonal
  Eigen::VectorXd entries_sqrt_;  // kDiagonal
  Eigen::MatrixXd matrix_;        // kFull
  Eigen::MatrixXd eigvecs_;       // kFull
  Eigen::VectorXd eigvals_;       // kFull
  Eigen::VectorXd eigvals_sqrt_;  // kFull
};

// ||w||_A and ||w||_{A^{-1}}.
double ANorm(const Eigen::VectorXd& w, const EllipsoidMatrix& a);
double AInvNorm(const Eigen::VectorXd& w, const EllipsoidMatrix& a);

// Which running statistic of past gradients backs the ellipsoid.  Rms modes
// keep an exponential moving average with decay beta (newest gradient gets
// weight 1 - beta); Ada modes keep a plain sum.  Diag modes track
// coordinate-wise squares, full modes the entire outer-product matrix.
enum class HistoryMode { kRmsDiag, kRmsFull, kAdaDiag, kAdaFull };

// Running gradient second-moment accumulator.  Full modes are capped at
// dimension 512, matching EllipsoidMatrix::Full.
class GradientHistory {
 public:
  GradientHistory(HistoryMode mode, Eigen::Index dim, double beta = 0.9);

  HistoryMode mode() const { return mode_; }
  Eigen::Index dim() const { return dim_; }
  double beta() const { return beta_; }
  std::int64_t step_count() const { return step_count_; }

  const Eigen::VectorXd& diag_accumulator() const;
  const Eigen::MatrixXd& full_accumulator() const;

  // Folds one gradient into the accumulator.
  void Update(const Eigen::VectorXd& g);

 private:
  HistoryMode mode_;
  Eigen::Index dim_;
  double beta_;
  std::int64_t step_count_ = 0;
  Eigen::VectorXd diag_;
  Eigen::MatrixXd full_;
};

inline void UpdateHistory(GradientHistory& history, const Eigen::VectorXd& g) {
  history.Update(g);
}

// Builds the ellipsoid matrix (Acc + eps I)^exponent from the accumulator.
// For kHalf the stored epsilon of the result is sqrt(eps), the floor actually
// satisfied by the square-rooted entries.  eps may be zero as long as the
// accumulator itself is positive definite.
EllipsoidMatrix BuildEllipsoid(const GradientHistory& history, double epsilon,
                               SpectralExponent exponent);

// Certified two-sided spectral bounds for an Rms ellipsoid after step_count
// updates with squared gradient norms bounded by l_h_sq, plus the uniform
// norm-equivalence constant mu:  mu^{-1} ||w||_2 <= ||w||_A <= mu ||w||_2.
// `valid` reports whether epsilon is small enough that the ellipsoidal norm
// ball is sandwiched between the epsilon-scaled and unit Euclidean balls,
// i.e. whether eps^2 + (1 - beta^{t+1}) l_h_sq eps - 1 <= 0.
struct EquivalenceCertificate {
  double lambda_min_bound = 0.0;
  double lambda_max_bound = 0.0;
  double zeta = 0.0;
  double mu = 0.0;
  bool valid = false;
};

EquivalenceCertificate CertifyUniformEquivalence(const EllipsoidMatrix& a,
                                                 double l_h_sq, double beta,
                                                 std::int64_t step_count,
                                                 double epsilon);

// JSON round-trip: {"shape":"uniform"|"diag"|"full", "epsilon":e,
// "entries":[...] | "matrix":[[...]], "exponent":"one"|"half"} with "dim"
// added for uniform shapes.
std::string ToJson(const EllipsoidMatrix& a);
EllipsoidMatrix EllipsoidFromJson(const std::string& text);

}  // namespace etr

#endif  // ETR_ELLIPSOID_HPP_
