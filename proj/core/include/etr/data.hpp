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

#ifndef ETR_DATA_HPP_
#define ETR_DATA_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace etr {

// In-memory dataset.  Features are row-per-sample with values in [0, 1];
// labels are class indices (empty for unlabeled data).
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
  std::string name;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  // Number of classes, from the largest label; 0 when unlabeled.
  int num_classes() const {
    return labels.size() > 0 ? labels.maxCoeff() + 1 : 0;
  }
};

// Raw IDX tensor: big-endian header (magic 0x00 0x00 0x08 rank followed by
// rank 32-bit dims), unsigned byte payload.  Kept as raw bytes so a
// read/write round trip is bitwise exact.
struct IdxTensor {
  std::vector<std::int32_t> dims;
  std::vector<std::uint8_t> data;

  std::int64_t element_count() const {
    std::int64_t count = 1;
    for (std::int32_t d : dims) count *= d;
    return count;
  }
};

// Reads/writes the IDX binary format.  Only element type 0x08 (unsigned
// byte) is supported.  Parse errors are std::runtime_error naming the byte
// offset.
IdxTensor ReadIdx(const std::filesystem::path& path);
void WriteIdx(const std::filesystem::path& path, const IdxTensor& tensor);

// Loads an image/label IDX pair into a Dataset, flattening trailing image
// dims and scaling byte values to [0, 1] by /255.  max_samples >= 0 keeps
// only the first max_samples rows.
Dataset LoadIdxDataset(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, const std::string& name,
                       Eigen::Index max_samples = -1);

// Resolves the dataset directory: explicit argument if non-empty, otherwise
// the ETR_DATA_DIR environment variable, otherwise the current directory.
std::filesystem::path ResolveDataDir(const std::string& explicit_dir);

// Mini-batch index streams.  kWithoutReplacementPerIter draws a fresh
// without-replacement sample of size batch_size each call;
// kEpochShuffle walks a per-epoch random permutation in batch_size chunks,
// so every index appears exactly once per epoch (the final chunk of an epoch
// may be smaller when batch_size does not divide n).
enum class SamplingScheme { kWithoutReplacementPerIter, kEpochShuffle };

class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed,
               SamplingScheme scheme);

  std::vector<int> Next();

  Eigen::Index n() const { return n_; }
  Eigen::Index batch_size() const { return batch_size_; }

 private:
  Eigen::Index n_;
  Eigen::Index batch_size_;
  SamplingScheme scheme_;
  std::mt19937_64 rng_;
  std::vector<int> indices_;
  Eigen::Index cursor_ = 0;  // kEpochShuffle position
};

inline std::vector<int> NextBatch(BatchSampler& sampler) { return sampler.Next(); }

// Isotropic Gaussian class clusters with centers sep away from the origin
// along mutually orthogonal random directions (orthogonalized while
// classes <= dim, so separation at large sep is guaranteed).  Features are
// min-max rescaled to [0, 1] per coordinate.
struct GaussianBlobsSpec {
  int classes = 2;
  Eigen::Index dim = 2;
  double sep = 4.0;
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
};
Dataset MakeSynthetic(const GaussianBlobsSpec& spec);

// Unlabeled uniform [0, 1] feature matrix, e.g. as autoencoder input.
struct RandomRegressionSpec {
  Eigen::Index dim = 10;
  Eigen::Index n = 100;
  std::uint64_t seed = 0;
};
Dataset MakeSynthetic(const RandomRegressionSpec& spec);

}  // namespace etr

#endif  // ETR_DATA_HPP_
