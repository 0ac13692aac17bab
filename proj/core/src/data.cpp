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

#include "etr/data.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace etr {
namespace {

std::uint32_t ReadBigEndian32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void WriteBigEndian32(std::ofstream& os, std::uint32_t v) {
  const std::uint8_t bytes[4] = {
      static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
      static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  os.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

IdxTensor ReadIdx(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error(fmt::format("idx read: cannot open {}", path.string()));
  }
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is),
                                  std::istreambuf_iterator<char>()};

  if (bytes.size() < 4) {
    throw std::runtime_error(fmt::format(
        "idx read: {}: truncated header, {} bytes at offset 0 (need 4)", path.string(),
        bytes.size()));
  }
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw std::runtime_error(fmt::format(
        "idx read: {}: bad magic bytes {:#04x} {:#04x} at offset 0", path.string(), bytes[0],
        bytes[1]));
  }
  if (bytes[2] != 0x08) {
    throw std::runtime_error(fmt::format(
        "idx read: {}: unsupported element type {:#04x} at offset 2 (only 0x08 unsigned byte)",
        path.string(), bytes[2]));
  }
  const int rank = bytes[3];
  if (rank < 1) {
    throw std::runtime_error(
        fmt::format("idx read: {}: rank 0 at offset 3", path.string()));
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) {
    throw std::runtime_error(fmt::format(
        "idx read: {}: truncated dimension table at offset {} ({} bytes total)", path.string(),
        bytes.size(), bytes.size()));
  }

  IdxTensor tensor;
  tensor.dims.resize(rank);
  std::int64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t dim = ReadBigEndian32(bytes.data() + 4 + 4 * i);
    if (dim > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
      throw std::runtime_error(fmt::format("idx read: {}: dimension {} at offset {} overflows",
                                           path.string(), dim, 4 + 4 * i));
    }
    tensor.dims[i] = static_cast<std::int32_t>(dim);
    count *= tensor.dims[i];
  }
  const std::size_t expected = static_cast<std::size_t>(count);
  const std::size_t have = bytes.size() - header;
  if (have < expected) {
    throw std::runtime_error(fmt::format(
        "idx read: {}: truncated payload at offset {}: expected {} bytes, found {}",
        path.string(), header, expected, have));
  }
  tensor.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                     bytes.begin() + static_cast<std::ptrdiff_t>(header + expected));
  return tensor;
}

void WriteIdx(const std::filesystem::path& path, const IdxTensor& tensor) {
  if (tensor.dims.empty()) {
    throw std::invalid_argument("idx write: tensor must have rank >= 1");
  }
  if (tensor.dims.size() > 255) {
    throw std::invalid_argument(
        fmt::format("idx write: rank {} does not fit the format", tensor.dims.size()));
  }
  if (tensor.element_count() != static_cast<std::int64_t>(tensor.data.size())) {
    throw std::invalid_argument(fmt::format(
        "idx write: dims imply {} elements but data holds {}", tensor.element_count(),
        tensor.data.size()));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error(fmt::format("idx write: cannot open {}", path.string()));
  }
  const std::uint8_t magic[4] = {0, 0, 0x08, static_cast<std::uint8_t>(tensor.dims.size())};
  os.write(reinterpret_cast<const char*>(magic), 4);
  for (std::int32_t d : tensor.dims) {
    WriteBigEndian32(os, static_cast<std::uint32_t>(d));
  }
  os.write(reinterpret_cast<const char*>(tensor.data.data()),
           static_cast<std::streamsize>(tensor.data.size()));
  if (!os) {
    throw std::runtime_error(fmt::format("idx write: write to {} failed", path.string()));
  }
}

Dataset LoadIdxDataset(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, const std::string& name,
                       Eigen::Index max_samples) {
  const IdxTensor images = ReadIdx(images_path);
  if (images.dims.size() < 2) {
    throw std::runtime_error(fmt::format("idx read: {}: image tensor needs rank >= 2, got {}",
                                         images_path.string(), images.dims.size()));
  }
  Eigen::Index n = images.dims[0];
  Eigen::Index pixels = 1;
  for (std::size_t i = 1; i < images.dims.size(); ++i) pixels *= images.dims[i];
  if (max_samples >= 0) n = std::min(n, max_samples);

  Dataset data;
  data.name = name;
  data.features.resize(n, pixels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < pixels; ++j) {
      data.features(i, j) =
          static_cast<double>(images.data[static_cast<std::size_t>(i * pixels + j)]) / 255.0;
    }
  }

  if (!labels_path.empty()) {
    const IdxTensor labels = ReadIdx(labels_path);
    if (labels.dims.size() != 1) {
      throw std::runtime_error(fmt::format("idx read: {}: label tensor needs rank 1, got {}",
                                           labels_path.string(), labels.dims.size()));
    }
    if (labels.dims[0] < images.dims[0]) {
      throw std::runtime_error(
          fmt::format("idx read: {} has {} labels for {} images", labels_path.string(),
                      labels.dims[0], images.dims[0]));
    }
    data.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      data.labels[i] = labels.data[static_cast<std::size_t>(i)];
    }
  }
  return data;
}

std::filesystem::path ResolveDataDir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("ETR_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return ".";
}

BatchSampler::BatchSampler(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed,
                           SamplingScheme scheme)
    : n_(n), batch_size_(std::min(batch_size, n)), scheme_(scheme), rng_(seed) {
  if (n < 0 || batch_size < 1) {
    throw std::invalid_argument(
        fmt::format("batch sampler: need n >= 0 and batch_size >= 1, got n={} batch_size={}", n,
                    batch_size));
  }
  indices_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) indices_[static_cast<std::size_t>(i)] = static_cast<int>(i);
  cursor_ = n_;  // forces a shuffle on the first kEpochShuffle call
}

std::vector<int> BatchSampler::Next() {
  if (n_ == 0) return {};
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(batch_size_));

  if (scheme_ == SamplingScheme::kWithoutReplacementPerIter) {
    if (batch_size_ >= n_) {
      // Degenerate draw: the whole index set.
      batch.resize(static_cast<std::size_t>(n_));
      for (Eigen::Index i = 0; i < n_; ++i) batch[static_cast<std::size_t>(i)] = static_cast<int>(i);
      return batch;
    }
    // Partial Fisher-Yates: after k swaps the first k slots hold a uniform
    // without-replacement sample.
    for (Eigen::Index i = 0; i < batch_size_; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n_ - 1);
      std::swap(indices_[static_cast<std::size_t>(i)],
                indices_[static_cast<std::size_t>(pick(rng_))]);
      batch.push_back(indices_[static_cast<std::size_t>(i)]);
    }
    return batch;
  }

  // kEpochShuffle
  if (cursor_ >= n_) {
    std::shuffle(indices_.begin(), indices_.end(), rng_);
    cursor_ = 0;
  }
  const Eigen::Index take = std::min(batch_size_, n_ - cursor_);
  batch.assign(indices_.begin() + cursor_, indices_.begin() + cursor_ + take);
  cursor_ += take;
  return batch;
}

Dataset MakeSynthetic(const GaussianBlobsSpec& spec) {
  if (spec.classes < 1 || spec.dim < 1 || spec.n < 0 || !(spec.sep >= 0.0)) {
    throw std::invalid_argument(
        fmt::format("gaussian blobs: bad spec (classes={}, dim={}, n={}, sep={})", spec.classes,
                    spec.dim, spec.n, spec.sep));
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Class centers at distance sep from the origin.  While classes fit into
  // the ambient dimension the directions are Gram-Schmidt orthogonalized, so
  // centers are pairwise sep*sqrt(2) apart regardless of the seed.
  Eigen::MatrixXd dirs(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    Eigen::VectorXd dir(spec.dim);
    for (Eigen::Index j = 0; j < spec.dim; ++j) dir[j] = normal(rng);
    if (c < spec.dim) {
      for (int k = 0; k < c; ++k) {
        dir -= dirs.row(k).dot(dir.transpose()) * dirs.row(k).transpose();
      }
    }
    const double norm = dir.norm();
    if (norm < 1e-12) dir.setOnes();
    dir.normalize();
    dirs.row(c) = dir.transpose();
  }
  const Eigen::MatrixXd centers = spec.sep * dirs;

  Dataset data;
  data.name = fmt::format("blobs_c{}_d{}", spec.classes, spec.dim);
  data.features.resize(spec.n, spec.dim);
  data.labels.resize(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    data.labels[i] = label;
    for (Eigen::Index j = 0; j < spec.dim; ++j) {
      data.features(i, j) = centers(label, j) + normal(rng);
    }
  }

  // Min-max rescale each coordinate to [0, 1].
  for (Eigen::Index j = 0; j < spec.dim && spec.n > 0; ++j) {
    const double lo = data.features.col(j).minCoeff();
    const double hi = data.features.col(j).maxCoeff();
    const double range = hi - lo;
    if (range > 1e-12) {
      data.features.col(j) = (data.features.col(j).array() - lo) / range;
    } else {
      data.features.col(j).setConstant(0.5);
    }
  }
  return data;
}

Dataset MakeSynthetic(const RandomRegressionSpec& spec) {
  if (spec.dim < 1 || spec.n < 0) {
    throw std::invalid_argument(
        fmt::format("random regression: bad spec (dim={}, n={})", spec.dim, spec.n));
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Dataset data;
  data.name = fmt::format("random_d{}", spec.dim);
  data.features.resize(spec.n, spec.dim);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    for (Eigen::Index j = 0; j < spec.dim; ++j) {
      data.features(i, j) = uniform(rng);
    }
  }
  return data;
}

}  // namespace etr
