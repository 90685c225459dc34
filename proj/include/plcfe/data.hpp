// Copyright 2026 The plcfe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PLCFE_DATA_HPP_
#define PLCFE_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plcfe/matrix.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

struct DatasetMeta {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t classes = 0;  // true class count; only evaluation code reads it
  std::string generator;
  std::uint64_t seed = 0;
};

// Unlabeled samples. This is the only dataset type the unsupervised stages
// (embedding training, clustering, episode construction) accept.
struct Dataset {
  Matrix samples;
  DatasetMeta meta;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
};

// Ground-truth class ids, stored apart from Dataset.
class HiddenLabels {
 public:
  HiddenLabels() = default;
  HiddenLabels(std::vector<std::uint32_t> ids, std::size_t classes);

  std::span<const std::uint32_t> ids() const { return ids_; }
  std::size_t classes() const { return classes_; }
  std::size_t size() const { return ids_.size(); }

  friend bool operator==(const HiddenLabels&, const HiddenLabels&) = default;

 private:
  std::vector<std::uint32_t> ids_;
  std::size_t classes_ = 0;
};

struct LabeledDataset {
  Dataset data;
  HiddenLabels labels;
};

struct BlobSpec {
  std::size_t classes = 8;
  std::size_t per_class = 100;
  std::size_t dim = 16;
  double separation = 6.0;
};

// Gaussian blobs: class means on a sphere of radius `separation` with
// pairwise distance >= separation / 2, samples = mean + N(0, I).
// Samples are stored grouped by class. The generating means are returned
// through `means` when non-null.
LabeledDataset gen_blobs(const BlobSpec& spec, Rng& rng, Matrix* means = nullptr);

// Splits by class id: classes [0, first_classes) go to the first dataset and
// are relabeled from 0; the rest go to the second, also relabeled from 0.
std::pair<LabeledDataset, LabeledDataset> split_by_class(const LabeledDataset& all,
                                                          std::size_t first_classes);

struct AugmentConfig {
  double noise_std = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double mask_prob = 0.0;

  bool is_identity() const {
    return noise_std == 0.0 && scale_lo == 1.0 && scale_hi == 1.0 && mask_prob == 0.0;
  }
};

// Throws ValidationError naming the offending field.
void validate(const AugmentConfig& config);

// Coordinate masking, then one global scale, then additive Gaussian noise.
// Random draws are skipped for disabled transforms, so the identity config
// consumes no randomness.
std::vector<double> augment(std::span<const double> sample, const AugmentConfig& config,
                            Rng& rng);

struct StoredDataset {
  Dataset data;
  std::optional<HiddenLabels> labels;
};

// PLDS container: "PLDS", u16 version, u16 flags (bit0 labels present),
// u32 n, u32 d, u32 C, n*d little-endian f64 row-major, then n u32 labels.
void write_dataset(const std::filesystem::path& path, const Dataset& data,
                   const HiddenLabels* labels);
StoredDataset read_dataset(const std::filesystem::path& path);

// Encodes/decodes the same bytes as the file functions; exposed for tests.
std::vector<std::uint8_t> encode_dataset(const Dataset& data, const HiddenLabels* labels);
StoredDataset decode_dataset(std::vector<std::uint8_t> bytes);

// PLEM container: same layout with magic "PLEM", no labels, C = 0.
void write_embeddings(const std::filesystem::path& path, const Matrix& embeddings);
Matrix read_embeddings(const std::filesystem::path& path);

}  // namespace plcfe

#endif  // PLCFE_DATA_HPP_
