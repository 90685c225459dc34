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

// Fixtures shared by the unit and acceptance tests.

#ifndef PLCFE_TESTS_TEST_SUPPORT_HPP_
#define PLCFE_TESTS_TEST_SUPPORT_HPP_

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "plcfe/cluster.hpp"
#include "plcfe/episodes.hpp"
#include "plcfe/matrix.hpp"
#include "plcfe/rng.hpp"

namespace plcfe::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, sd);
  return m;
}

inline Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m = random_matrix(rows, cols, rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const double n = std::sqrt(squared_norm(m.row(r)));
    for (double& v : m.row(r)) v /= n;
  }
  return m;
}

// Probabilities read off the rows: column 0 holds the predicted way, column
// 1 (when present) a confidence used as that way's probability.
class TableScorer : public TaskScorer {
 public:
  explicit TableScorer(std::size_t ways) : ways_(ways) {}
  Matrix probabilities(const Matrix& samples) const override {
    Matrix p(samples.rows(), ways_);
    for (std::size_t r = 0; r < samples.rows(); ++r) {
      const auto way = static_cast<std::size_t>(samples(r, 0));
      const double top = samples.cols() > 1 ? samples(r, 1) : 0.9;
      const double rest = ways_ > 1 ? (1.0 - top) / static_cast<double>(ways_ - 1) : 0.0;
      for (std::size_t w = 0; w < ways_; ++w) p(r, w) = w == way ? top : rest;
    }
    return p;
  }

 private:
  std::size_t ways_;
};

// Nearest support mean on raw inputs, softmax over negative squared distances.
class NearestMeanModel : public EvaluationModel {
 public:
  class Scorer : public TaskScorer {
   public:
    explicit Scorer(Matrix means) : means_(std::move(means)) {}
    Matrix probabilities(const Matrix& samples) const override {
      Matrix p(samples.rows(), means_.rows());
      for (std::size_t r = 0; r < samples.rows(); ++r) {
        double top = -1e300;
        for (std::size_t w = 0; w < means_.rows(); ++w) {
          p(r, w) = -squared_distance(samples.row(r), means_.row(w));
          top = std::max(top, p(r, w));
        }
        double z = 0.0;
        for (double& v : p.row(r)) z += (v = std::exp(v - top));
        for (double& v : p.row(r)) v /= z;
      }
      return p;
    }

   private:
    Matrix means_;
  };

  std::unique_ptr<TaskScorer> finetune(const Matrix& support, std::span<const std::uint32_t> ways,
                                       std::size_t way_count) const override {
    ++calls;
    Matrix means(way_count, support.cols());
    std::vector<double> counts(way_count, 0.0);
    for (std::size_t r = 0; r < support.rows(); ++r) {
      counts[ways[r]] += 1.0;
      for (std::size_t c = 0; c < support.cols(); ++c) means(ways[r], c) += support(r, c);
    }
    for (std::size_t w = 0; w < way_count; ++w) {
      for (double& v : means.row(w)) v /= counts[w];
    }
    return std::make_unique<Scorer>(std::move(means));
  }

  mutable std::size_t calls = 0;
};

struct ClusteredData {
  PseudoLabeledDataset pld;
  ClusterModel clusters;
};

// `k` unit-variance Gaussian clusters of `per` points each around centers
// drawn from N(0, 9 I); the cluster model is the generating one.
inline ClusteredData clustered_data(std::size_t k, std::size_t per, std::size_t dim, Rng& rng) {
  Matrix samples(k * per, dim);
  std::vector<std::uint32_t> labels(k * per);
  ClusterModel model;
  model.k = k;
  model.centers = Matrix(k, dim);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < dim; ++j) model.centers(c, j) = rng.normal(0.0, 3.0);
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      labels[r] = static_cast<std::uint32_t>(c);
      for (std::size_t j = 0; j < dim; ++j) samples(r, j) = model.centers(c, j) + rng.normal();
    }
  }
  model.assignment = labels;
  ClusteredData out{make_labeled_view(samples, labels, k), std::move(model)};
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() /
              ("plcfe_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace plcfe::testing

#endif  // PLCFE_TESTS_TEST_SUPPORT_HPP_
