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

#ifndef PLCFE_CLUSTER_HPP_
#define PLCFE_CLUSTER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "plcfe/data.hpp"
#include "plcfe/matrix.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

struct ClusterModel {
  std::size_t k = 0;
  Matrix centers;                        // k x d
  std::vector<std::uint32_t> assignment; // sample -> cluster id
  double inertia = 0.0;                  // sum of squared distances to centers
  std::size_t iterations = 0;
  std::size_t restart = 0;               // index of the winning restart
  std::vector<double> inertia_trace;     // after each assignment step
};

// Lloyd's algorithm with k-means++ seeding, followed by single-point moves
// that still lower the inertia. Runs `restarts` independent
// restarts and keeps the lowest inertia (ties go to the earlier restart).
// Iterates until assignments stop changing or max_iters assignment steps.
// A cluster that empties is re-seeded at the point farthest from its
// current center. Throws ParameterError unless 1 <= k <= n.
ClusterModel kmeans(const Matrix& points, std::size_t k, std::size_t max_iters,
                    std::size_t restarts, Rng& rng);

// Pseudo-labeled view of a dataset: labels are cluster ids.
struct PseudoLabeledDataset {
  Matrix samples;
  std::vector<std::uint32_t> labels;
  std::vector<std::vector<std::size_t>> members;  // per cluster, ascending

  std::size_t clusters() const { return members.size(); }
  std::size_t size() const { return labels.size(); }
};

PseudoLabeledDataset assign_pseudo_labels(const ClusterModel& model, const Dataset& dataset);

// Builds a pseudo-labeled view from arbitrary labels, e.g. ground truth for
// evaluation tasks.
PseudoLabeledDataset make_labeled_view(const Matrix& samples,
                                       std::vector<std::uint32_t> labels,
                                       std::size_t clusters);

// The k_bar clusters most similar to `base` by center dot product,
// descending, ties by lower id; never includes base.
std::vector<std::size_t> nearest_clusters(const ClusterModel& model, std::size_t base,
                                          std::size_t k_bar);

// Assignment CSV (sample_index, cluster_id) and centers CSV (cluster_id,
// c0..c{d-1}) with 17 significant digits, so reading gives back the exact
// model (inertia is recomputed).
void write_cluster_model(const std::filesystem::path& assignments_path,
                         const std::filesystem::path& centers_path, const ClusterModel& model);
ClusterModel read_cluster_model(const std::filesystem::path& assignments_path,
                                const std::filesystem::path& centers_path,
                                const Matrix* points = nullptr);

}  // namespace plcfe

#endif  // PLCFE_CLUSTER_HPP_
