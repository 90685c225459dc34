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

#ifndef PLCFE_METRICS_HPP_
#define PLCFE_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "plcfe/data.hpp"
#include "plcfe/matrix.hpp"

namespace plcfe {

// Embeddings together with their true classes. Evaluation-only.
struct LabeledEmbeddings {
  Matrix embeddings;
  std::vector<std::uint32_t> labels;
  std::size_t classes = 0;

  LabeledEmbeddings() = default;
  LabeledEmbeddings(Matrix embeddings, const HiddenLabels& truth);
  LabeledEmbeddings(Matrix embeddings, std::vector<std::uint32_t> labels, std::size_t classes);
};

// Compactness and separation of a labeled embedding.
//
// s_inter averages the C(C-1) ordered center pairs. s_inter_per_sample
// divides the same sum by (mean class size * C) instead, which is the other
// normalization in circulation; ratio_R does not depend on either.
struct SimilarityReport {
  double tau = 0.0;
  std::size_t classes = 0;
  double mean_class_size = 0.0;
  double s_intra = 0.0;
  double s_inter = 0.0;
  double s_inter_per_sample = 0.0;
  double inter_sum = 0.0;  // sum over ordered pairs i != j of s_inter_ij
  double ratio_R = 0.0;
  std::vector<double> per_class_intra;
};

// exp(sum_j mu . z_j / (tau * n)) with mu the row mean.
double intra_similarity(const Matrix& class_embeddings, double tau);

// exp(a . b / tau)
double inter_similarity(std::span<const double> center_i, std::span<const double> center_j,
                        double tau);

// R = 1/C sum_i [ sum_{j != i} s_inter_ij / ((C - 1) s_intra_i) ].
SimilarityReport similarity_ratio(const LabeledEmbeddings& data, double tau);

struct PcaProjection {
  Matrix points;                   // n x 2
  Matrix directions;               // d x 2, unit columns
  std::vector<double> eigenvalues; // all covariance eigenvalues, descending
  std::vector<double> mean;
};

// Projects mean-centered rows onto the two leading covariance eigenvectors.
// Each direction's sign is chosen so that its largest-magnitude loading is
// positive. Throws ParameterError for fewer than 2 rows or columns and
// NumericError when the data has no spread.
PcaProjection pca_project_2d(const Matrix& embeddings);

// Per-class means of projected points (classes x 2).
Matrix class_centers(const Matrix& points, std::span<const std::uint32_t> labels,
                     std::size_t classes);

// Minimum-cost perfect assignment on a square cost matrix (Hungarian
// method); returns the column assigned to each row.
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost);

// Best one-to-one cluster-to-class matching, as a fraction of samples.
double clustering_accuracy(std::span<const std::uint32_t> pseudo_labels,
                           std::span<const std::uint32_t> true_labels);

void write_similarity_csv(const std::filesystem::path& path, const SimilarityReport& report);
void write_projection_csv(const std::filesystem::path& path, const PcaProjection& projection,
                          std::span<const std::uint32_t> labels);

}  // namespace plcfe

#endif  // PLCFE_METRICS_HPP_
