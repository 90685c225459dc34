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

#include "plcfe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
}

constexpr std::size_t kMaxMatchLabels = 64;

}  // namespace

LabeledEmbeddings::LabeledEmbeddings(Matrix e, const HiddenLabels& truth)
    : embeddings(std::move(e)),
      labels(truth.ids().begin(), truth.ids().end()),
      classes(truth.classes()) {
  if (labels.size() != embeddings.rows()) {
    throw ShapeError("label count does not match embedding count");
  }
}

LabeledEmbeddings::LabeledEmbeddings(Matrix e, std::vector<std::uint32_t> l, std::size_t c)
    : embeddings(std::move(e)), labels(std::move(l)), classes(c) {
  if (labels.size() != embeddings.rows()) {
    throw ShapeError("label count does not match embedding count");
  }
  for (auto id : labels) {
    if (id >= classes) throw ParameterError("label id out of range");
  }
}

double intra_similarity(const Matrix& class_embeddings, double tau) {
  check_tau(tau);
  if (class_embeddings.rows() == 0) throw ParameterError("class has no samples");
  const auto mu = column_means(class_embeddings);
  double sum = 0.0;
  for (std::size_t j = 0; j < class_embeddings.rows(); ++j) sum += dot(mu, class_embeddings.row(j));
  return std::exp(sum / (tau * static_cast<double>(class_embeddings.rows())));
}

double inter_similarity(std::span<const double> center_i, std::span<const double> center_j,
                        double tau) {
  check_tau(tau);
  if (center_i.size() != center_j.size()) throw ShapeError("center dimensions differ");
  return std::exp(dot(center_i, center_j) / tau);
}

SimilarityReport similarity_ratio(const LabeledEmbeddings& data, double tau) {
  check_tau(tau);
  const std::size_t classes = data.classes;
  if (classes < 2) throw ParameterError("similarity ratio needs at least two classes");

  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < data.labels.size(); ++i) members[data.labels[i]].push_back(i);

  SimilarityReport report;
  report.tau = tau;
  report.classes = classes;
  report.mean_class_size = static_cast<double>(data.labels.size()) / static_cast<double>(classes);
  Matrix centers(classes, data.embeddings.cols());
  for (std::size_t c = 0; c < classes; ++c) {
    if (members[c].empty()) {
      throw ParameterError("class " + std::to_string(c) + " has no samples");
    }
    const Matrix rows = data.embeddings.gather_rows(members[c]);
    report.per_class_intra.push_back(intra_similarity(rows, tau));
    const auto mu = column_means(rows);
    std::copy(mu.begin(), mu.end(), centers.row(c).begin());
  }

  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      if (j != i) row_sum += inter_similarity(centers.row(i), centers.row(j), tau);
    }
    report.inter_sum += row_sum;
    ratio_sum += row_sum / (static_cast<double>(classes - 1) * report.per_class_intra[i]);
    report.s_intra += report.per_class_intra[i];
  }
  const double c = static_cast<double>(classes);
  report.s_intra /= c;
  report.s_inter = report.inter_sum / (c * (c - 1.0));
  report.s_inter_per_sample = report.inter_sum / (report.mean_class_size * c);
  report.ratio_R = ratio_sum / c;
  return report;
}

PcaProjection pca_project_2d(const Matrix& embeddings) {
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  if (n < 2 || d < 2) throw ParameterError("PCA needs at least 2 rows and 2 columns");

  PcaProjection out;
  out.mean = column_means(embeddings);
  Matrix centered = embeddings;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = centered.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] -= out.mean[c];
  }
  Matrix cov(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = centered.row(r);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov(a, b) += row[a] * row[b];
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= denom;
      cov(b, a) = cov(a, b);
    }
  }
  auto eig = symmetric_eigen(cov);
  if (!(eig.values[0] > 0.0)) throw NumericError("PCA input has no variance");
  out.eigenvalues = eig.values;

  out.directions = Matrix(d, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    std::size_t arg = 0;
    for (std::size_t r = 1; r < d; ++r) {
      if (std::abs(eig.vectors(r, k)) > std::abs(eig.vectors(arg, k))) arg = r;
    }
    const double sign = eig.vectors(arg, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) out.directions(r, k) = sign * eig.vectors(r, k);
  }
  out.points = Matrix(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += centered(r, c) * out.directions(c, k);
      out.points(r, k) = s;
    }
  }
  return out;
}

Matrix class_centers(const Matrix& points, std::span<const std::uint32_t> labels,
                     std::size_t classes) {
  if (labels.size() != points.rows()) throw ShapeError("label count does not match points");
  Matrix centers(classes, points.cols());
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ParameterError("label id out of range");
    ++counts[labels[i]];
    for (std::size_t c = 0; c < points.cols(); ++c) centers(labels[i], c) += points(i, c);
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] == 0) continue;
    for (double& v : centers.row(k)) v /= static_cast<double>(counts[k]);
  }
  return centers;
}

std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw ShapeError("assignment cost matrix must be square");
  }
  if (n == 0) return {};
  // Shortest augmenting path with row/column potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double clustering_accuracy(std::span<const std::uint32_t> pseudo_labels,
                           std::span<const std::uint32_t> true_labels) {
  if (pseudo_labels.empty()) throw ParameterError("clustering accuracy of an empty labeling");
  if (pseudo_labels.size() != true_labels.size()) {
    throw ParameterError("label sequences differ in length");
  }
  const std::size_t clusters = *std::max_element(pseudo_labels.begin(), pseudo_labels.end()) + 1;
  const std::size_t classes = *std::max_element(true_labels.begin(), true_labels.end()) + 1;
  if (clusters > kMaxMatchLabels || classes > kMaxMatchLabels) {
    throw ParameterError("clustering accuracy supports at most 64 clusters and classes");
  }
  const std::size_t size = std::max(clusters, classes);
  std::vector<std::vector<double>> cost(size, std::vector<double>(size, 0.0));
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i) {
    cost[pseudo_labels[i]][true_labels[i]] -= 1.0;
  }
  const auto assignment = min_cost_assignment(cost);
  double matched = 0.0;
  for (std::size_t r = 0; r < size; ++r) matched -= cost[r][assignment[r]];
  return matched / static_cast<double>(pseudo_labels.size());
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityReport& report) {
  CsvWriter csv({"tau", "classes", "mean_class_size", "s_intra", "s_inter",
                 "s_inter_per_sample", "inter_sum", "ratio_R"});
  csv.field(report.tau)
      .field(report.classes)
      .field(report.mean_class_size)
      .field(report.s_intra)
      .field(report.s_inter)
      .field(report.s_inter_per_sample)
      .field(report.inter_sum)
      .field(report.ratio_R);
  csv.end_row();
  csv.save(path);
}

void write_projection_csv(const std::filesystem::path& path, const PcaProjection& projection,
                          std::span<const std::uint32_t> labels) {
  const bool with_labels = !labels.empty();
  if (with_labels && labels.size() != projection.points.rows()) {
    throw ShapeError("label count does not match projected points");
  }
  std::vector<std::string> header{"pc1", "pc2"};
  if (with_labels) header.emplace_back("label");
  CsvWriter csv(header);
  for (std::size_t r = 0; r < projection.points.rows(); ++r) {
    csv.field(projection.points(r, 0)).field(projection.points(r, 1));
    if (with_labels) csv.field(static_cast<std::size_t>(labels[r]));
    csv.end_row();
  }
  csv.save(path);
}

}  // namespace plcfe
