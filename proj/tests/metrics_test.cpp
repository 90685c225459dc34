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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"
#include "plcfe/metrics.hpp"
#include "test_support.hpp"

namespace plcfe {
namespace {

using testing::random_matrix;
using testing::random_unit_rows;
using testing::TempDir;

constexpr double kTau = 0.2;

// Direct evaluation of the ratio from its definition, without helpers.
double ratio_oracle(const Matrix& z, const std::vector<std::uint32_t>& labels, std::size_t c,
                    double tau) {
  const std::size_t d = z.cols();
  std::vector<std::vector<double>> mu(c, std::vector<double>(d, 0.0));
  std::vector<double> count(c, 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    count[labels[r]] += 1.0;
    for (std::size_t k = 0; k < d; ++k) mu[labels[r]][k] += z(r, k);
  }
  for (std::size_t i = 0; i < c; ++i) {
    for (double& v : mu[i]) v /= count[i];
  }
  std::vector<double> intra(c, 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += mu[labels[r]][k] * z(r, k);
    intra[labels[r]] += s;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double s_intra = std::exp(intra[i] / (tau * count[i]));
    double inter = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += mu[i][k] * mu[j][k];
      inter += std::exp(s / tau);
    }
    total += inter / (static_cast<double>(c - 1) * s_intra);
  }
  return total / static_cast<double>(c);
}

LabeledEmbeddings random_labeled(std::size_t classes, std::size_t per, std::size_t dim,
                                 Rng& rng) {
  std::vector<std::uint32_t> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.insert(labels.end(), per, c);
  return LabeledEmbeddings(random_unit_rows(classes * per, dim, rng), labels, classes);
}

TEST(IntraSimilarityTest, Examples) {
  const Matrix same{{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}};
  EXPECT_NEAR(intra_similarity(same, kTau), std::exp(5.0), 1e-9);
  const Matrix opposite{{1, 0}, {-1, 0}};
  EXPECT_DOUBLE_EQ(intra_similarity(opposite, kTau), 1.0);
  EXPECT_THROW(intra_similarity(same, 0.0), ParameterError);
  EXPECT_THROW(intra_similarity(Matrix(0, 2), kTau), ParameterError);
}

TEST(IntraSimilarityTest, MatchesDirectSum) {
  Rng rng(1);
  const Matrix z = random_unit_rows(4, 5, rng);
  const auto mu = column_means(z);
  double s = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t k = 0; k < 5; ++k) s += mu[k] * z(r, k);
  }
  EXPECT_NEAR(intra_similarity(z, kTau), std::exp(s / (kTau * 4.0)), 1e-12);
}

TEST(InterSimilarityTest, Examples) {
  const std::vector<double> e1 = {1, 0};
  const std::vector<double> e2 = {0, 1};
  EXPECT_DOUBLE_EQ(inter_similarity(e1, e2, kTau), 1.0);
  EXPECT_NEAR(inter_similarity(e1, e1, kTau), std::exp(5.0), 1e-9);
  Rng rng(2);
  const Matrix p = random_unit_rows(2, 6, rng);
  EXPECT_NEAR(inter_similarity(p.row(0), p.row(1), kTau),
              std::exp(dot(p.row(0), p.row(1)) / kTau), 1e-12);
  EXPECT_THROW(inter_similarity(e1, e2, -1.0), ParameterError);
  EXPECT_THROW(inter_similarity(e1, std::vector<double>{1, 0, 0}, kTau), ShapeError);
}

TEST(SimilarityRatioTest, OrthogonalCenters) {
  const LabeledEmbeddings data(Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 1, 2}, 3);
  const SimilarityReport r = similarity_ratio(data, kTau);
  EXPECT_NEAR(r.ratio_R, std::exp(-5.0), 1e-15);
  EXPECT_EQ(r.per_class_intra.size(), 3u);
}

TEST(SimilarityRatioTest, IdenticalClassesGiveOne) {
  const LabeledEmbeddings data(Matrix{{0.6, 0.8}, {0.6, 0.8}}, {0, 1}, 2);
  EXPECT_NEAR(similarity_ratio(data, kTau).ratio_R, 1.0, 1e-12);
}

TEST(SimilarityRatioTest, MatchesNestedLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const LabeledEmbeddings data = random_labeled(3, 5, 4, rng);
    EXPECT_NEAR(similarity_ratio(data, kTau).ratio_R,
                ratio_oracle(data.embeddings, data.labels, 3, kTau), 1e-10);
  }
}

TEST(SimilarityRatioTest, BothInterNormalizations) {
  Rng rng(4);
  const LabeledEmbeddings data = random_labeled(4, 3, 5, rng);
  const SimilarityReport r = similarity_ratio(data, kTau);
  EXPECT_NEAR(r.s_inter, r.inter_sum / 12.0, 1e-12);
  EXPECT_NEAR(r.s_inter_per_sample, r.inter_sum / (3.0 * 4.0), 1e-12);
  EXPECT_DOUBLE_EQ(r.mean_class_size, 3.0);
  EXPECT_NEAR(r.s_intra,
              std::accumulate(r.per_class_intra.begin(), r.per_class_intra.end(), 0.0) / 4.0,
              1e-12);
}

TEST(SimilarityRatioTest, RotationInvariant) {
  Rng rng(5);
  const LabeledEmbeddings data = random_labeled(3, 4, 3, rng);
  // Rotation about the z axis.
  const double a = 0.7;
  Matrix rotated(data.embeddings.rows(), 3);
  for (std::size_t r = 0; r < rotated.rows(); ++r) {
    const double x = data.embeddings(r, 0);
    const double y = data.embeddings(r, 1);
    rotated(r, 0) = std::cos(a) * x - std::sin(a) * y;
    rotated(r, 1) = std::sin(a) * x + std::cos(a) * y;
    rotated(r, 2) = data.embeddings(r, 2);
  }
  const SimilarityReport before = similarity_ratio(data, kTau);
  const SimilarityReport after = similarity_ratio({rotated, data.labels, 3}, kTau);
  EXPECT_NEAR(before.ratio_R, after.ratio_R, 1e-12);
  EXPECT_NEAR(before.s_intra, after.s_intra, 1e-10);
  EXPECT_NEAR(before.s_inter, after.s_inter, 1e-10);
}

TEST(SimilarityRatioTest, WithinClassPermutationInvariant) {
  Rng rng(6);
  const LabeledEmbeddings data = random_labeled(2, 5, 3, rng);
  std::vector<std::size_t> order = {4, 2, 0, 1, 3, 9, 5, 8, 6, 7};
  const LabeledEmbeddings permuted(data.embeddings.gather_rows(order), data.labels, 2);
  const SimilarityReport a = similarity_ratio(data, kTau);
  const SimilarityReport b = similarity_ratio(permuted, kTau);
  EXPECT_NEAR(a.ratio_R, b.ratio_R, 1e-12);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(a.per_class_intra[c], b.per_class_intra[c], 1e-10);
  }
}

TEST(SimilarityRatioTest, Errors) {
  EXPECT_THROW(similarity_ratio({Matrix{{1, 0}}, {0}, 1}, kTau), ParameterError);
  EXPECT_THROW(similarity_ratio({Matrix{{1, 0}, {0, 1}}, {0, 0}, 2}, kTau), ParameterError);
  EXPECT_THROW(LabeledEmbeddings(Matrix{{1, 0}}, {0, 1}, 2), ShapeError);
}

TEST(PcaTest, CollinearData) {
  Matrix x(6, 3);
  for (std::size_t r = 0; r < 6; ++r) {
    x(r, 0) = static_cast<double>(r);
    x(r, 1) = static_cast<double>(r);
  }
  const PcaProjection p = pca_project_2d(x);
  for (std::size_t r = 0; r < 6; ++r) EXPECT_LT(std::abs(p.points(r, 1)), 1e-10);
  EXPECT_NEAR(p.directions(0, 0), std::sqrt(0.5), 1e-12);
}

TEST(PcaTest, AxisAlignedIsPermutationWithSignFix) {
  const Matrix x{{-2, 0}, {2, 0}, {0, 0.5}, {0, -0.5}};
  const PcaProjection p = pca_project_2d(x);
  const auto mean = column_means(x);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(std::abs(p.points(r, 0)), std::abs(x(r, 0) - mean[0]), 1e-12);
  }
  EXPECT_NEAR(std::abs(p.directions(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(p.directions(1, 1)), 1.0, 1e-12);
  // Largest loading is positive.
  EXPECT_GT(p.directions(0, 0), 0.0);
  EXPECT_GT(p.directions(1, 1), 0.0);
}

TEST(PcaTest, ProjectedVarianceMatchesEigenOracle) {
  Rng rng(7);
  const Matrix x = random_matrix(5, 4, rng);
  Eigen::MatrixXd e(5, 4);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index c = 0; c < 4; ++c) e(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  const Eigen::MatrixXd centered = e.rowwise() - e.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 4.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto& ev = solver.eigenvalues();  // ascending
  const double top2 = ev(3) + ev(2);

  const PcaProjection p = pca_project_2d(x);
  double projected = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    projected += p.points(r, 0) * p.points(r, 0) + p.points(r, 1) * p.points(r, 1);
  }
  EXPECT_NEAR(projected / 4.0, top2, 1e-10);
  EXPECT_NEAR(p.eigenvalues[0], ev(3), 1e-10);
}

TEST(PcaTest, Errors) {
  EXPECT_THROW(pca_project_2d(Matrix{{1, 2}}), ParameterError);
  EXPECT_THROW(pca_project_2d(Matrix{{1, 2}, {1, 2}}), NumericError);
}

TEST(AssignmentTest, MatchesBruteForce) {
  Rng rng(8);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::vector<double>> cost(n, std::vector<double>(n));
      for (auto& row : cost) {
        for (double& v : row) v = static_cast<double>(rng.below(10));
      }
      const auto got = min_cost_assignment(cost);
      double got_cost = 0.0;
      std::vector<bool> used(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        ASSERT_LT(got[i], n);
        ASSERT_FALSE(used[got[i]]);
        used[got[i]] = true;
        got_cost += cost[i][got[i]];
      }
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      double best = 1e300;
      do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i][perm[i]];
        best = std::min(best, c);
      } while (std::next_permutation(perm.begin(), perm.end()));
      EXPECT_EQ(got_cost, best);
    }
  }
}

TEST(ClusteringAccuracyTest, Examples) {
  const std::vector<std::uint32_t> a = {0, 0, 1, 1};
  const std::vector<std::uint32_t> b = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(clustering_accuracy(a, b), 1.0);
  EXPECT_DOUBLE_EQ(clustering_accuracy(a, a), 1.0);
  const std::vector<std::uint32_t> c = {0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(clustering_accuracy(c, a), 0.5);
  EXPECT_THROW(clustering_accuracy({}, {}), ParameterError);
  EXPECT_THROW(clustering_accuracy(a, std::vector<std::uint32_t>{0}), ParameterError);
}

TEST(ClusteringAccuracyTest, MoreClustersThanClasses) {
  // Four clusters over two classes: only two clusters can be matched.
  const std::vector<std::uint32_t> pseudo = {0, 0, 1, 2, 2, 3};
  const std::vector<std::uint32_t> truth = {0, 0, 0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(clustering_accuracy(pseudo, truth), 4.0 / 6.0);
}

TEST(ClusteringAccuracyTest, RelabelingInvariant) {
  Rng rng(9);
  std::vector<std::uint32_t> pseudo(50);
  std::vector<std::uint32_t> truth(50);
  for (std::size_t i = 0; i < 50; ++i) {
    pseudo[i] = static_cast<std::uint32_t>(rng.below(5));
    truth[i] = static_cast<std::uint32_t>(rng.below(5));
  }
  std::vector<std::uint32_t> perm = {3, 0, 4, 1, 2};
  std::vector<std::uint32_t> relabeled(50);
  for (std::size_t i = 0; i < 50; ++i) relabeled[i] = perm[pseudo[i]];
  EXPECT_DOUBLE_EQ(clustering_accuracy(pseudo, truth), clustering_accuracy(relabeled, truth));
}

TEST(MetricsCsvTest, SimilarityAndProjectionFiles) {
  TempDir dir("metrics_csv");
  Rng rng(10);
  const LabeledEmbeddings data = random_labeled(3, 4, 3, rng);
  write_similarity_csv(dir.path() / "s.csv", similarity_ratio(data, kTau));
  const CsvTable s = read_csv(dir.path() / "s.csv");
  EXPECT_FALSE(s.rows.empty());

  const PcaProjection p = pca_project_2d(data.embeddings);
  write_projection_csv(dir.path() / "p.csv", p, data.labels);
  const CsvTable t = read_csv(dir.path() / "p.csv");
  EXPECT_EQ(t.rows.size(), 12u);
  EXPECT_THROW(write_projection_csv(dir.path() / "q.csv", p, std::vector<std::uint32_t>{0}),
               ShapeError);
}

TEST(ClassCentersTest, MeansPerClass) {
  const Matrix pts{{0, 0}, {2, 2}, {10, 0}};
  const std::vector<std::uint32_t> labels = {0, 0, 1};
  EXPECT_EQ(class_centers(pts, labels, 2), (Matrix{{1, 1}, {10, 0}}));
}

}  // namespace
}  // namespace plcfe
