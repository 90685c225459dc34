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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "plcfe/csv.hpp"
#include "plcfe/episodes.hpp"
#include "plcfe/errors.hpp"
#include "test_support.hpp"

namespace plcfe {
namespace {

using testing::clustered_data;
using testing::NearestMeanModel;
using testing::TableScorer;
using testing::TempDir;

// Rows (predicted way, confidence) for TableScorer.
Matrix table(const std::vector<std::pair<double, double>>& rows) {
  Matrix m(rows.size(), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m(r, 0) = rows[r].first;
    m(r, 1) = rows[r].second;
  }
  return m;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

EpisodeConfig small_config() {
  EpisodeConfig c;
  c.ways = 3;
  c.shots = 1;
  c.queries = 2;
  c.k_bar = 2;
  return c;
}

TEST(EpisodeConfigTest, ValidationNamesField) {
  auto field_of = [](const EpisodeConfig& c) {
    try {
      validate(c);
    } catch (const ValidationError& e) {
      return e.field();
    }
    return std::string();
  };
  EpisodeConfig c;
  EXPECT_EQ(field_of(c), "");
  c.beta = 1.2;
  EXPECT_EQ(field_of(c), "episodes.beta");
  c = {};
  c.beta = 0.0;
  EXPECT_EQ(field_of(c), "episodes.beta");
  c = {};
  c.ways = 1;
  EXPECT_EQ(field_of(c), "episodes.ways");
  c = {};
  c.gate_threshold = -0.1;
  EXPECT_EQ(field_of(c), "episodes.gate_threshold");
  c = {};
  c.queries = 0;
  EXPECT_EQ(field_of(c), "episodes.queries");
}

TEST(StandardTaskTest, TwoClustersOfTwo) {
  const PseudoLabeledDataset pld = make_labeled_view(Matrix(4, 1), {0, 1, 0, 1}, 2);
  EpisodeConfig c;
  c.ways = 2;
  c.shots = 1;
  c.queries = 1;
  Rng rng(1);
  const FewShotTask t = sample_standard_task(pld, c, rng);
  EXPECT_EQ(task_problem(t), "");
  std::set<std::size_t> clusters;
  std::set<std::size_t> samples;
  for (const auto& e : t.support) {
    clusters.insert(e.cluster);
    samples.insert(e.sample);
  }
  for (const auto& e : t.query) samples.insert(e.sample);
  EXPECT_EQ(clusters.size(), 2u);
  EXPECT_EQ(samples.size(), 4u);
  EXPECT_FALSE(t.progressive);
}

TEST(StandardTaskTest, SmallClusterNeverSampled) {
  // Cluster 3 has K + Q - 1 = 2 members.
  std::vector<std::uint32_t> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3};
  const PseudoLabeledDataset pld = make_labeled_view(Matrix(labels.size(), 1), labels, 4);
  EpisodeConfig c;
  c.ways = 2;
  c.shots = 1;
  c.queries = 2;
  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const FewShotTask task = sample_standard_task(pld, c, rng);
    for (const auto& e : task.support) EXPECT_NE(e.cluster, 3u);
  }
}

TEST(StandardTaskTest, TooFewEligibleClusters) {
  const PseudoLabeledDataset pld = make_labeled_view(Matrix(5, 1), {0, 0, 0, 1, 1}, 2);
  EpisodeConfig c;
  c.ways = 2;
  c.shots = 1;
  c.queries = 2;
  Rng rng(3);
  EXPECT_THROW(sample_standard_task(pld, c, rng), ConstructionError);
}

TEST(StandardTaskTest, UniformClusterSelection) {
  std::vector<std::uint32_t> labels;
  for (std::uint32_t c = 0; c < 8; ++c) labels.insert(labels.end(), 6, c);
  const PseudoLabeledDataset pld = make_labeled_view(Matrix(labels.size(), 1), labels, 8);
  EpisodeConfig c;
  c.ways = 3;
  c.shots = 1;
  c.queries = 2;
  Rng rng(4);
  constexpr int kTasks = 10000;
  std::vector<int> hits(8, 0);
  for (int t = 0; t < kTasks; ++t) {
    const FewShotTask task = sample_standard_task(pld, c, rng);
    ASSERT_EQ(task_problem(task), "");
    for (std::size_t w = 0; w < 3; ++w) ++hits[task.support[w].cluster];
  }
  const double p = 3.0 / 8.0;
  const double sigma = std::sqrt(kTasks * p * (1.0 - p));
  for (int h : hits) EXPECT_NEAR(h, kTasks * p, 3.0 * sigma);
}

TEST(StandardTaskTest, SupportFirstThenQueryPerCluster) {
  Rng data_rng(5);
  const auto data = clustered_data(6, 10, 2, data_rng);
  Rng rng(6);
  const FewShotTask t = sample_standard_task(data.pld, small_config(), rng);
  ASSERT_EQ(t.support.size(), 3u);
  ASSERT_EQ(t.query.size(), 6u);
  for (std::size_t w = 0; w < 3; ++w) {
    EXPECT_EQ(t.support[w].way, w);
    EXPECT_EQ(t.query[2 * w].cluster, t.support[w].cluster);
    EXPECT_EQ(data.pld.labels[t.query[2 * w + 1].sample], t.support[w].cluster);
  }
}

TEST(TaskProblemTest, DetectsViolations) {
  Rng data_rng(7);
  const auto data = clustered_data(6, 10, 2, data_rng);
  Rng rng(8);
  const FewShotTask good = sample_standard_task(data.pld, small_config(), rng);
  ASSERT_EQ(task_problem(good), "");

  FewShotTask t = good;
  t.query.pop_back();
  EXPECT_NE(task_problem(t), "");
  t = good;
  t.query[0].sample = t.support[0].sample;
  EXPECT_NE(task_problem(t), "");
  t = good;
  t.support[1].way = 7;
  EXPECT_NE(task_problem(t), "");
}

TEST(EntropyTest, Examples) {
  const TableScorer scorer(2);
  const Matrix same = table({{1, 0.9}, {1, 0.8}, {1, 0.7}});
  EXPECT_EQ(cluster_entropy(same, all_rows(3), scorer, 2), 0.0);
  const Matrix split = table({{0, 0.9}, {0, 0.9}, {1, 0.9}, {1, 0.9}});
  EXPECT_NEAR(cluster_entropy(split, all_rows(4), scorer, 2), std::log(2.0), 1e-15);
  const Matrix three_one = table({{0, 0.9}, {0, 0.9}, {0, 0.9}, {1, 0.9}});
  EXPECT_NEAR(cluster_entropy(three_one, all_rows(4), scorer, 2),
              -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-15);
  EXPECT_NEAR(cluster_entropy(three_one, all_rows(4), scorer, 2), 0.562335, 1e-6);
}

TEST(EntropyTest, Errors) {
  const TableScorer scorer(2);
  EXPECT_THROW(cluster_entropy(table({{0, 0.9}}), {}, scorer, 2), ParameterError);
  EXPECT_THROW(cluster_entropy(table({{0, 0.9}}), all_rows(1), scorer, 3), ShapeError);
  EXPECT_THROW(entropy_of_counts(std::vector<std::size_t>{0, 0}), ParameterError);
}

// Property: 0 <= H <= ln N, with equality at the top only for uniform labels.
TEST(EntropyTest, BoundsAndUniformMaximum) {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t ways = 2 + rng.below(4);
    std::vector<std::size_t> counts(ways);
    for (auto& c : counts) c = rng.below(4);
    if (std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c == 0; })) {
      counts[0] = 1;
    }
    const double h = entropy_of_counts(counts);
    const bool uniform = std::all_of(counts.begin(), counts.end(),
                                     [&](std::size_t c) { return c == counts[0]; });
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(ways)) + 1e-12);
    if (uniform) {
      EXPECT_NEAR(h, std::log(static_cast<double>(ways)), 1e-12);
    } else {
      EXPECT_LT(h, std::log(static_cast<double>(ways)) - 1e-9);
    }
  }
}

TEST(PredictedLabelsTest, TiesGoToLowerWay) {
  struct Flat : TaskScorer {
    Matrix probabilities(const Matrix& samples) const override {
      return Matrix(samples.rows(), 3, 1.0 / 3.0);
    }
  };
  EXPECT_EQ(predicted_labels(Flat(), Matrix(2, 1)), (std::vector<std::uint32_t>{0, 0}));
}

TEST(SelectFinalClusterTest, Examples) {
  // Cluster 0: all way 0 (H = 0); cluster 1: split (H = ln 2); cluster 2:
  // 9 to 1 (H about 0.33); cluster 3 empty.
  std::vector<std::pair<double, double>> rows;
  std::vector<std::uint32_t> labels;
  for (int i = 0; i < 4; ++i) {
    rows.push_back({0, 0.9});
    labels.push_back(0);
  }
  rows.push_back({0, 0.9});
  rows.push_back({1, 0.9});
  labels.insert(labels.end(), 2, 1);
  for (int i = 0; i < 10; ++i) {
    rows.push_back({i == 0 ? 1.0 : 0.0, 0.9});
    labels.push_back(2);
  }
  const PseudoLabeledDataset pld = make_labeled_view(table(rows), labels, 4);
  const TableScorer scorer(2);
  const std::vector<std::size_t> one = {2};
  EXPECT_EQ(select_final_cluster(one, pld, scorer, 2), 2u);
  const std::vector<std::size_t> three = {0, 1, 2};
  EXPECT_EQ(select_final_cluster(three, pld, scorer, 2), 1u);
  const std::vector<std::size_t> with_empty = {3, 0, 2};
  EXPECT_EQ(select_final_cluster(with_empty, pld, scorer, 2), 2u);
  const std::vector<std::size_t> tie = {0, 0};
  EXPECT_EQ(select_final_cluster(tie, pld, scorer, 2), 0u);
  const std::vector<std::size_t> only_empty = {3};
  EXPECT_THROW(select_final_cluster(only_empty, pld, scorer, 2), ConstructionError);
  const std::vector<std::size_t> bad = {9};
  EXPECT_THROW(select_final_cluster(bad, pld, scorer, 2), ParameterError);
}

TEST(SelectFinalClusterTest, TiesKeepCandidateOrder) {
  const PseudoLabeledDataset pld =
      make_labeled_view(table({{0, 0.9}, {1, 0.9}, {1, 0.9}, {0, 0.9}}), {0, 0, 1, 1}, 2);
  const TableScorer scorer(2);
  const std::vector<std::size_t> forward = {0, 1};
  const std::vector<std::size_t> backward = {1, 0};
  EXPECT_EQ(select_final_cluster(forward, pld, scorer, 2), 0u);
  EXPECT_EQ(select_final_cluster(backward, pld, scorer, 2), 1u);
}

TEST(FilterNoisyTest, Examples) {
  const TableScorer scorer(2);
  // Ten rows all predicted as way 0 with distinct confidences.
  std::vector<std::pair<double, double>> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({0, 0.5 + 0.04 * i});
  EXPECT_EQ(filter_noisy(table(rows), all_rows(10), scorer, 0, 0.75).size(), 7u);

  const Matrix equal = table({{0, 0.7}, {0, 0.7}, {0, 0.7}, {0, 0.7}});
  EXPECT_EQ(filter_noisy(equal, all_rows(4), scorer, 0, 0.75),
            (std::vector<std::size_t>{0, 1, 2}));

  const Matrix scored = table({{0, 0.9}, {1, 0.9}, {0, 0.5}, {0, 0.7}});
  // Way-0 probabilities: 0.9, 0.1, 0.5, 0.7.
  EXPECT_EQ(filter_noisy(scored, all_rows(4), scorer, 0, 0.75),
            (std::vector<std::size_t>{0, 3, 2}));
}

TEST(FilterNoisyTest, ScoresByRequestedWay) {
  const TableScorer scorer(2);
  const Matrix scored = table({{0, 0.9}, {1, 0.9}, {0, 0.5}, {0, 0.7}});
  // Way-1 probabilities: 0.1, 0.9, 0.5, 0.3.
  EXPECT_EQ(filter_noisy(scored, all_rows(4), scorer, 1, 0.5), (std::vector<std::size_t>{1, 2}));
}

TEST(FilterNoisyTest, Errors) {
  const TableScorer scorer(2);
  const Matrix m = table({{0, 0.9}, {0, 0.8}});
  EXPECT_THROW(filter_noisy(m, {}, scorer, 0, 0.5), ParameterError);
  EXPECT_THROW(filter_noisy(m, all_rows(2), scorer, 0, 1.0), ParameterError);
  EXPECT_THROW(filter_noisy(m, all_rows(2), scorer, 2, 0.5), ParameterError);
  EXPECT_THROW(filter_noisy(m, all_rows(2), scorer, 0, 0.5, 2), ConstructionError);
}

// Property: output is a prefix of the descending order, of length floor(beta n).
TEST(FilterNoisyTest, SubsetWithNonIncreasingScores) {
  Rng rng(10);
  const TableScorer scorer(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    Matrix m(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      m(r, 0) = static_cast<double>(rng.below(3));
      m(r, 1) = 0.4 + 0.5 * rng.uniform();
    }
    const double beta = 0.05 + 0.9 * rng.uniform();
    const std::size_t way = rng.below(3);
    const auto kept = filter_noisy(m, all_rows(n), scorer, way, beta);
    EXPECT_EQ(kept.size(), static_cast<std::size_t>(std::floor(beta * static_cast<double>(n))));
    const Matrix p = scorer.probabilities(m);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_LT(kept[i], n);
      EXPECT_TRUE(seen.insert(kept[i]).second);
      if (i > 0) {
        EXPECT_GE(p(kept[i - 1], way), p(kept[i], way));
      }
    }
    // Nothing left out scores higher than the last kept member.
    if (!kept.empty()) {
      for (std::size_t r = 0; r < n; ++r) {
        if (seen.count(r) == 0) {
          EXPECT_LE(p(r, way), p(kept.back(), way));
        }
      }
    }
  }
}

TEST(ProgressiveTaskTest, ClosedGateGivesStandardTasks) {
  Rng data_rng(11);
  const auto data = clustered_data(10, 12, 3, data_rng);
  const NearestMeanModel model;
  EpisodeConfig c = small_config();
  c.gate_threshold = 1.0;
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    EXPECT_FALSE(sample_progressive_task(data.pld, data.clusters, &model, c, rng).progressive);
  }
  EXPECT_EQ(model.calls, 0u);
}

TEST(ProgressiveTaskTest, NoEvaluationModelGivesStandardTasks) {
  Rng data_rng(13);
  const auto data = clustered_data(10, 12, 3, data_rng);
  EpisodeConfig c = small_config();
  c.gate_threshold = 0.0;
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    EXPECT_FALSE(sample_progressive_task(data.pld, data.clusters, nullptr, c, rng).progressive);
  }
}

TEST(ProgressiveTaskTest, SingleCandidateForcesNeighbour) {
  Rng data_rng(15);
  EpisodeConfig c = small_config();
  c.k_bar = 1;
  c.gate_threshold = 0.0;
  // k = N + 1 clusters.
  const auto data = clustered_data(c.ways + 1, 40, 3, data_rng);
  const NearestMeanModel model;
  Rng rng(16);
  for (int t = 0; t < 100; ++t) {
    const FewShotTask task = sample_progressive_task(data.pld, data.clusters, &model, c, rng);
    ASSERT_TRUE(task.progressive);
    ASSERT_EQ(task_problem(task), "");
    for (const WayProvenance& p : task.provenance) {
      if (p.fallback) continue;
      EXPECT_EQ(p.query_cluster, nearest_clusters(data.clusters, p.base_cluster, 1)[0]);
    }
  }
}

TEST(ProgressiveTaskTest, ReplayAndFilteredMembership) {
  Rng data_rng(17);
  const auto data = clustered_data(12, 20, 4, data_rng);
  const NearestMeanModel model;
  EpisodeConfig c = small_config();
  c.gate_threshold = 0.0;
  Rng a(18);
  Rng b(18);
  const FewShotTask x = build_progressive_task(data.pld, data.clusters, model, c, a);
  const FewShotTask y = build_progressive_task(data.pld, data.clusters, model, c, b);
  ASSERT_EQ(x.query.size(), y.query.size());
  for (std::size_t i = 0; i < x.query.size(); ++i) EXPECT_EQ(x.query[i].sample, y.query[i].sample);
  for (std::size_t i = 0; i < x.support.size(); ++i) {
    EXPECT_EQ(x.support[i].sample, y.support[i].sample);
  }

  // Brute force: finetune on the support, rank every candidate by entropy,
  // filter the winner and check set membership of the queries.
  Matrix support(x.support.size(), data.pld.samples.cols());
  std::vector<std::uint32_t> ways;
  for (std::size_t i = 0; i < x.support.size(); ++i) {
    const auto row = data.pld.samples.row(x.support[i].sample);
    std::copy(row.begin(), row.end(), support.row(i).begin());
    ways.push_back(x.support[i].way);
  }
  const auto scorer = model.finetune(support, ways, c.ways);
  for (std::size_t w = 0; w < c.ways; ++w) {
    const WayProvenance& p = x.provenance[w];
    if (p.fallback) continue;
    const auto candidates = nearest_clusters(data.clusters, p.base_cluster, c.k_bar);
    std::size_t best = candidates[0];
    double best_h = -1.0;
    for (std::size_t cand : candidates) {
      const double h = cluster_entropy(data.pld.samples, data.pld.members[cand], *scorer, c.ways);
      if (h > best_h) {
        best_h = h;
        best = cand;
      }
    }
    EXPECT_EQ(p.query_cluster, best);
    const auto kept = filter_noisy(data.pld.samples, data.pld.members[best], *scorer, w, c.beta);
    const std::set<std::size_t> allowed(kept.begin(), kept.end());
    for (const TaskExample& q : x.query) {
      if (q.way == w) {
        EXPECT_EQ(allowed.count(q.sample), 1u) << "way " << w;
      }
    }
  }
}

TEST(ProgressiveTaskTest, FallbackWhenFilteringLeavesTooFew) {
  Rng data_rng(19);
  EpisodeConfig c = small_config();
  c.queries = 3;
  c.beta = 0.1;  // floor(0.1 * 8) = 0 kept
  const auto data = clustered_data(8, 8, 3, data_rng);
  const NearestMeanModel model;
  Rng rng(20);
  const FewShotTask t = build_progressive_task(data.pld, data.clusters, model, c, rng);
  EXPECT_EQ(task_problem(t), "");
  for (const WayProvenance& p : t.provenance) {
    EXPECT_TRUE(p.fallback);
    EXPECT_EQ(p.query_cluster, p.base_cluster);
  }
}

TEST(ProgressiveTaskTest, GateFraction) {
  Rng data_rng(21);
  const auto data = clustered_data(15, 30, 3, data_rng);
  const NearestMeanModel model;
  EpisodeConfig c = small_config();
  c.gate_threshold = 0.7;
  Rng rng(22);
  constexpr int kDraws = 10000;
  int progressive = 0;
  for (int t = 0; t < kDraws; ++t) {
    progressive += sample_progressive_task(data.pld, data.clusters, &model, c, rng).progressive;
  }
  const double sigma = std::sqrt(0.3 * 0.7 / kDraws);
  EXPECT_NEAR(static_cast<double>(progressive) / kDraws, 0.3, 3.0 * sigma);
}

TEST(ProgressiveTaskTest, Errors) {
  Rng data_rng(23);
  const auto data = clustered_data(3, 10, 2, data_rng);
  const NearestMeanModel model;
  EpisodeConfig c = small_config();
  c.k_bar = 3;
  Rng rng(24);
  EXPECT_THROW(build_progressive_task(data.pld, data.clusters, model, c, rng), ParameterError);
}

TEST(TaskBatchTest, SharedGateDraw) {
  Rng data_rng(25);
  const auto data = clustered_data(12, 20, 3, data_rng);
  const NearestMeanModel model;
  EpisodeConfig c = small_config();
  c.gate_threshold = 0.5;
  Rng rng(26);
  int open_batches = 0;
  for (int b = 0; b < 50; ++b) {
    const auto batch = sample_task_batch(data.pld, data.clusters, &model, c, 4, true, rng);
    ASSERT_EQ(batch.size(), 4u);
    for (const FewShotTask& t : batch) {
      EXPECT_EQ(t.gate_draw, batch[0].gate_draw);
      EXPECT_EQ(t.progressive, batch[0].gate_draw > 0.5);
      EXPECT_EQ(task_problem(t), "");
    }
    open_batches += batch[0].progressive ? 1 : 0;
  }
  EXPECT_GT(open_batches, 0);
  EXPECT_LT(open_batches, 50);

  const auto standard = sample_task_batch(data.pld, data.clusters, &model, c, 4, false, rng);
  for (const FewShotTask& t : standard) EXPECT_FALSE(t.progressive);
}

TEST(TaskCsvTest, OneLinePerExample) {
  TempDir dir("tasks_csv");
  Rng data_rng(27);
  const auto data = clustered_data(6, 10, 2, data_rng);
  Rng rng(28);
  std::vector<FewShotTask> tasks;
  for (int t = 0; t < 3; ++t) tasks.push_back(sample_standard_task(data.pld, small_config(), rng));
  write_tasks_csv(dir.path() / "t.csv", tasks);
  const CsvTable t = read_csv(dir.path() / "t.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"task_id", "role", "way", "sample_index",
                                                 "source_cluster", "progressive_flag"}));
  EXPECT_EQ(t.rows.size(), 3u * 9);
  EXPECT_EQ(t.rows[0][t.column("role")], "support");
  EXPECT_EQ(t.rows[3][t.column("role")], "query");
  EXPECT_EQ(parse_int(t.rows[26][0]), 2);
}

}  // namespace
}  // namespace plcfe
