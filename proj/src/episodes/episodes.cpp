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

#include "plcfe/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

void validate(const EpisodeConfig& config) {
  if (config.ways < 2) throw ValidationError("episodes.ways", "must be at least 2");
  if (config.shots < 1) throw ValidationError("episodes.shots", "must be at least 1");
  if (config.queries < 1) throw ValidationError("episodes.queries", "must be at least 1");
  if (config.k_bar < 1) throw ValidationError("episodes.k_bar", "must be at least 1");
  if (!(config.beta > 0.0 && config.beta < 1.0)) {
    throw ValidationError("episodes.beta", "must lie in (0, 1)");
  }
  if (!(config.gate_threshold >= 0.0 && config.gate_threshold <= 1.0)) {
    throw ValidationError("episodes.gate_threshold", "must lie in [0, 1]");
  }
}

std::string task_problem(const FewShotTask& task) {
  if (task.support.size() != task.ways * task.shots) return "support size is not N * K";
  if (task.query.size() != task.ways * task.queries) return "query size is not N * Q";
  if (task.provenance.size() != task.ways) return "provenance does not cover every way";
  std::vector<std::size_t> support_per_way(task.ways, 0);
  std::vector<std::size_t> query_per_way(task.ways, 0);
  std::unordered_set<std::size_t> seen;
  for (const TaskExample& e : task.support) {
    if (e.way >= task.ways) return "support way label out of range";
    ++support_per_way[e.way];
    if (!seen.insert(e.sample).second) return "sample repeated within the task";
  }
  for (const TaskExample& e : task.query) {
    if (e.way >= task.ways) return "query way label out of range";
    ++query_per_way[e.way];
    if (!seen.insert(e.sample).second) return "sample repeated within the task";
  }
  for (std::size_t w = 0; w < task.ways; ++w) {
    if (support_per_way[w] != task.shots) return "way " + std::to_string(w) + " lacks K support";
    if (query_per_way[w] != task.queries) return "way " + std::to_string(w) + " lacks Q queries";
  }
  return {};
}

namespace {

void check_constructed(const FewShotTask& task) {
  const std::string problem = task_problem(task);
  if (!problem.empty()) throw ConstructionError("malformed task: " + problem);
}

std::vector<std::size_t> eligible_clusters(const PseudoLabeledDataset& pld, std::size_t need) {
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < pld.clusters(); ++c) {
    if (pld.members[c].size() >= need) ids.push_back(c);
  }
  return ids;
}

std::vector<std::size_t> pick_clusters(const PseudoLabeledDataset& pld, const EpisodeConfig& config,
                                       Rng& rng) {
  const std::vector<std::size_t> eligible =
      eligible_clusters(pld, config.shots + config.queries);
  if (eligible.size() < config.ways) {
    throw ConstructionError("only " + std::to_string(eligible.size()) +
                            " clusters hold K + Q members; need N = " +
                            std::to_string(config.ways));
  }
  std::vector<std::size_t> picked;
  for (std::size_t i : rng.sample_without_replacement(eligible.size(), config.ways)) {
    picked.push_back(eligible[i]);
  }
  return picked;
}

FewShotTask empty_task(const EpisodeConfig& config) {
  FewShotTask task;
  task.ways = config.ways;
  task.shots = config.shots;
  task.queries = config.queries;
  return task;
}

Matrix rows_of(const Matrix& samples, std::span<const std::size_t> members) {
  return samples.gather_rows(members);
}

}  // namespace

FewShotTask sample_standard_task(const PseudoLabeledDataset& pld, const EpisodeConfig& config,
                                 Rng& rng) {
  const std::vector<std::size_t> clusters = pick_clusters(pld, config, rng);
  FewShotTask task = empty_task(config);
  for (std::size_t w = 0; w < config.ways; ++w) {
    const auto& members = pld.members[clusters[w]];
    const auto picks = rng.sample_without_replacement(members.size(), config.shots + config.queries);
    const auto way = static_cast<std::uint32_t>(w);
    for (std::size_t s = 0; s < picks.size(); ++s) {
      TaskExample e{members[picks[s]], way, clusters[w]};
      (s < config.shots ? task.support : task.query).push_back(e);
    }
    task.provenance.push_back({clusters[w], clusters[w], false, false});
  }
  check_constructed(task);
  return task;
}

namespace {

std::vector<std::uint32_t> argmax_rows(const Matrix& probs) {
  std::vector<std::uint32_t> labels(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    labels[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return labels;
}

}  // namespace

std::vector<std::uint32_t> predicted_labels(const TaskScorer& scorer, const Matrix& samples) {
  const Matrix probs = scorer.probabilities(samples);
  if (probs.rows() != samples.rows()) throw ShapeError("scorer returned the wrong number of rows");
  return argmax_rows(probs);
}

double entropy_of_counts(std::span<const std::size_t> counts) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw ParameterError("entropy of an empty histogram");
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

double cluster_entropy(const Matrix& samples, std::span<const std::size_t> members,
                       const TaskScorer& scorer, std::size_t ways) {
  if (members.empty()) throw ParameterError("entropy of an empty cluster");
  const Matrix probs = scorer.probabilities(rows_of(samples, members));
  if (probs.cols() != ways) {
    throw ShapeError("scorer emits " + std::to_string(probs.cols()) + " scores; expected " +
                     std::to_string(ways));
  }
  std::vector<std::size_t> counts(ways, 0);
  for (std::uint32_t label : argmax_rows(probs)) ++counts[label];
  return entropy_of_counts(counts);
}

std::size_t select_final_cluster(std::span<const std::size_t> candidates,
                                 const PseudoLabeledDataset& pld, const TaskScorer& scorer,
                                 std::size_t ways) {
  if (candidates.empty()) throw ParameterError("no candidate clusters");
  std::size_t best = candidates.front();
  double best_h = -1.0;
  for (std::size_t c : candidates) {
    if (c >= pld.clusters()) throw ParameterError("candidate cluster id out of range");
    if (pld.members[c].empty()) continue;
    const double h = cluster_entropy(pld.samples, pld.members[c], scorer, ways);
    if (h > best_h) {
      best_h = h;
      best = c;
    }
  }
  if (best_h < 0.0) throw ConstructionError("every candidate cluster is empty");
  return best;
}

std::vector<std::size_t> filter_noisy(const Matrix& samples, std::span<const std::size_t> members,
                                      const TaskScorer& scorer, std::size_t way, double beta,
                                      std::size_t min_keep) {
  if (members.empty()) throw ParameterError("cannot filter an empty cluster");
  if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
  const Matrix probs = scorer.probabilities(rows_of(samples, members));
  if (way >= probs.cols()) throw ParameterError("way index exceeds the scorer's head");
  const auto keep = static_cast<std::size_t>(std::floor(beta * static_cast<double>(members.size())));
  if (keep < min_keep) {
    throw ConstructionError("filtering keeps " + std::to_string(keep) + " of " +
                            std::to_string(members.size()) + " members; need " +
                            std::to_string(min_keep));
  }
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probs(a, way) > probs(b, way);
  });
  std::vector<std::size_t> kept;
  kept.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) kept.push_back(members[order[r]]);
  return kept;
}

FewShotTask build_progressive_task(const PseudoLabeledDataset& pld, const ClusterModel& clusters,
                                   const EvaluationModel& eval, const EpisodeConfig& config,
                                   Rng& rng) {
  if (clusters.k != pld.clusters()) {
    throw ParameterError("cluster model and pseudo-labels disagree on k");
  }
  if (clusters.k <= config.k_bar) {
    throw ParameterError("progressive tasks need more than K_bar clusters");
  }
  const std::vector<std::size_t> bases = pick_clusters(pld, config, rng);
  FewShotTask task = empty_task(config);
  task.progressive = true;

  std::set<std::size_t> used;
  std::vector<std::size_t> support_rows;
  std::vector<std::uint32_t> support_ways;
  for (std::size_t w = 0; w < config.ways; ++w) {
    const auto& members = pld.members[bases[w]];
    for (std::size_t p : rng.sample_without_replacement(members.size(), config.shots)) {
      task.support.push_back({members[p], static_cast<std::uint32_t>(w), bases[w]});
      support_rows.push_back(members[p]);
      support_ways.push_back(static_cast<std::uint32_t>(w));
      used.insert(members[p]);
    }
  }
  const std::unique_ptr<TaskScorer> scorer =
      eval.finetune(rows_of(pld.samples, support_rows), support_ways, config.ways);

  for (std::size_t w = 0; w < config.ways; ++w) {
    const auto way = static_cast<std::uint32_t>(w);
    const std::vector<std::size_t> candidates = nearest_clusters(clusters, bases[w], config.k_bar);
    const std::size_t final_cluster = select_final_cluster(candidates, pld, *scorer, config.ways);

    std::vector<std::size_t> pool;
    const auto& final_members = pld.members[final_cluster];
    const auto keep =
        static_cast<std::size_t>(std::floor(config.beta * static_cast<double>(final_members.size())));
    if (keep >= config.queries) {
      for (std::size_t s : filter_noisy(pld.samples, final_members, *scorer, w, config.beta)) {
        if (used.count(s) == 0) pool.push_back(s);
      }
    }
    WayProvenance prov{bases[w], final_cluster, true, false};
    if (pool.size() < config.queries) {
      pool.clear();
      for (std::size_t s : pld.members[bases[w]]) {
        if (used.count(s) == 0) pool.push_back(s);
      }
      prov.query_cluster = bases[w];
      prov.progressive = false;
      prov.fallback = true;
      if (pool.size() < config.queries) {
        throw ConstructionError("base cluster " + std::to_string(bases[w]) +
                                " cannot supply Q unused queries");
      }
    }
    for (std::size_t p : rng.sample_without_replacement(pool.size(), config.queries)) {
      task.query.push_back({pool[p], way, prov.query_cluster});
      used.insert(pool[p]);
    }
    task.provenance.push_back(prov);
  }
  check_constructed(task);
  return task;
}

FewShotTask sample_progressive_task(const PseudoLabeledDataset& pld, const ClusterModel& clusters,
                                    const EvaluationModel* eval, const EpisodeConfig& config,
                                    Rng& rng) {
  const double eta = rng.uniform();
  if (eta > config.gate_threshold && eval != nullptr) {
    // The attempt draws from a forked stream.
    // The caller's stream advances by one fork either way.
    Rng attempt(Rng::derive_seed(rng.next_u64(), 0));
    try {
      FewShotTask task = build_progressive_task(pld, clusters, *eval, config, attempt);
      task.gate_draw = eta;
      return task;
    } catch (const ConstructionError&) {
      // Falls through to a standard task.
    }
  }
  FewShotTask task = sample_standard_task(pld, config, rng);
  task.gate_draw = eta;
  return task;
}

std::vector<FewShotTask> sample_task_batch(const PseudoLabeledDataset& pld,
                                           const ClusterModel& clusters,
                                           const EvaluationModel* eval,
                                           const EpisodeConfig& config, std::size_t batch_size,
                                           bool progressive_mode, Rng& rng) {
  std::vector<FewShotTask> batch;
  batch.reserve(batch_size);
  if (!progressive_mode) {
    for (std::size_t t = 0; t < batch_size; ++t) batch.push_back(sample_standard_task(pld, config, rng));
    return batch;
  }
  const double eta = rng.uniform();
  const bool open = eta > config.gate_threshold && eval != nullptr;
  for (std::size_t t = 0; t < batch_size; ++t) {
    FewShotTask task;
    bool built = false;
    if (open) {
      Rng attempt(Rng::derive_seed(rng.next_u64(), t));
      try {
        task = build_progressive_task(pld, clusters, *eval, config, attempt);
        built = true;
      } catch (const ConstructionError&) {
      }
    }
    if (!built) task = sample_standard_task(pld, config, rng);
    task.gate_draw = eta;
    batch.push_back(std::move(task));
  }
  return batch;
}

void write_tasks_csv(const std::filesystem::path& path, std::span<const FewShotTask> tasks) {
  CsvWriter csv({"task_id", "role", "way", "sample_index", "source_cluster", "progressive_flag"});
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const FewShotTask& task = tasks[t];
    auto emit = [&](const TaskExample& e, std::string_view role) {
      const bool progressive = task.provenance.at(e.way).progressive;
      csv.field(t).field(role).field(static_cast<std::size_t>(e.way)).field(e.sample);
      csv.field(e.cluster).field(progressive ? 1 : 0);
      csv.end_row();
    };
    for (const TaskExample& e : task.support) emit(e, "support");
    for (const TaskExample& e : task.query) emit(e, "query");
  }
  csv.save(path);
}

}  // namespace plcfe
