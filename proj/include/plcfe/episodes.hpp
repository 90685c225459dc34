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

// Few-shot task construction from pseudo-labels.
//
// Standard tasks draw N clusters and split K + Q members of each into
// support and query. Progressive tasks keep the support from N base
// clusters but take each way's queries from a neighbouring cluster: among
// the K_bar nearest clusters, the one whose members the evaluation model
// (finetuned on the support) is least certain about, after dropping the
// members it scores lowest for that way.

#ifndef PLCFE_EPISODES_HPP_
#define PLCFE_EPISODES_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "plcfe/cluster.hpp"
#include "plcfe/matrix.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

struct EpisodeConfig {
  std::size_t ways = 5;      // N
  std::size_t shots = 1;     // K
  std::size_t queries = 5;   // Q per way
  std::size_t k_bar = 5;     // candidate neighbours
  double beta = 0.75;        // keep rate
  double gate_threshold = 0.9;
  std::uint64_t seed = 0;
};

// Throws ValidationError naming the offending field.
void validate(const EpisodeConfig& config);

struct TaskExample {
  std::size_t sample = 0;    // row in the samples matrix
  std::uint32_t way = 0;
  std::size_t cluster = 0;   // source cluster
};

struct WayProvenance {
  std::size_t base_cluster = 0;
  std::size_t query_cluster = 0;
  bool progressive = false;
  bool fallback = false;  // filtering left too few members; base cluster used
};

struct FewShotTask {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t queries = 0;
  std::vector<TaskExample> support;  // way-major, K per way
  std::vector<TaskExample> query;    // way-major, Q per way
  std::vector<WayProvenance> provenance;
  bool progressive = false;
  double gate_draw = 0.0;  // eta, or 0 when no gate was drawn
};

// Checks counts, way-label ranges and that no sample appears twice in a
// task. Returns an empty string when well formed, else the first problem.
std::string task_problem(const FewShotTask& task);

// Finetuned evaluation model: N-way class probabilities per row.
class TaskScorer {
 public:
  virtual ~TaskScorer() = default;
  virtual Matrix probabilities(const Matrix& samples) const = 0;
};

// Snapshot of a meta-learned model that can be finetuned on a support set.
class EvaluationModel {
 public:
  virtual ~EvaluationModel() = default;
  virtual std::unique_ptr<TaskScorer> finetune(const Matrix& support,
                                               std::span<const std::uint32_t> ways,
                                               std::size_t way_count) const = 0;
};

// Throws ConstructionError when fewer than N clusters hold K + Q members.
FewShotTask sample_standard_task(const PseudoLabeledDataset& pld, const EpisodeConfig& config,
                                 Rng& rng);

// Argmax label per row (ties to the lower way).
std::vector<std::uint32_t> predicted_labels(const TaskScorer& scorer, const Matrix& samples);

// Natural-log entropy of a label histogram; 0 log 0 = 0.
double entropy_of_counts(std::span<const std::size_t> counts);

// Entropy of the predicted-label frequencies over a cluster's members.
// Throws ParameterError for an empty cluster.
double cluster_entropy(const Matrix& samples, std::span<const std::size_t> members,
                       const TaskScorer& scorer, std::size_t ways);

// Candidate with the highest cluster entropy; ties keep list order. Empty
// clusters are skipped; ConstructionError when all are empty.
std::size_t select_final_cluster(std::span<const std::size_t> candidates,
                                 const PseudoLabeledDataset& pld, const TaskScorer& scorer,
                                 std::size_t ways);

// Members sorted by descending probability of `way` (ties by position in
// `members`), truncated to floor(beta * |members|). Throws ConstructionError
// when fewer than min_keep would remain.
std::vector<std::size_t> filter_noisy(const Matrix& samples, std::span<const std::size_t> members,
                                      const TaskScorer& scorer, std::size_t way, double beta,
                                      std::size_t min_keep = 0);

// Progressive construction without the gate. Throws ConstructionError when
// the clusters cannot supply a well-formed task.
FewShotTask build_progressive_task(const PseudoLabeledDataset& pld, const ClusterModel& clusters,
                                   const EvaluationModel& eval, const EpisodeConfig& config,
                                   Rng& rng);

// Draws eta ~ U(0, 1). If eta > gate_threshold and an evaluation model is
// available, builds a progressive task; otherwise a standard one. A
// progressive attempt that cannot be completed degrades to a standard task.
FewShotTask sample_progressive_task(const PseudoLabeledDataset& pld, const ClusterModel& clusters,
                                    const EvaluationModel* eval, const EpisodeConfig& config,
                                    Rng& rng);

// A meta-batch sharing one gate draw.
std::vector<FewShotTask> sample_task_batch(const PseudoLabeledDataset& pld,
                                           const ClusterModel& clusters,
                                           const EvaluationModel* eval,
                                           const EpisodeConfig& config, std::size_t batch_size,
                                           bool progressive_mode, Rng& rng);

// One line per example: task_id, role, way, sample_index, source_cluster,
// progressive_flag.
void write_tasks_csv(const std::filesystem::path& path, std::span<const FewShotTask> tasks);

}  // namespace plcfe

#endif  // PLCFE_EPISODES_HPP_
