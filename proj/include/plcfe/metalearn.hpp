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

// Few-shot learners trained on pseudo-labeled tasks.
//
// Two methods share one model type. MAML learns an initialization of a
// network whose last layer is the N-way head and adapts it to each task by
// a few gradient steps on the support set. The prototype method learns an
// encoder and classifies queries by distance to per-way support means.

#ifndef PLCFE_METALEARN_HPP_
#define PLCFE_METALEARN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plcfe/checkpoint.hpp"
#include "plcfe/cluster.hpp"
#include "plcfe/episodes.hpp"
#include "plcfe/matrix.hpp"
#include "plcfe/mlp.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

enum class Method : std::uint8_t { kMaml = 0, kProto = 1 };

std::string to_string(Method method);
// Throws ValidationError for anything but "maml" or "proto".
Method parse_method(const std::string& text);

struct MamlConfig {
  double inner_lr = 0.05;  // alpha
  std::size_t inner_steps = 5;
  double outer_lr = 0.001;
  std::size_t meta_batch_size = 4;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 100;
  bool first_order = true;
  std::uint64_t seed = 0;
};

// Throws ValidationError naming the offending field.
void validate(const MamlConfig& config);

struct FewShotModel {
  Method method = Method::kMaml;
  std::size_t ways = 0;
  // MAML: the last layer is the linear N-way head. Proto: the encoder.
  MlpParams net;
};

// Hidden relu layers followed by a linear output layer of size `ways`
// (MAML) or `embedding_dim` (proto).
FewShotModel make_fewshot_model(Method method, std::size_t input_dim,
                                const std::vector<std::size_t>& hidden, std::size_t ways,
                                std::size_t embedding_dim, Rng& rng);

Checkpoint to_checkpoint(const FewShotModel& model);
FewShotModel fewshot_model_from(const Checkpoint& checkpoint);

struct LabeledBatch {
  Matrix samples;
  std::vector<std::uint32_t> labels;
};

struct TaskData {
  LabeledBatch support;
  LabeledBatch query;
};

TaskData gather_task(const FewShotTask& task, const Matrix& samples);

Matrix softmax_rows(const Matrix& scores);

struct CrossEntropy {
  double loss = 0.0;
  Matrix probabilities;
  Matrix grad_scores;  // (p - onehot) / rows
};

// Mean cross-entropy of softmax(scores). Throws NumericError on a
// non-finite loss and ParameterError on a label outside the score columns.
CrossEntropy softmax_cross_entropy(const Matrix& scores, std::span<const std::uint32_t> labels);

// Fills grad with dL/dtheta and returns L.
using LossGradFn = std::function<double(std::span<const double> theta, std::vector<double>& grad)>;

// `steps` plain gradient-descent updates. Throws NumericError on a
// non-finite loss.
std::vector<double> gradient_descent(std::span<const double> theta, const LossGradFn& fn,
                                     double alpha, std::size_t steps);

// Mean support cross-entropy of the network output and its parameter gradient.
double supervised_loss(const MlpParams& net, const LabeledBatch& batch, std::vector<double>* grad);

// Support-loss Hessian of the network times `direction`.
std::vector<double> supervised_hvp(const MlpParams& net, const LabeledBatch& batch,
                                   std::span<const double> direction);

// MAML adaptation; returns an adapted copy.
FewShotModel maml_inner_adapt(const FewShotModel& model, const LabeledBatch& support,
                              double alpha, std::size_t steps);

// prototype = per-way mean, score(q, i) = -|q - prototype_i|^2.
// Throws ParameterError when a way has no support embedding.
Matrix proto_classify(const Matrix& support_embeddings, std::span<const std::uint32_t> labels,
                      const Matrix& query_embeddings, std::size_t ways);

// Query cross-entropy of the prototype classifier, differentiated through
// both support and query embeddings.
double proto_task_loss(const MlpParams& encoder, const TaskData& task, std::size_t ways,
                       std::vector<double>* grad);

// Gradient of the post-adaptation query loss, averaged over tasks.
struct MetaGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

MetaGradient meta_gradient(const FewShotModel& model, std::span<const TaskData> tasks,
                           const MamlConfig& config);

class AdamState {
 public:
  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

// One outer update with Adam at outer_lr. An empty batch leaves the model
// and optimizer untouched. Returns the mean query loss.
double maml_meta_step(FewShotModel& model, std::span<const TaskData> tasks,
                      const MamlConfig& config, AdamState& optimizer);

// Class probabilities for a task's queries after fitting the support:
// MAML adapts (when `adapt`) then applies softmax to the head; proto
// applies softmax to prototype scores.
Matrix predict_task(const FewShotModel& model, const TaskData& task, bool adapt,
                    const MamlConfig& config);

struct FewShotScore {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(tasks)
  std::vector<double> accuracies;
};

// Throws ParameterError for an empty task list.
FewShotScore evaluate_fewshot(const FewShotModel& model, std::span<const TaskData> tasks,
                              bool adapt, const MamlConfig& config);

// Frozen copy of a model taken at the end of an epoch.
class ModelSnapshot : public EvaluationModel {
 public:
  ModelSnapshot(FewShotModel model, std::size_t epoch, double inner_lr, std::size_t inner_steps)
      : model_(std::move(model)), epoch_(epoch), inner_lr_(inner_lr), inner_steps_(inner_steps) {}

  const FewShotModel& model() const { return model_; }
  std::size_t epoch() const { return epoch_; }

  std::unique_ptr<TaskScorer> finetune(const Matrix& support, std::span<const std::uint32_t> ways,
                                       std::size_t way_count) const override;

 private:
  FewShotModel model_;
  std::size_t epoch_;
  double inner_lr_;
  std::size_t inner_steps_;
};

std::shared_ptr<const ModelSnapshot> snapshot_eval_model(const FewShotModel& model,
                                                         std::size_t epoch,
                                                         const MamlConfig& config);

// Holds the evaluation model episodes should use: the latest snapshot.
class EvaluationRegistry {
 public:
  void publish(std::shared_ptr<const ModelSnapshot> snapshot);
  const ModelSnapshot* current() const { return current_.get(); }

 private:
  std::shared_ptr<const ModelSnapshot> current_;
};

struct MetaTrainResult {
  FewShotModel model;
  std::vector<double> epoch_loss;           // mean query loss per epoch
  std::vector<double> progressive_fraction; // per epoch
  std::vector<FewShotTask> last_epoch_tasks;
};

// Samples meta-batches from the pseudo-labeled data (standard or
// progressive episodes), takes steps_per_epoch meta-steps per epoch and
// publishes a snapshot at every epoch end.
MetaTrainResult meta_train(FewShotModel model, const PseudoLabeledDataset& pld,
                           const ClusterModel& clusters, const EpisodeConfig& episodes,
                           bool progressive, const MamlConfig& config, Rng& rng);

void write_meta_train_csv(const std::filesystem::path& path, const MetaTrainResult& result);

struct EvalRow {
  std::size_t shots = 0;
  std::size_t ways = 0;
  FewShotScore score;
};

// Columns: task_count, shots, ways, mean_acc, ci95.
void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows);

}  // namespace plcfe

#endif  // PLCFE_METALEARN_HPP_
