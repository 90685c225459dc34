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

#include "plcfe/metalearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

std::string to_string(Method method) {
  return method == Method::kMaml ? "maml" : "proto";
}

Method parse_method(const std::string& text) {
  if (text == "maml") return Method::kMaml;
  if (text == "proto") return Method::kProto;
  throw ValidationError("method", "expected 'maml' or 'proto', got '" + text + "'");
}

void validate(const MamlConfig& config) {
  if (!(config.inner_lr >= 0.0) || !std::isfinite(config.inner_lr)) {
    throw ValidationError("maml.inner_lr", "must be a finite non-negative number");
  }
  if (config.inner_steps < 1) throw ValidationError("maml.inner_steps", "must be at least 1");
  if (!(config.outer_lr > 0.0) || !std::isfinite(config.outer_lr)) {
    throw ValidationError("maml.outer_lr", "must be positive");
  }
  if (config.meta_batch_size < 1) {
    throw ValidationError("maml.meta_batch_size", "must be at least 1");
  }
  if (config.steps_per_epoch < 1) {
    throw ValidationError("maml.steps_per_epoch", "must be at least 1");
  }
}

FewShotModel make_fewshot_model(Method method, std::size_t input_dim,
                                const std::vector<std::size_t>& hidden, std::size_t ways,
                                std::size_t embedding_dim, Rng& rng) {
  if (ways < 2) throw ParameterError("a few-shot model needs at least two ways");
  std::vector<LayerSpec> layers;
  for (std::size_t h : hidden) layers.push_back({h, Activation::kRelu});
  layers.push_back({method == Method::kMaml ? ways : embedding_dim, Activation::kIdentity});
  FewShotModel model{method, ways, MlpParams(input_dim, layers)};
  model.net.init_random(rng);
  return model;
}

Checkpoint to_checkpoint(const FewShotModel& model) {
  const ModelKind kind = model.method == Method::kMaml ? ModelKind::kMaml : ModelKind::kProto;
  return Checkpoint{kind, static_cast<std::uint32_t>(model.ways), {model.net}};
}

FewShotModel fewshot_model_from(const Checkpoint& checkpoint) {
  if (checkpoint.sets.size() != 1 ||
      (checkpoint.kind != ModelKind::kMaml && checkpoint.kind != ModelKind::kProto)) {
    throw FormatError("checkpoint does not hold a few-shot model", 0);
  }
  const Method method = checkpoint.kind == ModelKind::kMaml ? Method::kMaml : Method::kProto;
  if (method == Method::kMaml && checkpoint.sets[0].output_dim() != checkpoint.ways) {
    throw FormatError("MAML head width does not match the way count", 0);
  }
  return FewShotModel{method, checkpoint.ways, checkpoint.sets[0]};
}

TaskData gather_task(const FewShotTask& task, const Matrix& samples) {
  TaskData data;
  std::vector<std::size_t> rows;
  for (const TaskExample& e : task.support) {
    rows.push_back(e.sample);
    data.support.labels.push_back(e.way);
  }
  data.support.samples = samples.gather_rows(rows);
  rows.clear();
  for (const TaskExample& e : task.query) {
    rows.push_back(e.sample);
    data.query.labels.push_back(e.way);
  }
  data.query.samples = samples.gather_rows(rows);
  return data;
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto s = scores.row(r);
    auto out = p.row(r);
    const double top = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (std::size_t c = 0; c < s.size(); ++c) z += (out[c] = std::exp(s[c] - top));
    for (double& v : out) v /= z;
  }
  return p;
}

CrossEntropy softmax_cross_entropy(const Matrix& scores, std::span<const std::uint32_t> labels) {
  if (labels.size() != scores.rows()) throw ShapeError("one label per score row required");
  if (scores.rows() == 0) throw ParameterError("cross-entropy of an empty batch");
  CrossEntropy ce;
  ce.probabilities = softmax_rows(scores);
  ce.grad_scores = ce.probabilities;
  const double inv = 1.0 / static_cast<double>(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    if (labels[r] >= scores.cols()) throw ParameterError("label exceeds the score columns");
    const auto s = scores.row(r);
    const double top = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - top);
    ce.loss += (top + std::log(z) - s[labels[r]]) * inv;
    auto g = ce.grad_scores.row(r);
    g[labels[r]] -= 1.0;
    for (double& v : g) v *= inv;
  }
  if (!std::isfinite(ce.loss)) throw NumericError("non-finite cross-entropy");
  return ce;
}

std::vector<double> gradient_descent(std::span<const double> theta, const LossGradFn& fn,
                                     double alpha, std::size_t steps) {
  std::vector<double> current(theta.begin(), theta.end());
  std::vector<double> grad;
  for (std::size_t t = 0; t < steps; ++t) {
    grad.assign(current.size(), 0.0);
    const double loss = fn(current, grad);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss at inner step " + std::to_string(t));
    }
    for (std::size_t i = 0; i < current.size(); ++i) current[i] -= alpha * grad[i];
  }
  return current;
}

double supervised_loss(const MlpParams& net, const LabeledBatch& batch,
                       std::vector<double>* grad) {
  const MlpForward fwd = mlp_forward(net, batch.samples);
  const CrossEntropy ce = softmax_cross_entropy(fwd.output, batch.labels);
  if (grad != nullptr) *grad = mlp_backward(net, fwd.cache, ce.grad_scores).params;
  return ce.loss;
}

std::vector<double> supervised_hvp(const MlpParams& net, const LabeledBatch& batch,
                                   std::span<const double> direction) {
  const MlpForward fwd = mlp_forward(net, batch.samples);
  const CrossEntropy ce = softmax_cross_entropy(fwd.output, batch.labels);
  const MlpRForward rf = mlp_r_forward(net, fwd.cache, direction);
  const Matrix& r_scores = rf.post.back();
  const Matrix& p = ce.probabilities;
  const double inv = 1.0 / static_cast<double>(p.rows());
  Matrix r_grad(p.rows(), p.cols());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double mean = dot(p.row(r), r_scores.row(r));
    for (std::size_t c = 0; c < p.cols(); ++c) {
      r_grad(r, c) = p(r, c) * (r_scores(r, c) - mean) * inv;
    }
  }
  return mlp_r_backward(net, fwd.cache, rf, direction, ce.grad_scores, r_grad);
}

namespace {

void require_maml(const FewShotModel& model) {
  if (model.method != Method::kMaml) throw ParameterError("operation needs a MAML model");
  if (model.net.output_dim() != model.ways) {
    throw ShapeError("MAML head width does not match the way count");
  }
}

MlpParams with_values(const MlpParams& like, std::span<const double> values) {
  MlpParams out = like;
  out.assign(values);
  return out;
}

// Inner trajectory theta_0 .. theta_steps.
std::vector<std::vector<double>> adapt_trajectory(const MlpParams& net, const LabeledBatch& support,
                                                  double alpha, std::size_t steps) {
  std::vector<std::vector<double>> path;
  path.emplace_back(net.values().begin(), net.values().end());
  MlpParams work = net;
  std::vector<double> grad;
  for (std::size_t t = 0; t < steps; ++t) {
    work.assign(path.back());
    supervised_loss(work, support, &grad);
    std::vector<double> next = path.back();
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= alpha * grad[i];
    path.push_back(std::move(next));
  }
  return path;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() && !a.empty() && !b.empty()) throw ShapeError("column mismatch");
  Matrix out(a.rows() + b.rows(), a.empty() ? b.cols() : a.cols());
  std::copy(a.values().begin(), a.values().end(), out.data().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(a.values().size()));
  return out;
}

Matrix prototypes(const Matrix& support, std::span<const std::uint32_t> labels, std::size_t ways,
                  std::vector<std::size_t>* counts_out) {
  if (labels.size() != support.rows()) throw ShapeError("one label per support row required");
  Matrix protos(ways, support.cols());
  std::vector<std::size_t> counts(ways, 0);
  for (std::size_t r = 0; r < support.rows(); ++r) {
    if (labels[r] >= ways) throw ParameterError("support label exceeds the way count");
    ++counts[labels[r]];
    auto p = protos.row(labels[r]);
    auto s = support.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) p[c] += s[c];
  }
  for (std::size_t w = 0; w < ways; ++w) {
    if (counts[w] == 0) throw ParameterError("way " + std::to_string(w) + " has no support");
    for (double& v : protos.row(w)) v /= static_cast<double>(counts[w]);
  }
  if (counts_out != nullptr) *counts_out = std::move(counts);
  return protos;
}

Matrix distance_scores(const Matrix& queries, const Matrix& protos) {
  Matrix scores(queries.rows(), protos.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    for (std::size_t w = 0; w < protos.rows(); ++w) {
      scores(q, w) = -squared_distance(queries.row(q), protos.row(w));
    }
  }
  return scores;
}

class HeadScorer : public TaskScorer {
 public:
  explicit HeadScorer(MlpParams net) : net_(std::move(net)) {}
  Matrix probabilities(const Matrix& samples) const override {
    return softmax_rows(mlp_forward(net_, samples).output);
  }

 private:
  MlpParams net_;
};

class PrototypeScorer : public TaskScorer {
 public:
  PrototypeScorer(MlpParams encoder, Matrix protos)
      : encoder_(std::move(encoder)), protos_(std::move(protos)) {}
  Matrix probabilities(const Matrix& samples) const override {
    return softmax_rows(distance_scores(mlp_forward(encoder_, samples).output, protos_));
  }

 private:
  MlpParams encoder_;
  Matrix protos_;
};

}  // namespace

FewShotModel maml_inner_adapt(const FewShotModel& model, const LabeledBatch& support,
                              double alpha, std::size_t steps) {
  require_maml(model);
  if (support.samples.rows() == 0) throw ParameterError("empty support set");
  for (std::uint32_t y : support.labels) {
    if (y >= model.ways) throw ParameterError("support label exceeds the way count");
  }
  MlpParams work = model.net;
  const LossGradFn fn = [&](std::span<const double> theta, std::vector<double>& grad) {
    work.assign(theta);
    return supervised_loss(work, support, &grad);
  };
  FewShotModel adapted = model;
  adapted.net.assign(gradient_descent(model.net.values(), fn, alpha, steps));
  return adapted;
}

Matrix proto_classify(const Matrix& support_embeddings, std::span<const std::uint32_t> labels,
                      const Matrix& query_embeddings, std::size_t ways) {
  if (support_embeddings.cols() != query_embeddings.cols()) {
    throw ShapeError("support and query embeddings differ in width");
  }
  return distance_scores(query_embeddings, prototypes(support_embeddings, labels, ways, nullptr));
}

double proto_task_loss(const MlpParams& encoder, const TaskData& task, std::size_t ways,
                       std::vector<double>* grad) {
  const std::size_t ns = task.support.samples.rows();
  const std::size_t nq = task.query.samples.rows();
  const MlpForward fwd = mlp_forward(encoder, vstack(task.support.samples, task.query.samples));
  const Matrix& emb = fwd.output;
  const std::size_t d = emb.cols();
  Matrix support_emb(ns, d);
  Matrix query_emb(nq, d);
  std::copy(emb.values().begin(), emb.values().begin() + static_cast<std::ptrdiff_t>(ns * d),
            support_emb.data().begin());
  std::copy(emb.values().begin() + static_cast<std::ptrdiff_t>(ns * d), emb.values().end(),
            query_emb.data().begin());

  std::vector<std::size_t> counts;
  const Matrix protos = prototypes(support_emb, task.support.labels, ways, &counts);
  const CrossEntropy ce = softmax_cross_entropy(distance_scores(query_emb, protos),
                                                task.query.labels);
  if (grad == nullptr) return ce.loss;

  // score(q, w) = -|e_q - c_w|^2
  Matrix g_emb(ns + nq, d);
  Matrix g_proto(ways, d);
  for (std::size_t q = 0; q < nq; ++q) {
    auto gq = g_emb.row(ns + q);
    for (std::size_t w = 0; w < ways; ++w) {
      const double g = ce.grad_scores(q, w);
      if (g == 0.0) continue;
      auto gc = g_proto.row(w);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = query_emb(q, c) - protos(w, c);
        gq[c] -= 2.0 * g * diff;
        gc[c] += 2.0 * g * diff;
      }
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    const std::uint32_t w = task.support.labels[s];
    const double share = 1.0 / static_cast<double>(counts[w]);
    auto gs = g_emb.row(s);
    for (std::size_t c = 0; c < d; ++c) gs[c] = g_proto(w, c) * share;
  }
  *grad = mlp_backward(encoder, fwd.cache, g_emb).params;
  return ce.loss;
}

MetaGradient meta_gradient(const FewShotModel& model, std::span<const TaskData> tasks,
                           const MamlConfig& config) {
  MetaGradient out;
  out.grad.assign(model.net.parameter_count(), 0.0);
  if (tasks.empty()) return out;
  if (model.method == Method::kMaml) require_maml(model);
  const double share = 1.0 / static_cast<double>(tasks.size());
  std::vector<double> g;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const TaskData& task = tasks[t];
    try {
      double loss = 0.0;
      if (model.method == Method::kProto) {
        loss = proto_task_loss(model.net, task, model.ways, &g);
      } else {
        const auto path =
            adapt_trajectory(model.net, task.support, config.inner_lr, config.inner_steps);
        loss = supervised_loss(with_values(model.net, path.back()), task.query, &g);
        if (!config.first_order) {
          // Back through theta_{s+1} = theta_s - alpha * grad L_support(theta_s).
          for (std::size_t s = config.inner_steps; s-- > 0;) {
            const std::vector<double> hv =
                supervised_hvp(with_values(model.net, path[s]), task.support, g);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= config.inner_lr * hv[i];
          }
        }
      }
      if (!std::isfinite(loss)) throw NumericError("non-finite query loss");
      out.loss += share * loss;
      for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += share * g[i];
    } catch (const NumericError& e) {
      throw NumericError("task " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

void AdamState::step(std::span<double> params, std::span<const double> grad, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (params.size() != grad.size()) throw ShapeError("gradient length differs from parameters");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw StateError("optimizer state belongs to another model");
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
  }
}

double maml_meta_step(FewShotModel& model, std::span<const TaskData> tasks,
                      const MamlConfig& config, AdamState& optimizer) {
  if (tasks.empty()) return 0.0;
  const MetaGradient mg = meta_gradient(model, tasks, config);
  optimizer.step(model.net.values(), mg.grad, config.outer_lr);
  return mg.loss;
}

Matrix predict_task(const FewShotModel& model, const TaskData& task, bool adapt,
                    const MamlConfig& config) {
  if (model.method == Method::kProto) {
    const Matrix support = mlp_forward(model.net, task.support.samples).output;
    const Matrix query = mlp_forward(model.net, task.query.samples).output;
    return softmax_rows(proto_classify(support, task.support.labels, query, model.ways));
  }
  const FewShotModel fitted =
      adapt ? maml_inner_adapt(model, task.support, config.inner_lr, config.inner_steps) : model;
  return softmax_rows(mlp_forward(fitted.net, task.query.samples).output);
}

FewShotScore evaluate_fewshot(const FewShotModel& model, std::span<const TaskData> tasks,
                              bool adapt, const MamlConfig& config) {
  if (tasks.empty()) throw ParameterError("evaluation needs at least one task");
  FewShotScore score;
  for (const TaskData& task : tasks) {
    const Matrix probs = predict_task(model, task, adapt, config);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < probs.rows(); ++q) {
      const auto row = probs.row(q);
      const auto pred = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) -
                                                   row.begin());
      if (pred == task.query.labels[q]) ++hits;
    }
    score.accuracies.push_back(static_cast<double>(hits) / static_cast<double>(probs.rows()));
  }
  const double n = static_cast<double>(score.accuracies.size());
  double sum = 0.0;
  for (double a : score.accuracies) sum += a;
  score.mean_accuracy = sum / n;
  if (score.accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : score.accuracies) ss += (a - score.mean_accuracy) * (a - score.mean_accuracy);
    score.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return score;
}

std::unique_ptr<TaskScorer> ModelSnapshot::finetune(const Matrix& support,
                                                    std::span<const std::uint32_t> ways,
                                                    std::size_t way_count) const {
  if (way_count != model_.ways) {
    throw ParameterError("snapshot was trained for " + std::to_string(model_.ways) + " ways");
  }
  if (model_.method == Method::kProto) {
    const Matrix emb = mlp_forward(model_.net, support).output;
    return std::make_unique<PrototypeScorer>(model_.net, prototypes(emb, ways, way_count, nullptr));
  }
  LabeledBatch batch{support, std::vector<std::uint32_t>(ways.begin(), ways.end())};
  return std::make_unique<HeadScorer>(
      maml_inner_adapt(model_, batch, inner_lr_, inner_steps_).net);
}

std::shared_ptr<const ModelSnapshot> snapshot_eval_model(const FewShotModel& model,
                                                         std::size_t epoch,
                                                         const MamlConfig& config) {
  return std::make_shared<const ModelSnapshot>(model, epoch, config.inner_lr, config.inner_steps);
}

void EvaluationRegistry::publish(std::shared_ptr<const ModelSnapshot> snapshot) {
  if (snapshot == nullptr) throw ParameterError("cannot publish an empty snapshot");
  if (current_ != nullptr && snapshot->epoch() < current_->epoch()) {
    throw StateError("snapshot is older than the current evaluation model");
  }
  current_ = std::move(snapshot);
}

MetaTrainResult meta_train(FewShotModel model, const PseudoLabeledDataset& pld,
                           const ClusterModel& clusters, const EpisodeConfig& episodes,
                           bool progressive, const MamlConfig& config, Rng& rng) {
  validate(config);
  validate(episodes);
  if (episodes.ways != model.ways) {
    throw ParameterError("episode way count differs from the model's");
  }
  MetaTrainResult result;
  EvaluationRegistry registry;
  AdamState optimizer;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const bool last = epoch + 1 == config.epochs;
    double loss_sum = 0.0;
    std::size_t progressive_tasks = 0;
    std::size_t task_count = 0;
    for (std::size_t step = 0; step < config.steps_per_epoch; ++step) {
      std::vector<FewShotTask> batch = sample_task_batch(
          pld, clusters, registry.current(), episodes, config.meta_batch_size, progressive, rng);
      std::vector<TaskData> data;
      data.reserve(batch.size());
      for (const FewShotTask& task : batch) {
        data.push_back(gather_task(task, pld.samples));
        if (task.progressive) ++progressive_tasks;
      }
      task_count += batch.size();
      try {
        loss_sum += maml_meta_step(model, data, config, optimizer);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + e.what());
      }
      if (last) {
        for (FewShotTask& task : batch) result.last_epoch_tasks.push_back(std::move(task));
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(config.steps_per_epoch));
    result.progressive_fraction.push_back(static_cast<double>(progressive_tasks) /
                                          static_cast<double>(task_count));
    registry.publish(snapshot_eval_model(model, epoch, config));
  }
  result.model = std::move(model);
  return result;
}

void write_meta_train_csv(const std::filesystem::path& path, const MetaTrainResult& result) {
  CsvWriter csv({"epoch", "query_loss", "progressive_fraction"});
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    csv.field(e).field(result.epoch_loss[e]).field(result.progressive_fraction[e]);
    csv.end_row();
  }
  csv.save(path);
}

void write_eval_csv(const std::filesystem::path& path, std::span<const EvalRow> rows) {
  CsvWriter csv({"task_count", "shots", "ways", "mean_acc", "ci95"});
  for (const EvalRow& row : rows) {
    csv.field(row.score.accuracies.size()).field(row.shots).field(row.ways);
    csv.field(row.score.mean_accuracy).field(row.score.ci95);
    csv.end_row();
  }
  csv.save(path);
}

}  // namespace plcfe
