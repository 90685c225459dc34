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

#include "plcfe/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "plcfe/binary_io.hpp"
#include "plcfe/checkpoint.hpp"
#include "plcfe/cluster.hpp"
#include "plcfe/csv.hpp"
#include "plcfe/data.hpp"
#include "plcfe/errors.hpp"
#include "plcfe/metrics.hpp"

namespace plcfe {

namespace {

using json = nlohmann::json;

enum StageStream : std::uint64_t {
  kDataStream = 1,
  kCfeStream = 2,
  kClusterStream = 3,
  kMetaStream = 4,
  kEvalStream = 5,
  kTaskStream = 6,
};

std::uint64_t stream_seed(const PipelineConfig& config, StageStream stream) {
  return Rng::derive_seed(config.seed, stream);
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    seen_.insert(key);
    assign(*it, name(key), out);
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    static const json kEmpty = json::object();
    return ObjectReader(it == object_.end() ? kEmpty : *it, name(key));
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (seen_.count(key) == 0) throw ValidationError(name(key.c_str()), "unknown key");
    }
  }

 private:
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  static void assign(const json& v, const std::string& field, std::size_t& out) {
    if (!v.is_number_unsigned()) throw ValidationError(field, "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void assign(const json& v, const std::string& field, double& out) {
    if (!v.is_number()) throw ValidationError(field, "expected a number");
    out = v.get<double>();
  }
  static void assign(const json& v, const std::string& field, bool& out) {
    if (!v.is_boolean()) throw ValidationError(field, "expected true or false");
    out = v.get<bool>();
  }
  static void assign(const json& v, const std::string& field, std::string& out) {
    if (!v.is_string()) throw ValidationError(field, "expected a string");
    out = v.get<std::string>();
  }
  static void assign(const json& v, const std::string& field, std::vector<std::size_t>& out) {
    if (!v.is_array()) throw ValidationError(field, "expected an array of integers");
    out.clear();
    for (const json& e : v) {
      std::size_t x = 0;
      assign(e, field, x);
      out.push_back(x);
    }
  }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["dataset"] = {{"train_classes", c.dataset.train_classes},
                  {"test_classes", c.dataset.test_classes},
                  {"per_class", c.dataset.per_class},
                  {"dim", c.dataset.dim},
                  {"separation", c.dataset.separation}};
  j["cfe"] = {{"positives", c.cfe.positives},
              {"augmentations", c.cfe.augmentations},
              {"queue_capacity", c.cfe.queue_capacity},
              {"tau", c.cfe.tau},
              {"momentum", c.cfe.momentum},
              {"epochs", c.cfe.epochs},
              {"learning_rate", c.cfe.learning_rate},
              {"normalize", c.cfe.normalize},
              {"hidden", c.cfe.hidden},
              {"embedding_dim", c.cfe.embedding_dim}};
  j["augment"] = {{"noise_std", c.cfe.augment.noise_std},
                  {"scale_lo", c.cfe.augment.scale_lo},
                  {"scale_hi", c.cfe.augment.scale_hi},
                  {"mask_prob", c.cfe.augment.mask_prob}};
  j["cluster"] = {{"k", c.cluster.k},
                  {"restarts", c.cluster.restarts},
                  {"max_iters", c.cluster.max_iters}};
  j["episodes"] = {{"ways", c.episodes.ways},
                   {"shots", c.episodes.shots},
                   {"queries", c.episodes.queries},
                   {"k_bar", c.episodes.k_bar},
                   {"beta", c.episodes.beta},
                   {"gate_threshold", c.episodes.gate_threshold}};
  j["maml"] = {{"inner_lr", c.maml.inner_lr},
               {"inner_steps", c.maml.inner_steps},
               {"outer_lr", c.maml.outer_lr},
               {"meta_batch_size", c.maml.meta_batch_size},
               {"epochs", c.maml.epochs},
               {"steps_per_epoch", c.maml.steps_per_epoch},
               {"first_order", c.maml.first_order}};
  j["fewshot"] = {{"method", to_string(c.fewshot.method)},
                  {"episodes", c.fewshot.progressive ? "progressive" : "standard"},
                  {"hidden", c.fewshot.hidden},
                  {"embedding_dim", c.fewshot.embedding_dim},
                  {"eval_tasks", c.fewshot.eval_tasks},
                  {"eval_shots", c.fewshot.eval_shots},
                  {"dump_tasks", c.fewshot.dump_tasks}};
  return j;
}

// Rethrows failures as StageError(name).
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::filesystem::path artifact(const PipelineConfig& c, const std::string& name) {
  return c.out / name;
}

std::string model_file(const PipelineConfig& c) {
  return "model_" + to_string(c.fewshot.method) + ".plcf";
}

LabeledEmbeddings labeled(const Matrix& emb, const StoredDataset& ds) {
  if (!ds.labels) throw FormatError("dataset has no labels to evaluate against", 0);
  return LabeledEmbeddings(emb, *ds.labels);
}

PseudoLabeledDataset pseudo_labels(const PipelineConfig& c, ClusterModel* model_out) {
  const StoredDataset ds = read_dataset(artifact(c, "dataset.plds"));
  const Matrix emb = read_embeddings(artifact(c, "embeddings.plem"));
  ClusterModel model =
      read_cluster_model(artifact(c, "assignments.csv"), artifact(c, "centers.csv"), &emb);
  PseudoLabeledDataset pld = assign_pseudo_labels(model, ds.data);
  if (model_out != nullptr) *model_out = std::move(model);
  return pld;
}

double cluster_purity(std::span<const std::uint32_t> clusters, std::size_t k,
                      std::span<const std::uint32_t> truth, std::size_t classes) {
  std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < clusters.size(); ++i) ++counts[clusters[i]][truth[i]];
  std::size_t majority = 0;
  for (const auto& row : counts) majority += *std::max_element(row.begin(), row.end());
  return static_cast<double>(majority) / static_cast<double>(clusters.size());
}

}  // namespace

void derive_seeds(PipelineConfig& config) {
  config.cfe.seed = stream_seed(config, kCfeStream);
  config.maml.seed = stream_seed(config, kMetaStream);
  config.episodes.seed = stream_seed(config, kTaskStream);
}

void validate(const PipelineConfig& c) {
  const DatasetDescriptor& d = c.dataset;
  if (d.train_classes < 2) throw ValidationError("dataset.train_classes", "must be at least 2");
  if (d.test_classes < 2) throw ValidationError("dataset.test_classes", "must be at least 2");
  if (d.per_class < 2) throw ValidationError("dataset.per_class", "must be at least 2");
  if (d.dim < 2) throw ValidationError("dataset.dim", "must be at least 2");
  if (!(d.separation > 0.0)) throw ValidationError("dataset.separation", "must be positive");
  validate(c.cfe);
  validate(c.episodes);
  validate(c.maml);
  const std::size_t n = d.train_classes * d.per_class;
  if (c.cfe.positives > n) throw ValidationError("cfe.positives", "exceeds the training set size");
  if (c.cluster.k < 2 || c.cluster.k > n) {
    throw ValidationError("cluster.k", "must lie in [2, training set size]");
  }
  if (c.cluster.k > 64 || d.train_classes > 64) {
    throw ValidationError(c.cluster.k > 64 ? "cluster.k" : "dataset.train_classes",
                          "accuracy matching supports at most 64 labels");
  }
  if (c.cluster.restarts < 1) throw ValidationError("cluster.restarts", "must be at least 1");
  if (c.cluster.max_iters < 1) throw ValidationError("cluster.max_iters", "must be at least 1");
  if (c.fewshot.progressive && c.episodes.k_bar >= c.cluster.k) {
    throw ValidationError("episodes.k_bar", "must be smaller than cluster.k");
  }
  if (c.episodes.ways > c.cluster.k) {
    throw ValidationError("episodes.ways", "exceeds cluster.k");
  }
  if (c.episodes.ways > d.test_classes) {
    throw ValidationError("episodes.ways", "exceeds dataset.test_classes");
  }
  if (c.fewshot.eval_tasks < 1) throw ValidationError("fewshot.eval_tasks", "must be at least 1");
  if (c.fewshot.eval_shots.empty()) throw ValidationError("fewshot.eval_shots", "must not be empty");
  for (std::size_t s : c.fewshot.eval_shots) {
    if (s < 1 || s + c.episodes.queries > d.per_class) {
      throw ValidationError("fewshot.eval_shots",
                            "each entry must be >= 1 and leave room for the queries");
    }
  }
  if (c.fewshot.method == Method::kProto && c.fewshot.embedding_dim < 1) {
    throw ValidationError("fewshot.embedding_dim", "must be at least 1");
  }
  for (std::size_t h : c.fewshot.hidden) {
    if (h < 1) throw ValidationError("fewshot.hidden", "layer widths must be at least 1");
  }
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError("<config>", std::string("not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  ObjectReader root(doc, "");
  static_assert(sizeof(std::size_t) == sizeof(std::uint64_t));
  std::size_t seed = c.seed;
  root.read("seed", seed);
  c.seed = seed;
  std::string out = c.out.string();
  root.read("out", out);
  c.out = out;

  ObjectReader data = root.child("dataset");
  data.read("train_classes", c.dataset.train_classes);
  data.read("test_classes", c.dataset.test_classes);
  data.read("per_class", c.dataset.per_class);
  data.read("dim", c.dataset.dim);
  data.read("separation", c.dataset.separation);
  data.finish();

  ObjectReader cfe = root.child("cfe");
  cfe.read("positives", c.cfe.positives);
  cfe.read("augmentations", c.cfe.augmentations);
  cfe.read("queue_capacity", c.cfe.queue_capacity);
  cfe.read("tau", c.cfe.tau);
  cfe.read("momentum", c.cfe.momentum);
  cfe.read("epochs", c.cfe.epochs);
  cfe.read("learning_rate", c.cfe.learning_rate);
  cfe.read("normalize", c.cfe.normalize);
  cfe.read("hidden", c.cfe.hidden);
  cfe.read("embedding_dim", c.cfe.embedding_dim);
  cfe.finish();

  ObjectReader aug = root.child("augment");
  aug.read("noise_std", c.cfe.augment.noise_std);
  aug.read("scale_lo", c.cfe.augment.scale_lo);
  aug.read("scale_hi", c.cfe.augment.scale_hi);
  aug.read("mask_prob", c.cfe.augment.mask_prob);
  aug.finish();

  ObjectReader cl = root.child("cluster");
  cl.read("k", c.cluster.k);
  cl.read("restarts", c.cluster.restarts);
  cl.read("max_iters", c.cluster.max_iters);
  cl.finish();

  ObjectReader ep = root.child("episodes");
  ep.read("ways", c.episodes.ways);
  ep.read("shots", c.episodes.shots);
  ep.read("queries", c.episodes.queries);
  ep.read("k_bar", c.episodes.k_bar);
  ep.read("beta", c.episodes.beta);
  ep.read("gate_threshold", c.episodes.gate_threshold);
  ep.finish();

  ObjectReader ml = root.child("maml");
  ml.read("inner_lr", c.maml.inner_lr);
  ml.read("inner_steps", c.maml.inner_steps);
  ml.read("outer_lr", c.maml.outer_lr);
  ml.read("meta_batch_size", c.maml.meta_batch_size);
  ml.read("epochs", c.maml.epochs);
  ml.read("steps_per_epoch", c.maml.steps_per_epoch);
  ml.read("first_order", c.maml.first_order);
  ml.finish();

  ObjectReader fs = root.child("fewshot");
  std::string method = to_string(c.fewshot.method);
  fs.read("method", method);
  try {
    c.fewshot.method = parse_method(method);
  } catch (const ValidationError&) {
    throw ValidationError("fewshot.method", "expected 'maml' or 'proto', got '" + method + "'");
  }
  std::string mode = c.fewshot.progressive ? "progressive" : "standard";
  fs.read("episodes", mode);
  if (mode != "progressive" && mode != "standard") {
    throw ValidationError("fewshot.episodes", "expected 'standard' or 'progressive'");
  }
  c.fewshot.progressive = mode == "progressive";
  fs.read("hidden", c.fewshot.hidden);
  fs.read("embedding_dim", c.fewshot.embedding_dim);
  fs.read("eval_tasks", c.fewshot.eval_tasks);
  fs.read("eval_shots", c.fewshot.eval_shots);
  fs.read("dump_tasks", c.fewshot.dump_tasks);
  fs.finish();

  root.finish();
  derive_seeds(c);
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_pipeline_config(std::string(bytes.begin(), bytes.end()));
}

std::string pipeline_config_json(const PipelineConfig& config) {
  return to_json(config).dump(2) + "\n";
}

void stage_gen_data(const PipelineConfig& c) {
  std::filesystem::create_directories(c.out);
  Rng rng(stream_seed(c, kDataStream));
  BlobSpec spec;
  spec.classes = c.dataset.train_classes + c.dataset.test_classes;
  spec.per_class = c.dataset.per_class;
  spec.dim = c.dataset.dim;
  spec.separation = c.dataset.separation;
  const LabeledDataset all = gen_blobs(spec, rng);
  const auto [train, test] = split_by_class(all, c.dataset.train_classes);
  write_dataset(artifact(c, "dataset.plds"), train.data, &train.labels);
  write_dataset(artifact(c, "test.plds"), test.data, &test.labels);
}

void stage_train_cfe(const PipelineConfig& c) {
  const StoredDataset ds = read_dataset(artifact(c, "dataset.plds"));
  Rng rng(c.cfe.seed);
  const CfeResult result = train_cfe(ds.data, c.cfe, rng);
  write_checkpoint(artifact(c, "cfe_init.plcf"), to_checkpoint(result.initial));
  write_checkpoint(artifact(c, "cfe.plcf"), to_checkpoint(result.trained));
  write_loss_trace_csv(artifact(c, "cfe_loss.csv"), result.epoch_loss);
}

void stage_embed(const PipelineConfig& c) {
  const StoredDataset ds = read_dataset(artifact(c, "dataset.plds"));
  const EncoderPair initial = encoder_pair_from(read_checkpoint(artifact(c, "cfe_init.plcf")));
  const EncoderPair trained = encoder_pair_from(read_checkpoint(artifact(c, "cfe.plcf")));
  write_embeddings(artifact(c, "embeddings_init.plem"),
                   embed(initial.main, ds.data.samples, c.cfe.normalize));
  write_embeddings(artifact(c, "embeddings.plem"),
                   embed(trained.main, ds.data.samples, c.cfe.normalize));
}

void stage_cluster(const PipelineConfig& c) {
  const Matrix emb = read_embeddings(artifact(c, "embeddings.plem"));
  Rng rng(stream_seed(c, kClusterStream));
  const ClusterModel model = kmeans(emb, c.cluster.k, c.cluster.max_iters, c.cluster.restarts, rng);
  write_cluster_model(artifact(c, "assignments.csv"), artifact(c, "centers.csv"), model);
}

void stage_metrics(const PipelineConfig& c) {
  const StoredDataset ds = read_dataset(artifact(c, "dataset.plds"));
  const std::pair<const char*, const char*> phases[] = {{"embeddings_init.plem", "before"},
                                                        {"embeddings.plem", "after"}};
  for (const auto& [file, phase] : phases) {
    const LabeledEmbeddings data = labeled(read_embeddings(artifact(c, file)), ds);
    write_similarity_csv(artifact(c, std::string("similarity_") + phase + ".csv"),
                         similarity_ratio(data, c.cfe.tau));
    write_projection_csv(artifact(c, std::string("pca_") + phase + ".csv"),
                         pca_project_2d(data.embeddings), data.labels);
  }
  const std::filesystem::path assignments = artifact(c, "assignments.csv");
  if (std::filesystem::exists(assignments)) {
    const ClusterModel model = read_cluster_model(assignments, artifact(c, "centers.csv"));
    const auto truth = ds.labels->ids();
    CsvWriter csv({"k", "classes", "accuracy", "purity"});
    csv.field(model.k).field(ds.labels->classes());
    csv.field(clustering_accuracy(model.assignment, truth));
    csv.field(cluster_purity(model.assignment, model.k, truth, ds.labels->classes()));
    csv.end_row();
    csv.save(artifact(c, "cluster_accuracy.csv"));
  }
}

void stage_build_tasks(const PipelineConfig& c) {
  ClusterModel clusters;
  const PseudoLabeledDataset pld = pseudo_labels(c, &clusters);
  std::shared_ptr<const ModelSnapshot> snapshot;
  const std::filesystem::path model_path = artifact(c, model_file(c));
  if (c.fewshot.progressive && std::filesystem::exists(model_path)) {
    snapshot = snapshot_eval_model(fewshot_model_from(read_checkpoint(model_path)), 0, c.maml);
  }
  Rng rng(c.episodes.seed);
  std::vector<FewShotTask> tasks;
  while (tasks.size() < c.fewshot.dump_tasks) {
    const std::size_t n = std::min(c.maml.meta_batch_size, c.fewshot.dump_tasks - tasks.size());
    for (FewShotTask& t : sample_task_batch(pld, clusters, snapshot.get(), c.episodes, n,
                                            c.fewshot.progressive, rng)) {
      tasks.push_back(std::move(t));
    }
  }
  write_tasks_csv(artifact(c, "tasks.csv"), tasks);
}

void stage_meta_train(const PipelineConfig& c) {
  ClusterModel clusters;
  const PseudoLabeledDataset pld = pseudo_labels(c, &clusters);
  Rng init_rng(Rng::derive_seed(c.maml.seed, 1));
  FewShotModel model = make_fewshot_model(c.fewshot.method, pld.samples.cols(), c.fewshot.hidden,
                                          c.episodes.ways, c.fewshot.embedding_dim, init_rng);
  Rng rng(Rng::derive_seed(c.maml.seed, 2));
  const MetaTrainResult result =
      meta_train(std::move(model), pld, clusters, c.episodes, c.fewshot.progressive, c.maml, rng);
  write_checkpoint(artifact(c, model_file(c)), to_checkpoint(result.model));
  write_meta_train_csv(artifact(c, "meta_train_" + to_string(c.fewshot.method) + ".csv"), result);
}

std::vector<EvalRow> stage_meta_eval(const PipelineConfig& c) {
  const StoredDataset test = read_dataset(artifact(c, "test.plds"));
  if (!test.labels) throw FormatError("test split has no labels", 0);
  const FewShotModel model = fewshot_model_from(read_checkpoint(artifact(c, model_file(c))));
  const auto ids = test.labels->ids();
  const PseudoLabeledDataset view =
      make_labeled_view(test.data.samples, std::vector<std::uint32_t>(ids.begin(), ids.end()),
                        test.labels->classes());
  std::vector<EvalRow> rows;
  for (std::size_t shots : c.fewshot.eval_shots) {
    EpisodeConfig ec = c.episodes;
    ec.shots = shots;
    Rng rng(Rng::derive_seed(stream_seed(c, kEvalStream), shots));
    std::vector<TaskData> tasks;
    tasks.reserve(c.fewshot.eval_tasks);
    for (std::size_t t = 0; t < c.fewshot.eval_tasks; ++t) {
      tasks.push_back(gather_task(sample_standard_task(view, ec, rng), view.samples));
    }
    rows.push_back({shots, ec.ways, evaluate_fewshot(model, tasks, true, c.maml)});
  }
  write_eval_csv(artifact(c, "eval_" + to_string(c.fewshot.method) + ".csv"), rows);
  return rows;
}

void run_pipeline(const PipelineConfig& config) {
  validate(config);
  run_stage("gen-data", [&] { stage_gen_data(config); });
  run_stage("train-cfe", [&] { stage_train_cfe(config); });
  run_stage("embed", [&] { stage_embed(config); });
  run_stage("cluster", [&] { stage_cluster(config); });
  run_stage("metrics", [&] { stage_metrics(config); });
  run_stage("meta-train", [&] { stage_meta_train(config); });
  run_stage("build-tasks", [&] { stage_build_tasks(config); });
  run_stage("meta-eval", [&] { return stage_meta_eval(config); });
  run_stage("manifest", [&] {
    json manifest;
    manifest["seed"] = config.seed;
    manifest["seeds"] = {{"data", stream_seed(config, kDataStream)},
                         {"cfe", config.cfe.seed},
                         {"cluster", stream_seed(config, kClusterStream)},
                         {"meta", config.maml.seed},
                         {"eval", stream_seed(config, kEvalStream)},
                         {"tasks", config.episodes.seed}};
    manifest["config"] = to_json(config);
    json files = json::object();
    for (const auto& entry : std::filesystem::directory_iterator(config.out)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_regular_file() || name == "manifest.json") continue;
      files[name] = sha256_file(entry.path());
    }
    manifest["artifacts"] = files;
    const std::string text = manifest.dump(2) + "\n";
    write_file_bytes(artifact(config, "manifest.json"),
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  });
}

std::string sha256_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed for " + path.string());
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace plcfe
