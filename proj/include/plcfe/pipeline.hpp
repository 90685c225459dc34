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

// End-to-end driver. Every stage reads its inputs from and writes its
// outputs to one run directory.
//
//   gen-data    -> dataset.plds, test.plds
//   train-cfe   -> cfe.plcf, cfe_init.plcf, cfe_loss.csv
//   embed       -> embeddings.plem, embeddings_init.plem
//   cluster     -> assignments.csv, centers.csv
//   metrics     -> similarity_{before,after}.csv, pca_{before,after}.csv,
//                  cluster_accuracy.csv
//   build-tasks -> tasks.csv
//   meta-train  -> model_<method>.plcf, meta_train_<method>.csv
//   meta-eval   -> eval_<method>.csv
//   pipeline    -> all of the above plus manifest.json

#ifndef PLCFE_PIPELINE_HPP_
#define PLCFE_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plcfe/cfe.hpp"
#include "plcfe/episodes.hpp"
#include "plcfe/errors.hpp"
#include "plcfe/metalearn.hpp"

namespace plcfe {

struct DatasetDescriptor {
  std::size_t train_classes = 16;
  std::size_t test_classes = 8;
  std::size_t per_class = 60;
  std::size_t dim = 16;
  double separation = 6.0;
};

struct ClusterSettings {
  std::size_t k = 64;
  std::size_t restarts = 3;
  std::size_t max_iters = 100;
};

struct FewShotSettings {
  Method method = Method::kMaml;
  bool progressive = true;
  std::vector<std::size_t> hidden = {64};
  std::size_t embedding_dim = 32;  // prototype encoder output
  std::size_t eval_tasks = 500;
  std::vector<std::size_t> eval_shots = {1, 5};
  std::size_t dump_tasks = 100;    // rows written by build-tasks
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  DatasetDescriptor dataset;
  CfeConfig cfe;
  ClusterSettings cluster;
  EpisodeConfig episodes;
  MamlConfig maml;
  FewShotSettings fewshot;
};

// Fills nested seeds from the global seed. Called after parsing and after
// any command-line override of the seed.
void derive_seeds(PipelineConfig& config);

// Throws ValidationError naming the offending field.
void validate(const PipelineConfig& config);

// JSON document with the same nesting as PipelineConfig. Unknown keys and
// wrongly typed values raise ValidationError naming the key path.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_json(const PipelineConfig& config);

void stage_gen_data(const PipelineConfig& config);
void stage_train_cfe(const PipelineConfig& config);
void stage_embed(const PipelineConfig& config);
void stage_cluster(const PipelineConfig& config);
void stage_metrics(const PipelineConfig& config);
void stage_build_tasks(const PipelineConfig& config);
void stage_meta_train(const PipelineConfig& config);
// Returns one row per evaluated shot count.
std::vector<EvalRow> stage_meta_eval(const PipelineConfig& config);

// Runs every stage in order, then writes manifest.json with the seeds, the
// effective config and the SHA-256 of every artifact. Errors are rethrown
// as StageError.
void run_pipeline(const PipelineConfig& config);

// A stage failed; `stage()` names it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace plcfe

#endif  // PLCFE_PIPELINE_HPP_
