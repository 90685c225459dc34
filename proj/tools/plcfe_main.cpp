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

// Command-line front end. Exit codes: 0 success, 2 invalid configuration
// or arguments, 3 any other failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plcfe/errors.hpp"
#include "plcfe/pipeline.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> method;
  std::optional<std::string> episodes;
  std::optional<std::size_t> ways;
  std::optional<std::size_t> shots;
  std::optional<std::size_t> queries;
};

void add_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--out", o.out, "Run directory");
  cmd->add_option("--method", o.method, "Meta-learner")->check(CLI::IsMember({"maml", "proto"}));
  cmd->add_option("--episodes", o.episodes, "Episode construction")
      ->check(CLI::IsMember({"standard", "progressive"}));
  cmd->add_option("--ways", o.ways, "N");
  cmd->add_option("--shots", o.shots, "K used for meta-training tasks");
  cmd->add_option("--queries", o.queries, "Q per way");
}

plcfe::PipelineConfig resolve(const Overrides& o) {
  plcfe::PipelineConfig c =
      o.config_path.empty() ? plcfe::PipelineConfig{} : plcfe::load_pipeline_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.method) c.fewshot.method = plcfe::parse_method(*o.method);
  if (o.episodes) c.fewshot.progressive = *o.episodes == "progressive";
  if (o.ways) c.episodes.ways = *o.ways;
  if (o.shots) c.episodes.shots = *o.shots;
  if (o.queries) c.episodes.queries = *o.queries;
  plcfe::derive_seeds(c);
  plcfe::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot meta-learning on cluster pseudo-labels"};
  app.require_subcommand(1);
  Overrides overrides;
  using Stage = std::function<void(const plcfe::PipelineConfig&)>;
  const std::vector<std::pair<std::string, Stage>> stages = {
      {"gen-data", plcfe::stage_gen_data},
      {"train-cfe", plcfe::stage_train_cfe},
      {"embed", plcfe::stage_embed},
      {"metrics", plcfe::stage_metrics},
      {"cluster", plcfe::stage_cluster},
      {"build-tasks", plcfe::stage_build_tasks},
      {"meta-train", plcfe::stage_meta_train},
      {"meta-eval",
       [](const plcfe::PipelineConfig& c) {
         for (const plcfe::EvalRow& row : plcfe::stage_meta_eval(c)) {
           std::printf("%zu-way %zu-shot: accuracy %.4f +/- %.4f over %zu tasks\n", row.ways,
                       row.shots, row.score.mean_accuracy, row.score.ci95,
                       row.score.accuracies.size());
         }
       }},
      {"pipeline", plcfe::run_pipeline},
  };
  std::vector<CLI::App*> commands;
  for (const auto& [name, stage] : stages) {
    CLI::App* cmd = app.add_subcommand(name, "Run the " + name + " stage");
    add_flags(cmd, overrides);
    commands.push_back(cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!commands[i]->parsed()) continue;
    try {
      const plcfe::PipelineConfig config = resolve(overrides);
      stages[i].second(config);
      std::printf("%s: done (%s)\n", stages[i].first.c_str(), config.out.string().c_str());
      return 0;
    } catch (const plcfe::ValidationError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitValidation;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s: %s\n", stages[i].first.c_str(), e.what());
      return kExitRuntime;
    }
  }
  return kExitValidation;
}
