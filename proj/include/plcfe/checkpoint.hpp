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

#ifndef PLCFE_CHECKPOINT_HPP_
#define PLCFE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "plcfe/mlp.hpp"

namespace plcfe {

enum class ModelKind : std::uint16_t {
  kEncoderPair = 1,  // sets = {main, history}
  kMaml = 2,         // sets = {network incl. N-way head}
  kProto = 3,        // sets = {encoder}
};

// Model container shared by every stage.
//
// Layout, all little-endian:
//   "PLCF" | u16 version | u16 kind | u32 ways |
//   u32 input_dim | u32 layer_count | layer_count x (u32 out, u8 activation) |
//   u32 set_count | set_count x parameter_count f64
// Every set uses the same architecture.
struct Checkpoint {
  ModelKind kind = ModelKind::kEncoderPair;
  std::uint32_t ways = 0;
  std::vector<MlpParams> sets;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace plcfe

#endif  // PLCFE_CHECKPOINT_HPP_
