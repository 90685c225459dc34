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

#include "plcfe/checkpoint.hpp"

#include "plcfe/binary_io.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.sets.empty()) throw ParameterError("checkpoint has no parameter sets");
  const MlpParams& arch = checkpoint.sets.front();
  for (const auto& set : checkpoint.sets) {
    if (!set.same_architecture(arch)) throw ShapeError("checkpoint sets differ in architecture");
  }
  ByteWriter w;
  w.magic("PLCF");
  w.u16(kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(checkpoint.kind));
  w.u32(checkpoint.ways);
  w.u32(checked_u32(arch.input_dim(), "input dimension"));
  w.u32(checked_u32(arch.layer_count(), "layer count"));
  for (const auto& layer : arch.layers()) {
    w.u32(checked_u32(layer.out, "layer width"));
    w.u8(static_cast<std::uint8_t>(layer.activation));
  }
  w.u32(checked_u32(checkpoint.sets.size(), "set count"));
  for (const auto& set : checkpoint.sets) w.f64s(set.values());
  return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  r.expect_magic("PLCF");
  std::size_t at = r.offset();
  if (r.u16() != kCheckpointVersion) throw FormatError("unsupported checkpoint version", at);
  Checkpoint out;
  at = r.offset();
  const auto kind = r.u16();
  if (kind < 1 || kind > 3) throw FormatError("unknown model kind", at);
  out.kind = static_cast<ModelKind>(kind);
  out.ways = r.u32();
  at = r.offset();
  const std::size_t input_dim = r.u32();
  if (input_dim == 0) throw FormatError("zero input dimension", at);
  const std::size_t layer_count = r.u32();
  if (layer_count > r.remaining() / 5) throw FormatError("truncated layer table", r.offset());
  std::vector<LayerSpec> layers;
  for (std::size_t l = 0; l < layer_count; ++l) {
    at = r.offset();
    const std::size_t width = r.u32();
    const auto act = r.u8();
    if (width == 0) throw FormatError("zero layer width", at);
    if (act > 2) throw FormatError("unknown activation", at + 4);
    layers.push_back({width, static_cast<Activation>(act)});
  }
  MlpParams arch(input_dim, layers);
  at = r.offset();
  const std::size_t set_count = r.u32();
  if (set_count == 0) throw FormatError("checkpoint has no parameter sets", at);
  for (std::size_t s = 0; s < set_count; ++s) {
    MlpParams set = arch;
    set.assign(r.f64s(arch.parameter_count()));
    out.sets.push_back(std::move(set));
  }
  r.expect_end();
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace plcfe
