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

#include "plcfe/data.hpp"

#include <algorithm>
#include <cmath>

#include "plcfe/binary_io.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kFlagLabels = 0x1;
constexpr int kMaxRejections = 10000;

void encode_header(ByteWriter& w, std::string_view magic, std::uint16_t flags,
                   const Matrix& m, std::size_t classes) {
  w.magic(magic);
  w.u16(kFormatVersion);
  w.u16(flags);
  w.u32(checked_u32(m.rows(), "sample count"));
  w.u32(checked_u32(m.cols(), "dimension"));
  w.u32(checked_u32(classes, "class count"));
}

struct Header {
  std::uint16_t flags;
  std::size_t n, d, classes;
};

Header decode_header(ByteReader& r, std::string_view magic) {
  r.expect_magic(magic);
  const std::size_t at = r.offset();
  const auto version = r.u16();
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version), at);
  }
  Header h{};
  const std::size_t flags_at = r.offset();
  h.flags = r.u16();
  if ((h.flags & ~kFlagLabels) != 0) throw FormatError("unknown flag bits", flags_at);
  h.n = r.u32();
  h.d = r.u32();
  h.classes = r.u32();
  return h;
}

}  // namespace

HiddenLabels::HiddenLabels(std::vector<std::uint32_t> ids, std::size_t classes)
    : ids_(std::move(ids)), classes_(classes) {
  for (auto id : ids_) {
    if (id >= classes_) throw ParameterError("label id out of range");
  }
}

LabeledDataset gen_blobs(const BlobSpec& spec, Rng& rng, Matrix* means_out) {
  if (!(spec.separation > 0.0)) throw ParameterError("separation must be positive");
  if (spec.classes < 2) throw ParameterError("need at least two classes");
  if (spec.per_class == 0 || spec.dim == 0) throw ParameterError("empty blob spec");

  Matrix means(spec.classes, spec.dim);
  const double min_dist2 = 0.25 * spec.separation * spec.separation;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRejections && !placed; ++attempt) {
      std::vector<double> v(spec.dim);
      for (double& x : v) x = rng.normal();
      const double norm = std::sqrt(squared_norm(v));
      if (norm < kDegenerateNorm) continue;
      for (double& x : v) x *= spec.separation / norm;
      placed = true;
      for (std::size_t prev = 0; prev < c && placed; ++prev) {
        placed = squared_distance(v, means.row(prev)) >= min_dist2;
      }
      if (placed) std::copy(v.begin(), v.end(), means.row(c).begin());
    }
    if (!placed) {
      throw ParameterError("could not place class mean " + std::to_string(c) + " after " +
                           std::to_string(kMaxRejections) + " tries");
    }
  }

  const std::size_t n = spec.classes * spec.per_class;
  LabeledDataset out;
  out.data.samples = Matrix(n, spec.dim);
  std::vector<std::uint32_t> ids(n);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      const std::size_t i = c * spec.per_class + k;
      auto row = out.data.samples.row(i);
      for (std::size_t j = 0; j < spec.dim; ++j) row[j] = means(c, j) + rng.normal();
      ids[i] = static_cast<std::uint32_t>(c);
    }
  }
  out.data.meta = DatasetMeta{n, spec.dim, spec.classes, "blobs", rng.seed()};
  out.labels = HiddenLabels(std::move(ids), spec.classes);
  if (means_out != nullptr) *means_out = std::move(means);
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_by_class(const LabeledDataset& all,
                                                          std::size_t first_classes) {
  const std::size_t classes = all.labels.classes();
  if (first_classes == 0 || first_classes >= classes) {
    throw ParameterError("split must leave classes on both sides");
  }
  std::vector<std::size_t> first_rows, second_rows;
  std::vector<std::uint32_t> first_ids, second_ids;
  const auto ids = all.labels.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < first_classes) {
      first_rows.push_back(i);
      first_ids.push_back(ids[i]);
    } else {
      second_rows.push_back(i);
      second_ids.push_back(static_cast<std::uint32_t>(ids[i] - first_classes));
    }
  }
  auto make = [&](const std::vector<std::size_t>& rows, std::vector<std::uint32_t> labels,
                  std::size_t count) {
    LabeledDataset part;
    part.data.samples = all.data.samples.gather_rows(rows);
    part.data.meta = all.data.meta;
    part.data.meta.n = rows.size();
    part.data.meta.classes = count;
    part.labels = HiddenLabels(std::move(labels), count);
    return part;
  };
  return {make(first_rows, std::move(first_ids), first_classes),
          make(second_rows, std::move(second_ids), classes - first_classes)};
}

void validate(const AugmentConfig& config) {
  if (!(config.noise_std >= 0.0)) throw ValidationError("augment.noise_std", "must be >= 0");
  if (!(config.scale_lo > 0.0 && config.scale_lo <= 1.0)) {
    throw ValidationError("augment.scale_lo", "must lie in (0, 1]");
  }
  if (!(config.scale_hi >= 1.0) || !std::isfinite(config.scale_hi)) {
    throw ValidationError("augment.scale_hi", "must be finite and >= 1");
  }
  if (!(config.mask_prob >= 0.0 && config.mask_prob <= 1.0)) {
    throw ValidationError("augment.mask_prob", "must lie in [0, 1]");
  }
}

std::vector<double> augment(std::span<const double> sample, const AugmentConfig& config,
                            Rng& rng) {
  std::vector<double> out(sample.begin(), sample.end());
  if (config.mask_prob > 0.0) {
    for (double& v : out) {
      if (rng.bernoulli(config.mask_prob)) v = 0.0;
    }
  }
  if (config.scale_lo != 1.0 || config.scale_hi != 1.0) {
    const double s = rng.uniform(config.scale_lo, config.scale_hi);
    for (double& v : out) v *= s;
  }
  if (config.noise_std > 0.0) {
    for (double& v : out) v += rng.normal(0.0, config.noise_std);
  }
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data, const HiddenLabels* labels) {
  if (labels != nullptr && labels->size() != data.size()) {
    throw ParameterError("label count does not match sample count");
  }
  ByteWriter w;
  encode_header(w, "PLDS", labels != nullptr ? kFlagLabels : 0, data.samples,
                labels != nullptr ? labels->classes() : data.meta.classes);
  w.f64s(data.samples.data());
  if (labels != nullptr) {
    for (auto id : labels->ids()) w.u32(id);
  }
  return w.bytes();
}

StoredDataset decode_dataset(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  const Header h = decode_header(r, "PLDS");
  StoredDataset out;
  out.data.samples = Matrix(h.n, h.d, r.f64s(h.n * h.d));
  out.data.meta = DatasetMeta{h.n, h.d, h.classes, "file", 0};
  if ((h.flags & kFlagLabels) != 0) {
    std::vector<std::uint32_t> ids(h.n);
    for (auto& id : ids) {
      const std::size_t at = r.offset();
      id = r.u32();
      if (id >= h.classes) throw FormatError("label exceeds class count", at);
    }
    out.labels = HiddenLabels(std::move(ids), h.classes);
  }
  r.expect_end();
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data,
                   const HiddenLabels* labels) {
  write_file_bytes(path, encode_dataset(data, labels));
}

StoredDataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

void write_embeddings(const std::filesystem::path& path, const Matrix& embeddings) {
  ByteWriter w;
  encode_header(w, "PLEM", 0, embeddings, 0);
  w.f64s(embeddings.data());
  w.save(path);
}

Matrix read_embeddings(const std::filesystem::path& path) {
  auto r = ByteReader::load(path);
  const Header h = decode_header(r, "PLEM");
  if (h.flags != 0) throw FormatError("embedding dump must not carry labels", 6);
  Matrix m(h.n, h.d, r.f64s(h.n * h.d));
  r.expect_end();
  return m;
}

}  // namespace plcfe
