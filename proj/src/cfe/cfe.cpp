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

#include "plcfe/cfe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

void validate(const CfeConfig& config) {
  if (config.augmentations < 1) throw ValidationError("cfe.augmentations", "must be >= 1");
  if (config.positives < 1) throw ValidationError("cfe.positives", "must be >= 1");
  if (config.positives < 2 && config.queue_capacity < 1) {
    throw ValidationError("cfe.queue_capacity",
                          "need positives >= 2 or a non-empty queue so that N_o >= 1");
  }
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw ValidationError("cfe.momentum", "must lie in [0, 1)");
  }
  if (!(config.tau > 0.0)) throw ValidationError("cfe.tau", "must be > 0");
  if (!(config.learning_rate > 0.0)) throw ValidationError("cfe.learning_rate", "must be > 0");
  if (config.embedding_dim < 1) throw ValidationError("cfe.embedding_dim", "must be >= 1");
  for (auto h : config.hidden) {
    if (h < 1) throw ValidationError("cfe.hidden", "layer widths must be >= 1");
  }
  validate(config.augment);
}

EncoderPair make_encoder_pair(std::size_t input_dim, const CfeConfig& config, Rng& rng) {
  std::vector<LayerSpec> layers;
  for (auto h : config.hidden) layers.push_back({h, Activation::kRelu});
  layers.push_back({config.embedding_dim, Activation::kIdentity});
  EncoderPair pair{MlpParams(input_dim, layers), MlpParams()};
  pair.main.init_random(rng);
  pair.history = pair.main;
  return pair;
}

void NegativeQueue::push(std::span<const double> row) {
  if (capacity_ == 0) return;
  if (!entries_.empty() && entries_.front().size() != row.size()) {
    throw ShapeError("queue entry dimension mismatch");
  }
  entries_.emplace_back(row.begin(), row.end());
  while (entries_.size() > capacity_) entries_.pop_front();
}

void NegativeQueue::push(const Matrix& rows) {
  for (std::size_t r = 0; r < rows.rows(); ++r) push(rows.row(r));
}

PositiveBatch build_positive_batch(const Dataset& dataset, Rng& rng, const CfeConfig& config) {
  if (dataset.size() < config.positives) {
    throw ParameterError("dataset has " + std::to_string(dataset.size()) +
                         " samples, fewer than N_p = " + std::to_string(config.positives));
  }
  if (config.augmentations < 1) throw ParameterError("N_a must be >= 1");
  PositiveBatch batch;
  batch.originals = rng.sample_without_replacement(dataset.size(), config.positives);
  batch.augmentations = config.augmentations;
  batch.augmented = Matrix(config.positives * config.augmentations, dataset.dim());
  for (std::size_t i = 0; i < batch.originals.size(); ++i) {
    const auto source = dataset.samples.row(batch.originals[i]);
    for (std::size_t j = 0; j < config.augmentations; ++j) {
      const auto aug = augment(source, config.augment, rng);
      std::copy(aug.begin(), aug.end(), batch.augmented.row(batch.row(i, j)).begin());
    }
  }
  return batch;
}

Matrix embed(const MlpParams& encoder, const Matrix& samples, bool normalize) {
  auto out = mlp_forward(encoder, samples).output;
  return normalize ? l2_normalize(out).values : out;
}

PositiveBatch asynchronous_embed(const EncoderPair& pair, PositiveBatch batch, bool normalize) {
  if (!pair.main.same_architecture(pair.history)) {
    throw StateError("main and history encoders differ in architecture");
  }
  if (batch.encoded() || batch.augmented.rows() != batch.positives() * batch.augmentations) {
    throw StateError("positive batch is not in the pre-encoded state");
  }
  const std::size_t np = batch.positives();
  const std::size_t na = batch.augmentations;
  std::vector<std::size_t> main_rows, history_rows;
  for (std::size_t i = 0; i < np; ++i) {
    main_rows.push_back(batch.row(i, 0));
    for (std::size_t j = 1; j < na; ++j) history_rows.push_back(batch.row(i, j));
  }

  batch.main_pass.forward = mlp_forward(pair.main, batch.augmented.gather_rows(main_rows));
  if (normalize) {
    batch.main_pass.normalized = l2_normalize(batch.main_pass.forward.output);
  } else {
    const Matrix& out = batch.main_pass.forward.output;
    batch.main_pass.normalized = NormalizedRows{out, std::vector<double>(out.rows(), 1.0),
                                                std::vector<bool>(out.rows(), true)};
  }
  const Matrix& main_z = batch.main_pass.normalized.values;

  batch.embeddings = Matrix(np * na, pair.main.output_dim());
  for (std::size_t i = 0; i < np; ++i) {
    std::copy(main_z.row(i).begin(), main_z.row(i).end(),
              batch.embeddings.row(main_rows[i]).begin());
  }
  if (!history_rows.empty()) {
    const Matrix hist_z =
        embed(pair.history, batch.augmented.gather_rows(history_rows), normalize);
    for (std::size_t k = 0; k < history_rows.size(); ++k) {
      std::copy(hist_z.row(k).begin(), hist_z.row(k).end(),
                batch.embeddings.row(history_rows[k]).begin());
    }
  }
  return batch;
}

CfeLoss cfe_loss(const Matrix& embeddings, std::size_t positives, std::size_t augmentations,
                 const NegativeQueue& queue, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  if (augmentations < 1 || embeddings.rows() != positives * augmentations) {
    throw ShapeError("embedding rows do not match N_p x N_a");
  }
  const std::size_t n_o = positives + queue.size() - 1;
  if (positives == 0 || n_o == 0) throw ParameterError("N_o = N_p + |queue| - 1 must be >= 1");
  const std::size_t dim = embeddings.cols();
  if (!queue.empty() && queue[0].size() != dim) throw ShapeError("queue dimension mismatch");

  Matrix mu(positives, dim);
  for (std::size_t i = 0; i < positives; ++i) {
    auto m = mu.row(i);
    for (std::size_t j = 0; j < augmentations; ++j) {
      auto z = embeddings.row(i * augmentations + j);
      for (std::size_t c = 0; c < dim; ++c) m[c] += z[c];
    }
    for (double& v : m) v /= static_cast<double>(augmentations);
  }

  // With mu_i the mean of class i, s_intra_i = exp(|mu_i|^2 / tau), so each
  // ratio term is exp((mu_i . x - |mu_i|^2) / tau).
  CfeLoss out{0.0, Matrix(positives, dim)};
  Matrix grad_mu(positives, dim);
  const double log_no = std::log(static_cast<double>(n_o));
  for (std::size_t i = 0; i < positives; ++i) {
    const auto mi = mu.row(i);
    const double self = squared_norm(mi);
    double ratio = 0.0;
    std::vector<double> pull(dim, 0.0);  // sum_t e_t x_t
    for (std::size_t j = 0; j < positives; ++j) {
      if (j == i) continue;
      const double e = std::exp((dot(mi, mu.row(j)) - self) / tau);
      ratio += e;
      for (std::size_t c = 0; c < dim; ++c) pull[c] += e * mu(j, c);
    }
    for (const auto& q : queue.entries()) {
      const double e = std::exp((dot(mi, q) - self) / tau);
      ratio += e;
      for (std::size_t c = 0; c < dim; ++c) pull[c] += e * q[c];
    }
    const double term = std::log1p(ratio) - log_no;
    if (!std::isfinite(term)) {
      throw NumericError("non-finite loss term for positive " + std::to_string(i));
    }
    out.value += term;

    const double scale = 1.0 / ((1.0 + ratio) * tau);
    auto gi = grad_mu.row(i);
    for (std::size_t c = 0; c < dim; ++c) gi[c] += scale * (pull[c] - 2.0 * ratio * mi[c]);
    for (std::size_t j = 0; j < positives; ++j) {
      if (j == i) continue;
      const double e = std::exp((dot(mi, mu.row(j)) - self) / tau);
      auto gj = grad_mu.row(j);
      for (std::size_t c = 0; c < dim; ++c) gj[c] += scale * e * mi[c];
    }
  }
  const double inv_np = 1.0 / static_cast<double>(positives);
  out.value *= inv_np;
  const double chain = inv_np / static_cast<double>(augmentations);
  for (std::size_t k = 0; k < grad_mu.size(); ++k) {
    out.grad_main.data()[k] = grad_mu.data()[k] * chain;
  }
  if (!out.grad_main.all_finite()) throw NumericError("non-finite loss gradient");
  return out;
}

CfeLoss cfe_loss(const PositiveBatch& batch, const NegativeQueue& queue, const CfeConfig& config) {
  if (!batch.encoded()) throw StateError("positive batch has not been encoded");
  return cfe_loss(batch.embeddings, batch.positives(), batch.augmentations, queue, config.tau);
}

void momentum_update(EncoderPair& pair, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!pair.main.same_architecture(pair.history)) {
    throw StateError("main and history encoders differ in architecture");
  }
  auto hist = pair.history.values();
  const auto main = pair.main.values();
  for (std::size_t k = 0; k < hist.size(); ++k) hist[k] = m * hist[k] + (1.0 - m) * main[k];
}

Matrix queue_candidates(const EncoderPair& pair, const PositiveBatch& batch, bool normalize) {
  const std::size_t np = batch.positives();
  if (batch.augmentations >= 2) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < np; ++i) rows.push_back(batch.row(i, 1));
    return batch.embeddings.gather_rows(rows);
  }
  return embed(pair.history, batch.augmented, normalize);
}

std::vector<double> main_encoder_gradient(const EncoderPair& pair, const PositiveBatch& batch,
                                          const CfeLoss& loss, bool normalize) {
  if (!batch.encoded()) throw StateError("batch has not been encoded");
  const Matrix grad_out = normalize
                              ? l2_normalize_backward(batch.main_pass.normalized, loss.grad_main)
                              : loss.grad_main;
  return mlp_backward(pair.main, batch.main_pass.forward.cache, grad_out).params;
}

double cfe_step(const Dataset& dataset, const CfeConfig& config, double learning_rate,
                EncoderPair& pair, NegativeQueue& queue, Rng& rng) {
  PositiveBatch batch =
      asynchronous_embed(pair, build_positive_batch(dataset, rng, config), config.normalize);
  const CfeLoss loss = cfe_loss(batch, queue, config);

  const std::vector<double> grad = main_encoder_gradient(pair, batch, loss, config.normalize);
  auto w = pair.main.values();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * grad[k];

  momentum_update(pair, config.momentum);
  queue.push(queue_candidates(pair, batch, config.normalize));
  return loss.value;
}

CfeResult train_cfe(const Dataset& dataset, const CfeConfig& config, Rng& rng) {
  validate(config);
  if (dataset.size() == 0) throw ParameterError("empty dataset");
  CfeResult result;
  result.initial = make_encoder_pair(dataset.dim(), config, rng);
  result.trained = result.initial;
  if (config.epochs == 0) return result;

  const std::size_t steps_per_epoch = std::max<std::size_t>(1, dataset.size() / config.positives);
  const double total = static_cast<double>(steps_per_epoch * config.epochs);
  NegativeQueue queue(config.queue_capacity);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const double lr = 0.5 * config.learning_rate *
                        (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
      try {
        sum += cfe_step(dataset, config, lr, result.trained, queue, rng);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
    }
    result.epoch_loss.push_back(sum / static_cast<double>(steps_per_epoch));
  }
  return result;
}

Checkpoint to_checkpoint(const EncoderPair& pair) {
  return Checkpoint{ModelKind::kEncoderPair, 0, {pair.main, pair.history}};
}

EncoderPair encoder_pair_from(const Checkpoint& checkpoint) {
  if (checkpoint.kind != ModelKind::kEncoderPair || checkpoint.sets.size() != 2) {
    throw FormatError("checkpoint does not hold an encoder pair", 6);
  }
  return EncoderPair{checkpoint.sets[0], checkpoint.sets[1]};
}

void write_loss_trace_csv(const std::filesystem::path& path, std::span<const double> epoch_loss) {
  CsvWriter csv({"epoch", "mean_loss"});
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    csv.field(e + 1).field(epoch_loss[e]);
    csv.end_row();
  }
  csv.save(path);
}

}  // namespace plcfe
