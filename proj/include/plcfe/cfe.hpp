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

// Clustering-friendly embedding training.
//
// Each step draws N_p samples, augments each N_a times and treats the
// augmentations of one sample as a class. The first augmentation goes
// through the main encoder, the rest through a momentum-averaged history
// encoder. The loss is the log of the inter-to-intra similarity ratio of
// these classes against each other and against a FIFO queue of earlier
// history embeddings. Only the main encoder receives gradients.

#ifndef PLCFE_CFE_HPP_
#define PLCFE_CFE_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include "plcfe/checkpoint.hpp"
#include "plcfe/data.hpp"
#include "plcfe/matrix.hpp"
#include "plcfe/mlp.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

struct CfeConfig {
  std::size_t positives = 32;       // N_p
  std::size_t augmentations = 2;    // N_a
  std::size_t queue_capacity = 256; // N_n
  double tau = 0.2;
  double momentum = 0.99;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  // Unit-normalize embeddings before taking dot products. Turning this off
  // uses raw encoder outputs.
  bool normalize = true;
  std::vector<std::size_t> hidden = {32};
  std::size_t embedding_dim = 16;
  AugmentConfig augment{0.3, 0.8, 1.2, 0.1};
};

// Throws ValidationError naming the offending field.
void validate(const CfeConfig& config);

struct EncoderPair {
  MlpParams main;     // trained by gradient descent
  MlpParams history;  // momentum average of main
};

// Hidden relu layers, linear output layer; history starts as a copy of main.
EncoderPair make_encoder_pair(std::size_t input_dim, const CfeConfig& config, Rng& rng);

class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<double>& operator[](std::size_t i) const { return entries_[i]; }
  const std::deque<std::vector<double>>& entries() const { return entries_; }

  // Appends in order, evicting from the front once full. Throws ShapeError
  // when a vector's dimension differs from the existing entries.
  void push(const Matrix& rows);
  void push(std::span<const double> row);

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> entries_;
};

// Main-encoder state needed to backpropagate the loss.
struct MainEncoderPass {
  MlpForward forward;
  NormalizedRows normalized;
};

struct PositiveBatch {
  std::vector<std::size_t> originals;  // dataset rows, distinct
  std::size_t augmentations = 0;
  Matrix augmented;   // row i * N_a + j is augmentation j of originals[i]
  Matrix embeddings;  // same row order; empty until encoded
  MainEncoderPass main_pass;

  std::size_t positives() const { return originals.size(); }
  std::size_t row(std::size_t i, std::size_t j) const { return i * augmentations + j; }
  bool encoded() const { return !embeddings.empty(); }
};

PositiveBatch build_positive_batch(const Dataset& dataset, Rng& rng, const CfeConfig& config);

// Augmentation 0 of every positive through main, the rest through history.
PositiveBatch asynchronous_embed(const EncoderPair& pair, PositiveBatch batch,
                                 bool normalize = true);

struct CfeLoss {
  double value = 0.0;
  Matrix grad_main;  // N_p x dim, dL/d embedding of augmentation 0
};

// L = 1/N_p sum_i log[ 1/N_o (1 + (sum_{j!=i} s_cen_ij + sum_k s_neg_ik) / s_intra_i) ]
// with N_o = N_p + |queue| - 1. Rows of `embeddings` follow PositiveBatch
// ordering. History rows and queue entries are constants.
CfeLoss cfe_loss(const Matrix& embeddings, std::size_t positives, std::size_t augmentations,
                 const NegativeQueue& queue, double tau);
CfeLoss cfe_loss(const PositiveBatch& batch, const NegativeQueue& queue, const CfeConfig& config);

// dL/d(main encoder parameters) for an encoded batch, through the
// normalization when `normalize` is set.
std::vector<double> main_encoder_gradient(const EncoderPair& pair, const PositiveBatch& batch,
                                          const CfeLoss& loss, bool normalize = true);

// history <- m * history + (1 - m) * main. Throws ParameterError unless 0 <= m < 1.
void momentum_update(EncoderPair& pair, double m);

// One embedding per positive for the queue: the history embedding of
// augmentation 1 when N_a >= 2, otherwise augmentation 0 re-encoded by the
// history encoder.
Matrix queue_candidates(const EncoderPair& pair, const PositiveBatch& batch,
                        bool normalize = true);

// Encodes rows with `encoder`, unit-normalizing when asked.
Matrix embed(const MlpParams& encoder, const Matrix& samples, bool normalize = true);

struct CfeResult {
  EncoderPair initial;
  EncoderPair trained;
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

// SGD on the main encoder with a cosine-annealed step size, then momentum
// update and queue push, for floor(n / N_p) steps per epoch.
CfeResult train_cfe(const Dataset& dataset, const CfeConfig& config, Rng& rng);

// One training step.
double cfe_step(const Dataset& dataset, const CfeConfig& config, double learning_rate,
                EncoderPair& pair, NegativeQueue& queue, Rng& rng);

Checkpoint to_checkpoint(const EncoderPair& pair);
EncoderPair encoder_pair_from(const Checkpoint& checkpoint);

void write_loss_trace_csv(const std::filesystem::path& path, std::span<const double> epoch_loss);

}  // namespace plcfe

#endif  // PLCFE_CFE_HPP_
