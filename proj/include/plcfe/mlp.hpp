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

#ifndef PLCFE_MLP_HPP_
#define PLCFE_MLP_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plcfe/matrix.hpp"
#include "plcfe/rng.hpp"

namespace plcfe {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kTanh = 2 };

std::string to_string(Activation act);

struct LayerSpec {
  std::size_t out = 0;
  Activation activation = Activation::kIdentity;
};

// Shape of one affine layer. The weight is stored out x in, row-major,
// followed immediately by the out-length bias.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kIdentity;
  std::size_t offset = 0;

  std::size_t weight_count() const { return in * out; }
  std::size_t parameter_count() const { return in * out + out; }
};

// Parameters of a fully connected network, y = act(x W^T + b) per layer.
// All parameters live in one flat vector in layer order.
class MlpParams {
 public:
  MlpParams() = default;
  // Zero-initialized network.
  MlpParams(std::size_t input_dim, const std::vector<LayerSpec>& layers);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t parameter_count() const { return values_.size(); }
  const LayerShape& layer(std::size_t l) const { return layers_[l]; }
  const std::vector<LayerShape>& layers() const { return layers_; }

  std::span<double> weight(std::size_t l);
  std::span<const double> weight(std::size_t l) const;
  std::span<double> bias(std::size_t l);
  std::span<const double> bias(std::size_t l) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  // Throws ShapeError on length mismatch.
  void assign(std::span<const double> values);

  bool same_architecture(const MlpParams& other) const;

  // He-style init for relu layers, 1/fan_in variance otherwise; zero biases.
  void init_random(Rng& rng);

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.same_architecture(b) && a.values_ == b.values_;
  }

 private:
  std::size_t input_dim_ = 0;
  std::vector<LayerShape> layers_;
  std::vector<double> values_;
};

// Per-layer intermediates recorded by mlp_forward.
struct MlpCache {
  std::vector<Matrix> inputs;       // layer inputs, inputs[0] is the batch
  std::vector<Matrix> pre;          // pre-activations
  std::vector<Matrix> post;         // activations; post.back() is the output

  bool valid() const { return !pre.empty() && pre.size() == inputs.size(); }
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

MlpForward mlp_forward(const MlpParams& params, const Matrix& batch);

struct MlpGradients {
  std::vector<double> params;  // same layout as MlpParams::values()
  Matrix input;                // dL/d(batch)
};

// Throws StateError when the cache does not come from a forward pass of a
// network with this architecture.
MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache,
                          const Matrix& grad_output);

// Directional derivatives of the forward pass along a parameter direction.
struct MlpRForward {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

MlpRForward mlp_r_forward(const MlpParams& params, const MlpCache& cache,
                          std::span<const double> direction);

// Directional derivative of mlp_backward's parameter gradient along
// `direction`, given grad_output and its own directional derivative.
// Combined with a loss-specific r_grad_output this yields exact
// Hessian-vector products.
std::vector<double> mlp_r_backward(const MlpParams& params, const MlpCache& cache,
                                   const MlpRForward& r_forward,
                                   std::span<const double> direction,
                                   const Matrix& grad_output,
                                   const Matrix& r_grad_output);

}  // namespace plcfe

#endif  // PLCFE_MLP_HPP_
