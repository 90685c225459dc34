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

#include "plcfe/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

double activate(Activation act, double a) {
  switch (act) {
    case Activation::kRelu: return a > 0.0 ? a : 0.0;
    case Activation::kTanh: return std::tanh(a);
    case Activation::kIdentity: break;
  }
  return a;
}

// First derivative, expressed through the pre-activation a and output h.
double derivative(Activation act, double a, double h) {
  switch (act) {
    case Activation::kRelu: return a > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - h * h;
    case Activation::kIdentity: break;
  }
  return 1.0;
}

double second_derivative(Activation act, double h) {
  if (act == Activation::kTanh) return -2.0 * h * (1.0 - h * h);
  return 0.0;
}

void check_cache(const MlpParams& params, const MlpCache& cache) {
  if (!cache.valid() || cache.pre.size() != params.layer_count() ||
      cache.post.size() != params.layer_count()) {
    throw StateError("no forward cache for this network");
  }
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    if (cache.pre[l].cols() != params.layer(l).out ||
        cache.inputs[l].cols() != params.layer(l).in) {
      throw StateError("forward cache does not match the network architecture");
    }
  }
}

// out = x W^T + b for one layer (b may be empty)
Matrix affine(const Matrix& x, std::span<const double> w, std::span<const double> b,
              std::size_t in, std::size_t out_dim) {
  Matrix out(x.rows(), out_dim);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = out.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = b.empty() ? 0.0 : b[o];
      const double* wo = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) s += wo[i] * xr[i];
      yr[o] = s;
    }
  }
  return out;
}

// Accumulates dW += delta^T x and db += colsum(delta) into grad.
void accumulate_param_grad(const Matrix& delta, const Matrix& x, std::span<double> gw,
                           std::span<double> gb, bool with_bias) {
  const std::size_t out = delta.cols();
  const std::size_t in = x.cols();
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    auto dr = delta.row(r);
    auto xr = x.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = dr[o];
      if (d == 0.0) continue;
      double* go = gw.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) go[i] += d * xr[i];
      if (with_bias) gb[o] += d;
    }
  }
}

// delta W, shape rows x in.
Matrix back_through_weight(const Matrix& delta, std::span<const double> w, std::size_t in) {
  Matrix out(delta.rows(), in);
  const std::size_t out_dim = delta.cols();
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    auto dr = delta.row(r);
    auto gr = out.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = dr[o];
      if (d == 0.0) continue;
      const double* wo = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) gr[i] += d * wo[i];
    }
  }
  return out;
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: break;
  }
  return "identity";
}

MlpParams::MlpParams(std::size_t input_dim, const std::vector<LayerSpec>& layers)
    : input_dim_(input_dim) {
  if (input_dim == 0) throw ShapeError("network input dimension must be positive");
  std::size_t in = input_dim;
  std::size_t offset = 0;
  for (const auto& spec : layers) {
    if (spec.out == 0) throw ShapeError("layer width must be positive");
    LayerShape shape{in, spec.out, spec.activation, offset};
    offset += shape.parameter_count();
    layers_.push_back(shape);
    in = spec.out;
  }
  values_.assign(offset, 0.0);
}

std::span<double> MlpParams::weight(std::size_t l) {
  const auto& s = layers_.at(l);
  return {values_.data() + s.offset, s.weight_count()};
}

std::span<const double> MlpParams::weight(std::size_t l) const {
  const auto& s = layers_.at(l);
  return {values_.data() + s.offset, s.weight_count()};
}

std::span<double> MlpParams::bias(std::size_t l) {
  const auto& s = layers_.at(l);
  return {values_.data() + s.offset + s.weight_count(), s.out};
}

std::span<const double> MlpParams::bias(std::size_t l) const {
  const auto& s = layers_.at(l);
  return {values_.data() + s.offset + s.weight_count(), s.out};
}

void MlpParams::assign(std::span<const double> values) {
  if (values.size() != values_.size()) {
    throw ShapeError("parameter vector length does not match the network");
  }
  std::copy(values.begin(), values.end(), values_.begin());
}

bool MlpParams::same_architecture(const MlpParams& other) const {
  if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].out != other.layers_[l].out ||
        layers_[l].activation != other.layers_[l].activation) {
      return false;
    }
  }
  return true;
}

void MlpParams::init_random(Rng& rng) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    const double gain = s.activation == Activation::kRelu ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / static_cast<double>(s.in));
    for (double& w : weight(l)) w = rng.normal(0.0, stddev);
    for (double& b : bias(l)) b = 0.0;
  }
}

MlpForward mlp_forward(const MlpParams& params, const Matrix& batch) {
  if (batch.cols() != params.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) +
                     " columns, network expects " + std::to_string(params.input_dim()));
  }
  MlpForward result;
  auto& cache = result.cache;
  Matrix h = batch;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto& s = params.layer(l);
    Matrix a = affine(h, params.weight(l), params.bias(l), s.in, s.out);
    Matrix next = a;
    for (double& v : next.data()) v = activate(s.activation, v);
    cache.inputs.push_back(std::move(h));
    cache.pre.push_back(std::move(a));
    cache.post.push_back(next);
    h = std::move(next);
  }
  result.output = std::move(h);
  return result;
}

MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache,
                          const Matrix& grad_output) {
  check_cache(params, cache);
  const Matrix& out = cache.post.back();
  if (grad_output.rows() != out.rows() || grad_output.cols() != out.cols()) {
    throw ShapeError("grad_output shape does not match the forward output");
  }
  MlpGradients grads{std::vector<double>(params.parameter_count(), 0.0), Matrix()};
  Matrix g = grad_output;  // dL/d(post) of the current layer
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    const auto& s = params.layer(l);
    Matrix delta = g;
    const Matrix& a = cache.pre[l];
    const Matrix& h = cache.post[l];
    for (std::size_t k = 0; k < delta.size(); ++k) {
      delta.data()[k] *= derivative(s.activation, a.data()[k], h.data()[k]);
    }
    std::span<double> all(grads.params);
    accumulate_param_grad(delta, cache.inputs[l], all.subspan(s.offset, s.weight_count()),
                          all.subspan(s.offset + s.weight_count(), s.out), true);
    g = back_through_weight(delta, params.weight(l), s.in);
  }
  grads.input = std::move(g);
  return grads;
}

MlpRForward mlp_r_forward(const MlpParams& params, const MlpCache& cache,
                          std::span<const double> direction) {
  check_cache(params, cache);
  if (direction.size() != params.parameter_count()) {
    throw ShapeError("direction length does not match the network");
  }
  MlpRForward r;
  Matrix r_h(cache.inputs[0].rows(), params.input_dim());  // inputs are constant
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto& s = params.layer(l);
    auto v_w = direction.subspan(s.offset, s.weight_count());
    auto v_b = direction.subspan(s.offset + s.weight_count(), s.out);
    Matrix r_a = affine(cache.inputs[l], v_w, v_b, s.in, s.out);
    const Matrix through = affine(r_h, params.weight(l), {}, s.in, s.out);
    for (std::size_t k = 0; k < r_a.size(); ++k) r_a.data()[k] += through.data()[k];
    Matrix r_post = r_a;
    for (std::size_t k = 0; k < r_post.size(); ++k) {
      r_post.data()[k] *=
          derivative(s.activation, cache.pre[l].data()[k], cache.post[l].data()[k]);
    }
    r.pre.push_back(std::move(r_a));
    r.post.push_back(r_post);
    r_h = std::move(r_post);
  }
  return r;
}

std::vector<double> mlp_r_backward(const MlpParams& params, const MlpCache& cache,
                                   const MlpRForward& r_forward,
                                   std::span<const double> direction,
                                   const Matrix& grad_output,
                                   const Matrix& r_grad_output) {
  check_cache(params, cache);
  if (direction.size() != params.parameter_count() ||
      r_forward.pre.size() != params.layer_count()) {
    throw ShapeError("directional pass does not match the network");
  }
  std::vector<double> r_grad(params.parameter_count(), 0.0);
  std::span<double> all(r_grad);
  Matrix g = grad_output;
  Matrix r_g = r_grad_output;
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    const auto& s = params.layer(l);
    const Matrix& a = cache.pre[l];
    const Matrix& h = cache.post[l];
    Matrix delta = g;
    Matrix r_delta = r_g;
    for (std::size_t k = 0; k < delta.size(); ++k) {
      const double d1 = derivative(s.activation, a.data()[k], h.data()[k]);
      const double d2 = second_derivative(s.activation, h.data()[k]);
      r_delta.data()[k] = d2 * r_forward.pre[l].data()[k] * g.data()[k] + d1 * r_g.data()[k];
      delta.data()[k] *= d1;
    }
    auto gw = all.subspan(s.offset, s.weight_count());
    auto gb = all.subspan(s.offset + s.weight_count(), s.out);
    accumulate_param_grad(r_delta, cache.inputs[l], gw, gb, true);
    if (l > 0) accumulate_param_grad(delta, r_forward.post[l - 1], gw, gb, false);

    auto v_w = direction.subspan(s.offset, s.weight_count());
    Matrix next_r = back_through_weight(r_delta, params.weight(l), s.in);
    const Matrix extra = back_through_weight(delta, v_w, s.in);
    for (std::size_t k = 0; k < next_r.size(); ++k) next_r.data()[k] += extra.data()[k];
    g = back_through_weight(delta, params.weight(l), s.in);
    r_g = std::move(next_r);
  }
  return r_grad;
}

}  // namespace plcfe
