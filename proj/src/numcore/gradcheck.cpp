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

#include "plcfe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

double checked(double v, std::size_t coord) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite loss while perturbing coordinate " + std::to_string(coord));
  }
  return v;
}

}  // namespace

std::vector<double> finite_diff_gradient(const ScalarFn& fn, std::span<const double> params,
                                         double eps) {
  if (!(eps > 0.0)) throw ParameterError("finite difference step must be positive");
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double up = checked(fn(theta), i);
    theta[i] = saved - eps;
    const double down = checked(fn(theta), i);
    theta[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double finite_diff_check(const ScalarFn& fn, std::span<const double> params,
                         std::span<const double> analytic, double eps) {
  if (analytic.size() != params.size()) {
    throw ParameterError("analytic gradient length does not match parameters");
  }
  const auto numeric = finite_diff_gradient(fn, params, eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double err = std::abs(numeric[i] - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace plcfe
