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

#ifndef PLCFE_GRADCHECK_HPP_
#define PLCFE_GRADCHECK_HPP_

#include <functional>
#include <span>
#include <vector>

namespace plcfe {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient of fn at params.
std::vector<double> finite_diff_gradient(const ScalarFn& fn, std::span<const double> params,
                                         double eps);

// Max over coordinates of |g_fd - g| / max(1, |g|), comparing the central
// difference gradient with `analytic`. Throws ParameterError for eps <= 0 and
// NumericError if fn returns a non-finite value.
double finite_diff_check(const ScalarFn& fn, std::span<const double> params,
                         std::span<const double> analytic, double eps);

}  // namespace plcfe

#endif  // PLCFE_GRADCHECK_HPP_
