// Copyright 2026 The mlhash Authors.
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

#pragma once

// Finite-difference helpers for the gradient tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include "mlhash/net.hpp"

namespace mlhash::testing {

inline constexpr double kFdStep = 1e-4;

// |a - n| / max(|a|, |n|, floor); the floor keeps entries that are zero up
// to round-off from dominating.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of f with respect to a single scalar slot.
inline double central_difference(double& slot, const std::function<double()>& f, double h = kFdStep) {
  const double saved = slot;
  slot = saved + h;
  const double up = f();
  slot = saved - h;
  const double down = f();
  slot = saved;
  return (up - down) / (2 * h);
}

// Max relative error between analytic parameter gradients and central
// differences of `loss` over every weight and bias.
inline double max_param_gradient_error(BasicNetworkParams<double>& params,
                                       const BasicParamGrads<double>& analytic,
                                       const std::function<double()>& loss) {
  double worst = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& w = params.layers[l].weights;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      worst = std::max(worst, relative_error(analytic[l].weights.data()[i],
                                             central_difference(w.data()[i], loss)));
    }
    auto& b = params.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      worst = std::max(worst, relative_error(analytic[l].bias[i], central_difference(b[i], loss)));
    }
  }
  return worst;
}

inline double max_matrix_gradient_error(Mat<double>& x, const Mat<double>& analytic,
                                        const std::function<double()>& loss) {
  double worst = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    worst = std::max(worst, relative_error(analytic.data()[i], central_difference(x.data()[i], loss)));
  }
  return worst;
}

}  // namespace mlhash::testing
