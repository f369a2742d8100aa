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

// The hashing network: a stack of dense layers with LeakyReLU hidden units
// and a sigmoid output, its exact backward pass and an Adam optimizer.
//
// Batches are column-major Eigen matrices with one sample per column, so a
// row-major N x D feature block maps directly onto a D x N matrix.
//
// Everything is templated on the scalar type: training runs in float, the
// gradient checks run in double.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlhash/error.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr float kDefaultNegativeSlope = 0.2f;
inline constexpr double kSigmoidClamp = 30.0;

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weights;  // out x in
  Vec<Scalar> bias;     // out

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.bias.size() == b.bias.size() && a.weights == b.weights && a.bias == b.bias;
  }
};

template <typename Scalar>
struct BasicNetworkParams {
  std::vector<DenseLayer<Scalar>> layers;
  float negative_slope = kDefaultNegativeSlope;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const auto& l : layers) d.push_back(l.out_dim());
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  template <typename Other>
  BasicNetworkParams<Other> cast() const {
    BasicNetworkParams<Other> out;
    out.negative_slope = negative_slope;
    for (const auto& l : layers) {
      out.layers.push_back({l.weights.template cast<Other>(), l.bias.template cast<Other>()});
    }
    return out;
  }

  friend bool operator==(const BasicNetworkParams&, const BasicNetworkParams&) = default;
};

using NetworkParams = BasicNetworkParams<float>;

// Per-layer gradients share the parameter layout.
template <typename Scalar>
using BasicParamGrads = std::vector<DenseLayer<Scalar>>;

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename Scalar = float>
BasicNetworkParams<Scalar> init_params(std::span<const std::size_t> dims, std::uint64_t seed,
                                       float negative_slope = kDefaultNegativeSlope) {
  if (dims.size() < 2) throw ValidationError("network needs at least an input and an output size");
  for (auto d : dims) {
    if (d == 0) throw ValidationError("layer sizes must be positive");
  }
  Rng rng(seed);
  BasicNetworkParams<Scalar> params;
  params.negative_slope = negative_slope;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = dims[l];
    const auto fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer<Scalar> layer;
    layer.weights.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    // Row-major fill order so the draw sequence matches the checkpoint layout.
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = static_cast<Scalar>(uni(rng));
      }
    }
    layer.bias = Vec<Scalar>::Zero(static_cast<Eigen::Index>(fan_out));
    params.layers.push_back(std::move(layer));
  }
  return params;
}

template <typename Scalar = float>
BasicNetworkParams<Scalar> init_params(std::initializer_list<std::size_t> dims,
                                       std::uint64_t seed,
                                       float negative_slope = kDefaultNegativeSlope) {
  return init_params<Scalar>(std::span<const std::size_t>(dims.begin(), dims.size()), seed,
                             negative_slope);
}

// Layer widths D -> 1024 -> 512 -> K.
inline std::vector<std::size_t> default_dims(std::size_t input_dim, std::size_t hash_bits) {
  return {input_dim, 1024, 512, hash_bits};
}

// Activations for a batch. activations[0] is the input, activations[l + 1]
// the output of layer l; pre_activations[l] is W_l a_l + b_l.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Mat<Scalar>> pre_activations;
  std::vector<Mat<Scalar>> activations;

  const Mat<Scalar>& output() const { return activations.back(); }
  Eigen::Index batch_size() const { return activations.front().cols(); }
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  const Scalar c = static_cast<Scalar>(kSigmoidClamp);
  x = std::min(std::max(x, -c), c);
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Fills `trace` in place; buffers already of the right size are reused, so
// a trace kept across training steps avoids reallocation.
template <typename Scalar, typename Derived>
void forward_into(const BasicNetworkParams<Scalar>& params, const Eigen::MatrixBase<Derived>& inputs,
                  ForwardTrace<Scalar>& trace) {
  if (params.layers.empty()) throw ValidationError("network has no layers");
  if (static_cast<std::size_t>(inputs.rows()) != params.input_dim()) {
    throw ValidationError("input has " + std::to_string(inputs.rows()) +
                          " features, network expects " + std::to_string(params.input_dim()));
  }
  if (!inputs.allFinite()) throw ValidationError("non-finite network input");

  const Scalar slope = static_cast<Scalar>(params.negative_slope);
  const std::size_t depth = params.layers.size();
  trace.activations.resize(depth + 1);
  trace.pre_activations.resize(depth);
  trace.activations[0] = inputs.template cast<Scalar>();
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = params.layers[l];
    auto& z = trace.pre_activations[l];
    z.resize(layer.weights.rows(), trace.activations[l].cols());
    z.noalias() = layer.weights * trace.activations[l];
    z.colwise() += layer.bias;
    if (l + 1 < depth) {
      // Branch-free LeakyReLU; exact since one of the two terms is zero.
      trace.activations[l + 1] = z.cwiseMax(Scalar(0)) + slope * z.cwiseMin(Scalar(0));
    } else {
      trace.activations[l + 1] = z.unaryExpr([](Scalar x) { return sigmoid(x); });
    }
  }
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward(const BasicNetworkParams<Scalar>& params,
                             const Eigen::MatrixBase<Derived>& inputs) {
  ForwardTrace<Scalar> trace;
  forward_into(params, inputs, trace);
  return trace;
}

template <typename Scalar>
ForwardTrace<Scalar> forward(const BasicNetworkParams<Scalar>& params, std::span<const Scalar> g) {
  Eigen::Map<const Mat<Scalar>> x(g.data(), static_cast<Eigen::Index>(g.size()), 1);
  return forward(params, x);
}

template <typename Scalar>
struct BackwardResult {
  BasicParamGrads<Scalar> param_grads;  // summed over the batch
  Mat<Scalar> input_grads;              // D x B, one column per input

  // Per-layer working buffers, kept so repeated backward_into calls do not
  // reallocate.
  std::vector<Mat<Scalar>> deltas;
};

// Exact chain rule through sigmoid and LeakyReLU. The sigmoid derivative is
// taken as v (1 - v) of the recorded output. Like forward_into, reuses the
// buffers already held by `result`.
template <typename Scalar>
void backward_into(const BasicNetworkParams<Scalar>& params, const ForwardTrace<Scalar>& trace,
                   const Mat<Scalar>& output_grads, BackwardResult<Scalar>& result) {
  if (trace.activations.size() != params.layers.size() + 1 ||
      trace.pre_activations.size() != params.layers.size()) {
    throw ValidationError("trace does not match the network depth");
  }
  const auto& out = trace.output();
  if (output_grads.rows() != out.rows() || output_grads.cols() != out.cols()) {
    throw ValidationError("output gradient shape " + std::to_string(output_grads.rows()) + "x" +
                          std::to_string(output_grads.cols()) + " does not match outputs " +
                          std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }
  const Scalar slope = static_cast<Scalar>(params.negative_slope);

  const std::size_t depth = params.layers.size();
  result.param_grads.resize(depth);
  result.deltas.resize(depth);
  // deltas[l] is the gradient with respect to layer l's pre-activation.
  result.deltas[depth - 1] =
      output_grads.cwiseProduct(out.cwiseProduct((Scalar(1) - out.array()).matrix()));
  for (std::size_t l = depth; l-- > 0;) {
    const auto& delta = result.deltas[l];
    const auto& w = params.layers[l].weights;
    auto& g = result.param_grads[l];
    g.weights.resize(w.rows(), w.cols());
    g.weights.noalias() = delta * trace.activations[l].transpose();
    g.bias = delta.rowwise().sum();
    auto& target = l == 0 ? result.input_grads : result.deltas[l - 1];
    target.resize(w.cols(), delta.cols());
    target.noalias() = w.transpose() * delta;
    if (l > 0) {
      const auto& z = trace.pre_activations[l - 1].array();
      target.array() = (z >= Scalar(0)).select(target.array(), slope * target.array());
    }
  }
}

template <typename Scalar>
BackwardResult<Scalar> backward(const BasicNetworkParams<Scalar>& params,
                                const ForwardTrace<Scalar>& trace,
                                const Mat<Scalar>& output_grads) {
  BackwardResult<Scalar> result;
  backward_into(params, trace, output_grads, result);
  return result;
}

template <typename Scalar>
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  BasicParamGrads<Scalar> first_moment;
  BasicParamGrads<Scalar> second_moment;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename Scalar>
AdamState<Scalar> make_adam(const BasicNetworkParams<Scalar>& params, double learning_rate = 1e-4,
                            double beta1 = 0.5, double beta2 = 0.9, double epsilon = 1e-8) {
  AdamState<Scalar> s{learning_rate, beta1, beta2, epsilon, 0, {}, {}};
  for (const auto& l : params.layers) {
    DenseLayer<Scalar> zero{Mat<Scalar>::Zero(l.weights.rows(), l.weights.cols()),
                            Vec<Scalar>::Zero(l.bias.size())};
    s.first_moment.push_back(zero);
    s.second_moment.push_back(zero);
  }
  return s;
}

// Bias-corrected Adam. A gradient containing NaN/Inf is rejected with
// NumericError before anything is modified.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, BasicNetworkParams<Scalar>& params,
               const BasicParamGrads<Scalar>& grads) {
  if (grads.size() != params.layers.size() || state.first_moment.size() != params.layers.size()) {
    throw ValidationError("gradient/optimizer layout does not match the network");
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    const auto& g = grads[l];
    const auto& p = params.layers[l];
    if (g.weights.rows() != p.weights.rows() || g.weights.cols() != p.weights.cols() ||
        g.bias.size() != p.bias.size()) {
      throw ValidationError("gradient shape mismatch in layer " + std::to_string(l));
    }
    if (!g.weights.allFinite() || !g.bias.allFinite()) {
      throw NumericError("non-finite gradient in layer " + std::to_string(l) +
                         " at optimizer step " + std::to_string(state.step + 1));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const auto c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const auto lr = static_cast<Scalar>(state.learning_rate);
  const auto eps = static_cast<Scalar>(state.epsilon);

  // Processed in cache-sized blocks so each block of p, m, v and g is
  // touched once from memory.
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    constexpr Eigen::Index kBlock = 4096;
    const Eigen::Index n = param.size();
    for (Eigen::Index start = 0; start < n; start += kBlock) {
      const Eigen::Index len = std::min(kBlock, n - start);
      using Block = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
      Block pb(param.data() + start, len);
      Block mb(m.data() + start, len);
      Block vb(v.data() + start, len);
      const Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> gb(g.data() + start, len);
      mb = b1 * mb + (Scalar(1) - b1) * gb;
      vb = b2 * vb + (Scalar(1) - b2) * gb.square();
      pb -= lr * (mb * c1) / ((vb * c2).sqrt() + eps);
    }
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    update(params.layers[l].weights, state.first_moment[l].weights, state.second_moment[l].weights,
           grads[l].weights);
    update(params.layers[l].bias, state.first_moment[l].bias, state.second_moment[l].bias,
           grads[l].bias);
  }
}

// Checkpoint layout, all little-endian:
//   "MILN1" | layer count u64 |
//   per layer: out u64 | in u64 | weights f32 row-major | bias f32 |
//   K u64 | D u64 | negative slope f32
void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mlhash
