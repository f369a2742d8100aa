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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mlhash/error.hpp"
#include "mlhash/net.hpp"
#include "test_util.hpp"

using namespace mlhash;
using mlhash::testing::TempDir;

namespace {

// Straightforward loop implementation used as the forward oracle.
std::vector<double> naive_forward(const BasicNetworkParams<double>& p, std::vector<double> x) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    std::vector<double> y(layer.out_dim());
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      double s = layer.bias[static_cast<Eigen::Index>(r)];
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        s += layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
      }
      if (l + 1 < p.layers.size()) {
        y[r] = s >= 0 ? s : p.negative_slope * s;
      } else {
        y[r] = 1.0 / (1.0 + std::exp(-s));
      }
    }
    x = std::move(y);
  }
  return x;
}

Mat<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

TEST_CASE("init_params: zero biases, determinism and Glorot bounds") {
  const auto p = init_params<float>({8, 4}, 1);
  CHECK(p.layers.size() == 1);
  CHECK(p.layers[0].bias.isZero());
  CHECK(init_params<float>({8, 4}, 1) == p);
  CHECK_FALSE(init_params<float>({8, 4}, 2) == p);

  const auto big = init_params<float>({2048, 1024, 512, 32}, 9);
  const std::vector<std::size_t> dims{2048, 1024, 512, 32};
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / double(dims[l] + dims[l + 1]));
    const double max_abs = big.layers[l].weights.cwiseAbs().maxCoeff();
    CHECK(max_abs <= bound);
    // With this many draws the extreme lands close to the bound.
    CHECK(max_abs > 0.99 * bound);
    CHECK(std::abs(big.layers[l].weights.mean()) < 0.01 * bound);
  }
  CHECK(big.dims() == dims);
  CHECK_THROWS_AS(init_params<float>({8}, 1), ValidationError);
  CHECK_THROWS_AS(init_params<float>({8, 0, 2}, 1), ValidationError);
}

TEST_CASE("forward: closed-form cases") {
  auto p = init_params<double>({5, 7, 3}, 4);
  for (auto& l : p.layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
  const auto t = forward(p, Mat<double>::Random(5, 4).eval());
  CHECK((t.output().array() == 0.5).all());

  BasicNetworkParams<double> scalar;
  scalar.layers.push_back({Mat<double>::Constant(1, 1, 1.0), Vec<double>::Zero(1)});
  const std::vector<double> x{0.0};
  CHECK(forward<double>(scalar, std::span<const double>(x)).output()(0, 0) == 0.5);
}

TEST_CASE("forward matches a naive loop implementation") {
  const auto p = init_params<double>({9, 12, 6, 5}, 7);
  const auto x = random_matrix(9, 6, 77);
  const auto t = forward(p, x);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> in(x.col(c).data(), x.col(c).data() + x.rows());
    const auto want = naive_forward(p, in);
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(t.output()(static_cast<Eigen::Index>(k), c) == doctest::Approx(want[k]).epsilon(1e-6));
    }
  }
  // float path agrees with the double oracle too
  const auto pf = p.cast<float>();
  const auto tf = forward(pf, x.cast<float>().eval());
  CHECK((tf.output().cast<double>() - t.output()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("forward validates its input") {
  const auto p = init_params<float>({3, 2}, 1);
  CHECK_THROWS_AS(forward(p, Mat<float>::Zero(4, 1).eval()), ValidationError);
  Mat<float> bad = Mat<float>::Zero(3, 1);
  bad(1, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(forward(p, bad), ValidationError);
}

TEST_CASE("outputs stay inside [0, 1] even for extreme inputs") {
  const auto p = init_params<float>({6, 8, 4}, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat<float> x = (random_matrix(6, 10, trial).cast<float>() * float(std::pow(10.0, trial % 8))).eval();
    const auto out = forward(p, x).output();
    CHECK(out.allFinite());
    CHECK(out.minCoeff() >= 0.0f);
    CHECK(out.maxCoeff() <= 1.0f);
  }
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
  const auto p = init_params<double>({4, 5, 3}, 2);
  const auto t = forward(p, random_matrix(4, 3, 1));
  const auto g = backward(p, t, Mat<double>(Mat<double>::Zero(3, 3)));
  for (const auto& l : g.param_grads) {
    CHECK(l.weights.isZero());
    CHECK(l.bias.isZero());
  }
  CHECK(g.input_grads.isZero());
}

TEST_CASE("backward: scalar net bias gradient equals sigmoid'(0)") {
  BasicNetworkParams<double> p;
  p.layers.push_back({Mat<double>::Constant(1, 1, 1.0), Vec<double>::Zero(1)});
  const auto t = forward(p, Mat<double>::Zero(1, 1).eval());
  const auto g = backward(p, t, Mat<double>(Mat<double>::Constant(1, 1, 1.0)));
  CHECK(g.param_grads[0].bias[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g.param_grads[0].weights(0, 0) == 0.0);  // input is zero
  CHECK(g.input_grads(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("backward rejects mismatched shapes") {
  const auto p = init_params<double>({4, 3}, 2);
  const auto t = forward(p, random_matrix(4, 2, 1));
  CHECK_THROWS_AS(backward(p, t, Mat<double>(Mat<double>::Zero(3, 3))), ValidationError);
  CHECK_THROWS_AS(backward(p, t, Mat<double>(Mat<double>::Zero(2, 2))), ValidationError);
}

TEST_CASE("backward matches central finite differences for random linear losses") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto p = init_params<double>({8, 6, 5, 4}, 100 + trial);
    for (auto& l : p.layers) l.bias = random_matrix(l.bias.size(), 1, trial + 7) * 0.1;
    auto x = random_matrix(8, 3, 200 + trial);
    const auto c = random_matrix(4, 3, 300 + trial);
    auto loss = [&] { return forward(p, x).output().cwiseProduct(c).sum(); };

    const auto g = backward(p, forward(p, x), c);
    CHECK(mlhash::testing::max_param_gradient_error(p, g.param_grads, loss) < 1e-4);
    CHECK(mlhash::testing::max_matrix_gradient_error(x, g.input_grads, loss) < 1e-4);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient from a fresh state leaves params unchanged") {
    auto p = init_params<double>({3, 2}, 5);
    const auto before = p;
    auto s = make_adam(p);
    BasicParamGrads<double> g{{Mat<double>::Zero(2, 3), Vec<double>::Zero(2)}};
    adam_step(s, p, g);
    CHECK(p == before);
    CHECK(s.step == 1);
  }
  SUBCASE("first step on a scalar parameter") {
    BasicNetworkParams<double> p;
    p.layers.push_back({Mat<double>::Constant(1, 1, 0.3), Vec<double>::Zero(1)});
    auto s = make_adam(p, 1e-4, 0.5, 0.9, 1e-8);
    BasicParamGrads<double> g{{Mat<double>::Constant(1, 1, 1.0), Vec<double>::Zero(1)}};
    adam_step(s, p, g);
    // m = 0.5, v = 0.1; bias-corrected m_hat = 1, v_hat = 1.
    CHECK(p.layers[0].weights(0, 0) - 0.3 == doctest::Approx(-1e-4 / (1 + 1e-8)).epsilon(1e-9));
    CHECK(s.first_moment[0].weights(0, 0) == doctest::Approx(0.5));
    CHECK(s.second_moment[0].weights(0, 0) == doctest::Approx(0.1));
    CHECK(s.step == 1);
  }
  SUBCASE("two identical calls produce identical results") {
    auto p1 = init_params<float>({4, 3}, 6);
    auto p2 = p1;
    auto s1 = make_adam(p1);
    auto s2 = make_adam(p2);
    BasicParamGrads<float> g{{Mat<float>::Random(3, 4), Vec<float>::Random(3)}};
    for (int i = 0; i < 3; ++i) {
      adam_step(s1, p1, g);
      adam_step(s2, p2, g);
    }
    CHECK(p1 == p2);
    CHECK(s1 == s2);
  }
  SUBCASE("non-finite gradients are rejected without touching state") {
    auto p = init_params<float>({2, 2}, 1);
    const auto before = p;
    auto s = make_adam(p);
    BasicParamGrads<float> g{{Mat<float>::Zero(2, 2), Vec<float>::Zero(2)}};
    g[0].bias[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(s, p, g), NumericError);
    CHECK(p == before);
    CHECK(s.step == 0);
  }
}

TEST_CASE("checkpoint roundtrip, consistency and corruption") {
  TempDir tmp;
  auto p = init_params<float>({7, 9, 5, 3}, 11, 0.1f);
  for (auto& l : p.layers) l.bias.setRandom();
  save_checkpoint(p, tmp / "m.bin");
  const auto q = load_checkpoint(tmp / "m.bin");
  CHECK(q == p);
  CHECK(q.negative_slope == 0.1f);

  const Mat<float> x = Mat<float>::Random(7, 4);
  CHECK(forward(q, x).output() == forward(p, x).output());

  // 5 magic + 8 count + per layer (16 + 4*out*in + 4*out) + 8 + 8 + 4
  const std::size_t expected = 5 + 8 + (16 + 4 * 63 + 4 * 9) + (16 + 4 * 45 + 4 * 5) +
                               (16 + 4 * 15 + 4 * 3) + 20;
  CHECK(std::filesystem::file_size(tmp / "m.bin") == expected);

  auto bytes = mlhash::testing::read_bytes(tmp / "m.bin");
  SUBCASE("truncated") {
    bytes.resize(bytes.size() / 2);
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_checkpoint(tmp / "bad.bin"), FormatError);
  }
  SUBCASE("bad magic") {
    bytes[4] = '2';
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_checkpoint(tmp / "bad.bin"), FormatError);
  }
  SUBCASE("metadata disagrees with layers") {
    bytes[bytes.size() - 20] = 4;  // K
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_checkpoint(tmp / "bad.bin"), FormatError);
  }
}
