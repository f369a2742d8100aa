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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "doctest.h"
#include "mlhash/error.hpp"
#include "mlhash/feature_store.hpp"
#include "mlhash/rng.hpp"
#include "test_util.hpp"

using namespace mlhash;
using mlhash::testing::TempDir;

namespace {

LabeledDataset random_dataset(std::size_t n, std::size_t d, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  std::uniform_int_distribution<std::uint32_t> label(0, static_cast<std::uint32_t>(c - 1));
  std::vector<float> f(n * d);
  for (auto& x : f) x = normal(rng);
  std::vector<std::uint32_t> y(n);
  for (auto& v : y) v = label(rng);
  return LabeledDataset(std::move(f), std::move(y), d, c);
}

void put_u64(std::vector<char>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::vector<char>& b, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(b, bits);
}

}  // namespace

TEST_CASE("save/load roundtrip is exact for random datasets") {
  TempDir tmp;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = random_dataset(1 + seed * 7, 1 + seed % 9, 1 + seed % 5, seed);
    save_dataset(ds, tmp / "f.bin");
    CHECK(load_dataset(tmp / "f.bin") == ds);
  }
}

TEST_CASE("single-class dataset loads back identically") {
  TempDir tmp;
  const LabeledDataset ds({1.f, 2.f, 3.f, 4.f}, {0, 0}, 2, 1);
  save_dataset(ds, tmp / "f.bin");
  CHECK(load_dataset(tmp / "f.bin") == ds);
}

TEST_CASE("hand-built file parses per the documented layout") {
  TempDir tmp;
  std::vector<char> b{'F', 'S', 'T', 'R', '1'};
  put_u64(b, 3);
  put_u64(b, 2);
  put_u64(b, 2);
  for (float f : {0.5f, -1.0f, 2.25f, 3.0f, 1e-3f, -7.5f}) put_f32(b, f);
  for (std::uint32_t y : {0u, 1u, 0u}) put_u32(b, y);
  mlhash::testing::write_bytes(tmp / "hand.bin", b);

  const auto ds = load_dataset(tmp / "hand.bin");
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 2);
  CHECK(ds.class_count() >= 2);
  CHECK(ds.row(1)[0] == 2.25f);
  CHECK(ds.row(2)[1] == -7.5f);
  CHECK(ds.label(1) == 1);

  // Saving the parsed dataset reproduces the hand-built bytes.
  save_dataset(ds, tmp / "again.bin");
  CHECK(mlhash::testing::read_bytes(tmp / "again.bin") == b);
}

TEST_CASE("file size matches header + payload for D=2048, N=1") {
  TempDir tmp;
  std::vector<float> f(2048, 0.25f);
  const LabeledDataset ds(std::move(f), {0}, 2048, 1);
  save_dataset(ds, tmp / "big.bin");
  CHECK(std::filesystem::file_size(tmp / "big.bin") == 5 + 3 * 8 + 2048 * 4 + 4);
  CHECK(kFeatureHeaderBytes == 29);
}

TEST_CASE("saving twice yields byte-identical files") {
  TempDir tmp;
  const auto ds = random_dataset(17, 5, 3, 42);
  save_dataset(ds, tmp / "a.bin");
  save_dataset(ds, tmp / "b.bin");
  CHECK(mlhash::testing::read_bytes(tmp / "a.bin") == mlhash::testing::read_bytes(tmp / "b.bin"));
}

TEST_CASE("corrupt or truncated feature files are rejected") {
  TempDir tmp;
  const auto ds = random_dataset(4, 3, 2, 1);
  save_dataset(ds, tmp / "ok.bin");
  auto bytes = mlhash::testing::read_bytes(tmp / "ok.bin");

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_dataset(tmp / "bad.bin"), FormatError);
  }
  SUBCASE("truncated payload") {
    bytes.resize(bytes.size() - 3);
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_dataset(tmp / "bad.bin"), FormatError);
  }
  SUBCASE("trailing garbage") {
    bytes.push_back('\0');
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_dataset(tmp / "bad.bin"), FormatError);
  }
  SUBCASE("label >= C") {
    bytes[bytes.size() - 4] = 9;  // first byte of the last label
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_dataset(tmp / "bad.bin"), ValidationError);
  }
  SUBCASE("non-finite value") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + kFeatureHeaderBytes, &nan, 4);
    mlhash::testing::write_bytes(tmp / "bad.bin", bytes);
    CHECK_THROWS_AS(load_dataset(tmp / "bad.bin"), ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset(tmp / "nope.bin"), IoError);
  }
}

TEST_CASE("save to an unwritable path is an I/O error") {
  const auto ds = random_dataset(2, 2, 1, 0);
  CHECK_THROWS_AS(save_dataset(ds, "/nonexistent-dir/x/y.bin"), IoError);
}

TEST_CASE("dataset constructor enforces invariants") {
  CHECK_THROWS_AS(LabeledDataset({}, {}, 2, 1), ValidationError);
  CHECK_THROWS_AS(LabeledDataset({1.f}, {0}, 2, 1), ValidationError);
  CHECK_THROWS_AS(LabeledDataset({1.f, 2.f}, {1}, 2, 1), ValidationError);
  CHECK_THROWS_AS(LabeledDataset({1.f}, {0}, 0, 1), ValidationError);
}

TEST_CASE("stratified split gives 40/20/40 per class on a 21x100 archive") {
  SyntheticSpec spec;
  spec.classes = 21;
  spec.per_class = 100;
  spec.dim = 4;
  spec.seed = 3;
  const auto ds = gen_synthetic(spec);
  const auto parts = stratified_split(ds, {0.6, 20, 11});
  for (std::size_t c = 0; c < 21; ++c) {
    CHECK(parts.train.class_sizes()[c] == 40);
    CHECK(parts.val.class_sizes()[c] == 20);
    CHECK(parts.test.class_sizes()[c] == 40);
  }
}

TEST_CASE("split partitions are disjoint, cover the data and are deterministic") {
  // Feature value = row index so partitions can be traced back to rows.
  const std::size_t n = 157;
  std::vector<float> f(n);
  std::vector<std::uint32_t> y(n);
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = static_cast<float>(i);
    y[i] = static_cast<std::uint32_t>(rng() % 4);
  }
  const LabeledDataset ds(f, y, 1, 4);
  const SplitSpec spec{0.7, 3, 99};
  const auto a = stratified_split(ds, spec);
  const auto b = stratified_split(ds, spec);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  std::multiset<float> seen;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (float v : part->features()) seen.insert(v);
  }
  CHECK(seen.size() == n);
  CHECK(std::set<float>(seen.begin(), seen.end()).size() == n);

  const auto c = stratified_split(ds, {0.7, 3, 100});
  CHECK_FALSE((c.train == a.train && c.test == a.test));
}

TEST_CASE("split keeps per-class proportions within one sample") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 2 + rng() % 6;
    std::vector<std::uint32_t> y;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t nc = 5 + rng() % 60;
      y.insert(y.end(), nc, static_cast<std::uint32_t>(c));
    }
    const LabeledDataset ds(std::vector<float>(y.size(), 1.0f), y, 1, classes);
    const double tf = 0.3 + 0.4 * static_cast<double>(rng() % 100) / 100.0;
    const auto parts = stratified_split(ds, {tf, 1, rng()});
    const auto total = ds.class_sizes();
    const auto tr = parts.train.class_sizes();
    const auto va = parts.val.class_sizes();
    for (std::size_t c = 0; c < classes; ++c) {
      const double want = tf * static_cast<double>(total[c]);
      CHECK(std::abs(static_cast<double>(tr[c] + va[c]) - want) <= 1.0);
      CHECK(va[c] == 1);
    }
  }
}

TEST_CASE("split rejects classes that cannot fill every partition") {
  const LabeledDataset ds(std::vector<float>(6, 0.f), {0, 0, 0, 1, 1, 1}, 1, 2);
  // ceil(0.9 * 3) = 3 leaves class 0 without a test sample.
  try {
    stratified_split(ds, {0.9, 0, 1});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
  CHECK_THROWS_AS(stratified_split(ds, {0.5, 2, 1}), ConfigError);
  CHECK_THROWS_AS(stratified_split(ds, {1.0, 0, 1}), ConfigError);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.per_class = 5;
  spec.dim = 4;
  spec.seed = 12;

  SUBCASE("zero spread collapses each class to its mean") {
    spec.spread = 0.0;
    const auto ds = gen_synthetic(spec);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto first = ds.row(ds.label(i) * spec.per_class);
      CHECK(std::equal(first.begin(), first.end(), ds.row(i).begin()));
    }
  }
  SUBCASE("class means lie on the separation sphere") {
    spec.spread = 0.0;
    spec.separation = 2.5;
    const auto ds = gen_synthetic(spec);
    double sq = 0;
    for (float x : ds.row(0)) sq += double(x) * x;
    CHECK(std::sqrt(sq) == doctest::Approx(2.5).epsilon(1e-6));
  }
  SUBCASE("same seed gives the same dataset") {
    CHECK(gen_synthetic(spec) == gen_synthetic(spec));
    auto other = spec;
    other.seed = 13;
    CHECK_FALSE(gen_synthetic(other) == gen_synthetic(spec));
  }
  SUBCASE("labels are cluster ids") {
    const auto ds = gen_synthetic(spec);
    CHECK(ds.class_sizes() == std::vector<std::size_t>{5, 5, 5});
  }
  SUBCASE("preconditions") {
    spec.classes = 1;
    CHECK_THROWS_AS(gen_synthetic(spec), ValidationError);
    spec.classes = 3;
    spec.separation = 0;
    CHECK_THROWS_AS(gen_synthetic(spec), ValidationError);
  }
}

TEST_CASE("well-separated synthetic classes: within-class pairs are closer than between-class") {
  SyntheticSpec spec{2, 30, 8, 0.1, 10.0, 4};
  const auto ds = gen_synthetic(spec);
  double within = 0, between = 0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      double sq = 0;
      for (std::size_t k = 0; k < ds.dim(); ++k) {
        const double d = double(ds.row(i)[k]) - ds.row(j)[k];
        sq += d * d;
      }
      if (ds.label(i) == ds.label(j)) {
        within += std::sqrt(sq);
        ++nw;
      } else {
        between += std::sqrt(sq);
        ++nb;
      }
    }
  }
  CHECK(within / nw < between / nb);
}

TEST_CASE("1-NN accuracy exceeds 0.99 when separation dominates spread") {
  SyntheticSpec spec{10, 40, 16, 0.2, 8.0, 21};
  const auto ds = gen_synthetic(spec);
  const auto parts = stratified_split(ds, {0.5, 0, 2});
  std::size_t correct = 0;
  for (std::size_t q = 0; q < parts.test.size(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t label = 0;
    for (std::size_t a = 0; a < parts.train.size(); ++a) {
      double sq = 0;
      for (std::size_t k = 0; k < ds.dim(); ++k) {
        const double d = double(parts.test.row(q)[k]) - parts.train.row(a)[k];
        sq += d * d;
      }
      if (sq < best) {
        best = sq;
        label = parts.train.label(a);
      }
    }
    correct += label == parts.test.label(q);
  }
  CHECK(static_cast<double>(correct) / parts.test.size() > 0.99);
}

TEST_CASE("unit normalization and concatenation") {
  const LabeledDataset a({3.f, 4.f, 0.f, 0.f}, {0, 1}, 2, 2);
  const auto n = unit_normalized(a);
  CHECK(n.row(0)[0] == doctest::Approx(0.6));
  CHECK(n.row(0)[1] == doctest::Approx(0.8));
  CHECK(n.row(1)[0] == 0.f);
  const LabeledDataset b({1.f, 1.f}, {2}, 2, 3);
  const auto c = concat(a, b);
  CHECK(c.size() == 3);
  CHECK(c.class_count() == 3);
  CHECK(c.label(2) == 2);
}
