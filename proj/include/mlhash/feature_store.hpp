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

// Labeled feature datasets: the on-disk feature format, stratified
// train/val/test splitting and the synthetic Gaussian-cluster generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mlhash {

// N labeled D-dimensional descriptors stored row-major. Immutable after
// construction; the constructor enforces every invariant.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::vector<float> features, std::vector<std::uint32_t> labels,
                 std::size_t dim, std::size_t class_count);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t class_count() const { return class_count_; }
  bool empty() const { return labels_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  std::uint32_t label(std::size_t i) const { return labels_[i]; }
  std::span<const float> features() const { return features_; }
  std::span<const std::uint32_t> labels() const { return labels_; }

  // Number of samples per class id, indexed 0..class_count-1.
  std::vector<std::size_t> class_sizes() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::vector<float> features_;
  std::vector<std::uint32_t> labels_;
  std::size_t dim_ = 0;
  std::size_t class_count_ = 0;
};

// Concatenates datasets sharing D; class_count is the maximum of the inputs.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

// Returns a copy whose rows are scaled to unit Euclidean norm (zero rows are
// left untouched).
LabeledDataset unit_normalized(const LabeledDataset& ds);

// File layout: "FSTR1" | N u64 | D u64 | C u64 | N*D f32 | N u32, all LE.
inline constexpr std::size_t kFeatureHeaderBytes = 5 + 3 * 8;

LabeledDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

struct SplitSpec {
  double train_fraction = 0.6;
  std::size_t val_per_class = 20;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

// Per class: ceil(train_fraction * n_c) samples go to the training portion,
// of which val_per_class are carved off as validation; the rest is test.
// Each partition keeps the original dataset order. Throws ConfigError naming
// the class if it cannot supply at least one train and one test sample.
DatasetSplit stratified_split(const LabeledDataset& ds, const SplitSpec& spec);

struct SyntheticSpec {
  std::size_t classes = 21;
  std::size_t per_class = 100;
  std::size_t dim = 64;
  double spread = 1.0;      // per-coordinate noise standard deviation
  double separation = 4.0;  // radius of the sphere holding the class means
  std::uint64_t seed = 0;
};

// Gaussian clusters around means drawn uniformly on a sphere of radius
// `separation`; samples are emitted class by class with label = cluster id.
// spread == 0 is accepted as the zero-noise limit.
LabeledDataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace mlhash
