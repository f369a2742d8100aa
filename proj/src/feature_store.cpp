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

#include "mlhash/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "mlhash/binary_io.hpp"
#include "mlhash/error.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

namespace {

constexpr std::string_view kMagic = "FSTR1";

}  // namespace

LabeledDataset::LabeledDataset(std::vector<float> features,
                               std::vector<std::uint32_t> labels,
                               std::size_t dim, std::size_t class_count)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      dim_(dim),
      class_count_(class_count) {
  if (labels_.empty()) throw ValidationError("dataset must contain at least one sample");
  if (dim_ == 0) throw ValidationError("dataset dimension must be positive");
  if (features_.size() != labels_.size() * dim_) {
    throw ValidationError("feature count " + std::to_string(features_.size()) +
                          " does not match N*D = " +
                          std::to_string(labels_.size() * dim_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= class_count_) {
      throw ValidationError("sample " + std::to_string(i) + " has label " +
                            std::to_string(labels_[i]) + " >= class count " +
                            std::to_string(class_count_));
    }
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (!std::isfinite(features_[i])) {
      throw ValidationError("non-finite feature value in sample " +
                            std::to_string(i / dim_));
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_sizes() const {
  std::vector<std::size_t> sizes(class_count_, 0);
  for (auto y : labels_) ++sizes[y];
  return sizes;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<float> feats;
  feats.reserve(indices.size() * dim_);
  std::vector<std::uint32_t> labels;
  labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw ValidationError("subset index out of range");
    auto r = row(i);
    feats.insert(feats.end(), r.begin(), r.end());
    labels.push_back(labels_[i]);
  }
  return LabeledDataset(std::move(feats), std::move(labels), dim_, class_count_);
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.dim() != b.dim()) throw ValidationError("cannot concatenate datasets of different dimension");
  std::vector<float> feats(a.features().begin(), a.features().end());
  feats.insert(feats.end(), b.features().begin(), b.features().end());
  std::vector<std::uint32_t> labels(a.labels().begin(), a.labels().end());
  labels.insert(labels.end(), b.labels().begin(), b.labels().end());
  return LabeledDataset(std::move(feats), std::move(labels), a.dim(),
                        std::max(a.class_count(), b.class_count()));
}

LabeledDataset unit_normalized(const LabeledDataset& ds) {
  std::vector<float> feats(ds.features().begin(), ds.features().end());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    float* r = feats.data() + i * ds.dim();
    double sq = 0.0;
    for (std::size_t j = 0; j < ds.dim(); ++j) sq += double(r[j]) * r[j];
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < ds.dim(); ++j) r[j] = static_cast<float>(r[j] * inv);
  }
  return LabeledDataset(std::move(feats),
                        std::vector<std::uint32_t>(ds.labels().begin(), ds.labels().end()),
                        ds.dim(), ds.class_count());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  io::expect_magic(in, kMagic);
  const auto n = io::read_le<std::uint64_t>(in, "N");
  const auto d = io::read_le<std::uint64_t>(in, "D");
  const auto c = io::read_le<std::uint64_t>(in, "C");
  if (n == 0 || d == 0) throw FormatError("feature file declares N=0 or D=0");
  // Reject headers whose payload cannot fit in the file before allocating.
  const auto file_size = std::filesystem::file_size(path);
  if (d > file_size || n > file_size / (d * 4 + 4) + 1 ||
      kFeatureHeaderBytes + n * d * 4 + n * 4 != file_size) {
    throw FormatError("feature file size does not match header (N=" +
                      std::to_string(n) + ", D=" + std::to_string(d) + ")");
  }
  std::vector<float> feats(n * d);
  io::read_f32_array(in, feats, "features");
  std::vector<std::uint32_t> labels(n);
  for (auto& y : labels) y = io::read_le<std::uint32_t>(in, "labels");
  io::expect_eof(in);
  return LabeledDataset(std::move(feats), std::move(labels), d, c);
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  io::write_magic(out, kMagic);
  io::write_le<std::uint64_t>(out, ds.size());
  io::write_le<std::uint64_t>(out, ds.dim());
  io::write_le<std::uint64_t>(out, ds.class_count());
  io::write_f32_array(out, ds.features());
  for (auto y : ds.labels()) io::write_le<std::uint32_t>(out, y);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetSplit stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(ds.class_count());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.label(i)].push_back(i);

  Rng rng(spec.seed);
  std::vector<std::size_t> train, val, test;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    const std::size_t n = members.size();
    // The epsilon keeps exact products such as 0.6 * 100 from rounding up.
    const auto n_train_total = static_cast<std::size_t>(
        std::ceil(spec.train_fraction * static_cast<double>(n) - 1e-9));
    if (n_train_total < spec.val_per_class + 1 || n_train_total >= n) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(n) +
                        " samples: cannot provide " + std::to_string(spec.val_per_class) +
                        " validation plus at least one train and one test sample");
    }
    std::shuffle(members.begin(), members.end(), rng);
    val.insert(val.end(), members.begin(), members.begin() + spec.val_per_class);
    train.insert(train.end(), members.begin() + spec.val_per_class,
                 members.begin() + n_train_total);
    test.insert(test.end(), members.begin() + n_train_total, members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());

  DatasetSplit out;
  out.train = ds.subset(train);
  if (!val.empty()) out.val = ds.subset(val);
  out.test = ds.subset(test);
  return out;
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.per_class < 2 || spec.dim < 2) {
    throw ValidationError("synthetic data needs classes >= 2, per_class >= 2, dim >= 2");
  }
  if (!(spec.spread >= 0.0) || !(spec.separation > 0.0)) {
    throw ValidationError("synthetic data needs spread >= 0 and separation > 0");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> means(spec.classes * spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    double* m = means.data() + c * spec.dim;
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        m[j] = normal(rng);
        sq += m[j] * m[j];
      }
    } while (sq == 0.0);
    const double scale = spec.separation / std::sqrt(sq);
    for (std::size_t j = 0; j < spec.dim; ++j) m[j] *= scale;
  }

  const std::size_t n = spec.classes * spec.per_class;
  std::vector<float> feats(n * spec.dim);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const double* m = means.data() + c * spec.dim;
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      const std::size_t i = c * spec.per_class + s;
      labels[i] = static_cast<std::uint32_t>(c);
      float* r = feats.data() + i * spec.dim;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        r[j] = static_cast<float>(m[j] + spec.spread * normal(rng));
      }
    }
  }
  return LabeledDataset(std::move(feats), std::move(labels), spec.dim, spec.classes);
}

}  // namespace mlhash
