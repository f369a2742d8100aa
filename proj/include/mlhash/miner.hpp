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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mlhash/feature_store.hpp"
#include "mlhash/net.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class MiningMode {
  kRandom,
  // Keep only negatives whose triplet hinge is still active.
  kMarginViolating,
};

std::string_view to_string(MiningMode mode);
MiningMode parse_mining_mode(std::string_view name);

struct MinerConfig {
  std::size_t batch_size = 30;
  MiningMode mode = MiningMode::kRandom;
  std::size_t max_resamples = 20;
  double margin = 0.2;  // hinge margin used for the violation test
  std::uint64_t seed = 0;
};

// Maps dataset indices to their current embeddings (K x n, column j for
// indices[j]).
using EmbedFn = std::function<Mat<float>(std::span<const std::size_t>)>;

// Draws triplet mini-batches. Anchor class is uniform over the classes
// present, anchor and positive are uniform within it, and the negative is
// uniform over all samples of other classes.
//
// In margin-violating mode a slot whose hinge is inactive has its negative
// redrawn up to max_resamples times; after that the last draw is kept.
class TripletMiner {
 public:
  TripletMiner(const LabeledDataset& ds, MinerConfig cfg);

  std::vector<Triplet> sample_batch(const EmbedFn& embed = {});

  // Slots in the most recent batch that hit the resample cap with a
  // still-inactive hinge.
  std::size_t last_capped_slots() const { return last_capped_; }

  const MinerConfig& config() const { return cfg_; }

 private:
  std::size_t draw_negative(std::uint32_t anchor_class);

  const LabeledDataset* ds_;
  MinerConfig cfg_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::uint32_t> present_classes_;
  std::size_t last_capped_ = 0;
};

}  // namespace mlhash
