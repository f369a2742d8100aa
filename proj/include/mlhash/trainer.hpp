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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlhash/feature_store.hpp"
#include "mlhash/hashing.hpp"
#include "mlhash/miner.hpp"
#include "mlhash/net.hpp"
#include "mlhash/objective.hpp"

namespace mlhash {

enum class RegularizerScope {
  kAllSlots,      // push/balancing over every one of the 3M embeddings
  kUniqueImages,  // once per distinct dataset item in the batch
};

struct TrainConfig {
  LossWeights weights;  // alpha 0.2, lambda1 0.001, lambda2 1
  std::size_t batch_size = 30;
  MiningMode mining = MiningMode::kRandom;
  std::size_t max_resamples = 20;
  RegularizerScope regularizer_scope = RegularizerScope::kAllSlots;

  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;

  std::size_t hash_bits = 32;
  std::vector<std::size_t> hidden_layers = {1024, 512};
  float negative_slope = kDefaultNegativeSlope;

  std::size_t epochs = 30;
  std::size_t iterations_per_epoch = 300;
  std::size_t eval_every = 300;  // steps between validation passes
  std::size_t val_k = 20;
  std::size_t log_every = 1;     // steps between history rows
  std::uint64_t seed = 0;

  std::size_t total_steps() const { return epochs * iterations_per_epoch; }
  std::vector<std::size_t> layer_dims(std::size_t input_dim) const;
  void validate() const;
};

// Flat JSON document; unknown keys are rejected, missing keys keep defaults.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct HistoryRow {
  std::size_t step = 0;
  double total = 0;
  double metric = 0;
  double push = 0;
  double balancing = 0;
  std::optional<double> val_map;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;

  // Header: step,total,metric,push,balancing,val_map (empty when absent).
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  NetworkParams params;  // best-validation checkpoint (ties go to the later one)
  TrainHistory history;
  std::size_t best_step = 0;
  std::optional<double> best_val_map;
};

using TrainObserver = std::function<void(const HistoryRow&)>;

// Mini-batch Adam training on triplets. When `val` is non-empty it is
// scored every eval_every steps (and after the final step) by Hamming mAP@val_k
// against `train` as the archive, and the best-scoring parameters are
// returned. Throws NumericError naming the step if the loss goes non-finite.
TrainResult train(const LabeledDataset& train, const LabeledDataset& val, const TrainConfig& cfg,
                  const TrainObserver& observer = {});

// Same loop starting from caller-supplied parameters.
TrainResult train_from(NetworkParams init, const LabeledDataset& train,
                       const LabeledDataset& val, const TrainConfig& cfg,
                       const TrainObserver& observer = {});

// K x N sigmoid embeddings, one column per dataset row.
Mat<float> embed_dataset(const NetworkParams& params, const LabeledDataset& ds);
Mat<float> embed_rows(const NetworkParams& params, const LabeledDataset& ds,
                      std::span<const std::size_t> rows);

std::vector<HashCode> encode_dataset(const NetworkParams& params, const LabeledDataset& ds);

// Archive index whose ids are row positions and whose labels are the
// dataset labels.
HammingIndex build_index(std::span<const HashCode> codes, std::span<const std::uint32_t> labels);

// Hamming mAP@k of `queries` against `archive` after encoding both.
double validate(const NetworkParams& params, const LabeledDataset& queries,
                const LabeledDataset& archive, std::size_t k);

// Combined objective of the given triplets under `params` (no update).
CombinedLossResult<float> evaluate_objective(const NetworkParams& params, const LabeledDataset& ds,
                                             std::span<const Triplet> triplets,
                                             const LossWeights& weights);

}  // namespace mlhash
