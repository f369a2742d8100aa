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

#include "mlhash/miner.hpp"

#include <random>
#include <string>
#include <unordered_map>

#include "mlhash/error.hpp"

namespace mlhash {

std::string_view to_string(MiningMode mode) {
  switch (mode) {
    case MiningMode::kRandom: return "random";
    case MiningMode::kMarginViolating: return "margin-violating";
  }
  return "random";
}

MiningMode parse_mining_mode(std::string_view name) {
  if (name == "random") return MiningMode::kRandom;
  if (name == "margin-violating" || name == "semi-hard") return MiningMode::kMarginViolating;
  throw ValidationError("unknown mining mode '" + std::string(name) +
                        "' (expected random or margin-violating)");
}

TripletMiner::TripletMiner(const LabeledDataset& ds, MinerConfig cfg)
    : ds_(&ds), cfg_(cfg), rng_(cfg.seed), members_(ds.class_count()) {
  if (cfg_.batch_size < 1) throw ConfigError("triplet batch size must be at least 1");
  if (cfg_.max_resamples < 1) throw ConfigError("max_resamples must be at least 1");
  for (std::size_t i = 0; i < ds.size(); ++i) members_[ds.label(i)].push_back(i);
  for (std::size_t c = 0; c < members_.size(); ++c) {
    if (!members_[c].empty()) present_classes_.push_back(static_cast<std::uint32_t>(c));
  }
  if (present_classes_.size() < 2) {
    throw ConfigError("triplet mining needs samples from at least two classes");
  }
}

std::size_t TripletMiner::draw_negative(std::uint32_t anchor_class) {
  std::uniform_int_distribution<std::size_t> any(0, ds_->size() - 1);
  for (;;) {
    const auto idx = any(rng_);
    if (ds_->label(idx) != anchor_class) return idx;
  }
}

std::vector<Triplet> TripletMiner::sample_batch(const EmbedFn& embed) {
  const bool mining = cfg_.mode == MiningMode::kMarginViolating;
  if (mining && !embed) {
    throw ConfigError("margin-violating mining requires an embedding function");
  }
  std::vector<Triplet> batch;
  batch.reserve(cfg_.batch_size);
  std::uniform_int_distribution<std::size_t> pick_class(0, present_classes_.size() - 1);
  for (std::size_t s = 0; s < cfg_.batch_size; ++s) {
    const auto c = present_classes_[pick_class(rng_)];
    const auto& m = members_[c];
    if (m.size() < 2) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                        " sample(s); an anchor class needs at least 2");
    }
    std::uniform_int_distribution<std::size_t> within(0, m.size() - 1);
    const auto a = within(rng_);
    // Draw the positive from the other m-1 members.
    std::uniform_int_distribution<std::size_t> others(0, m.size() - 2);
    auto p = others(rng_);
    if (p >= a) ++p;
    batch.push_back({m[a], m[p], draw_negative(c)});
  }
  last_capped_ = 0;
  if (!mining) return batch;

  // Embeddings are cached per call; the network does not change within a
  // batch.
  std::unordered_map<std::size_t, Eigen::Index> column;
  Mat<float> cache;
  auto ensure = [&](const std::vector<std::size_t>& wanted) {
    std::vector<std::size_t> fresh;
    for (auto idx : wanted) {
      if (!column.count(idx)) {
        column.emplace(idx, cache.cols() + static_cast<Eigen::Index>(fresh.size()));
        fresh.push_back(idx);
      }
    }
    if (fresh.empty()) return;
    Mat<float> e = embed(fresh);
    if (e.cols() != static_cast<Eigen::Index>(fresh.size()) ||
        (cache.cols() > 0 && e.rows() != cache.rows())) {
      throw ValidationError("embedding function returned the wrong shape");
    }
    Mat<float> grown(e.rows(), cache.cols() + e.cols());
    grown << cache, e;
    cache = std::move(grown);
  };
  auto hinge = [&](const Triplet& t) {
    const auto a = cache.col(column.at(t.anchor));
    const auto p = cache.col(column.at(t.positive));
    const auto n = cache.col(column.at(t.negative));
    return static_cast<double>((a - p).squaredNorm()) - static_cast<double>((a - n).squaredNorm()) +
           cfg_.margin;
  };

  std::vector<std::size_t> wanted;
  for (const auto& t : batch) {
    wanted.push_back(t.anchor);
    wanted.push_back(t.positive);
    wanted.push_back(t.negative);
  }
  ensure(wanted);
  std::vector<std::size_t> pending;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (hinge(batch[s]) <= 0.0) pending.push_back(s);
  }
  for (std::size_t round = 0; round < cfg_.max_resamples && !pending.empty(); ++round) {
    wanted.clear();
    for (auto s : pending) {
      batch[s].negative = draw_negative(ds_->label(batch[s].anchor));
      wanted.push_back(batch[s].negative);
    }
    ensure(wanted);
    std::vector<std::size_t> still;
    for (auto s : pending) {
      if (hinge(batch[s]) <= 0.0) still.push_back(s);
    }
    pending = std::move(still);
  }
  last_capped_ = pending.size();
  return batch;
}

}  // namespace mlhash
