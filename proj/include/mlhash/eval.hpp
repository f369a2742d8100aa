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

// Retrieval evaluation: AP@k / mAP@k, the end-to-end experiment pipeline,
// parameter sweeps and search-latency benchmarks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlhash/feature_store.hpp"
#include "mlhash/hashing.hpp"
#include "mlhash/net.hpp"
#include "mlhash/trainer.hpp"

namespace mlhash {

enum class ApNormalization {
  kMinRelevantK,  // divide by min(R, k)
  kK,             // divide by k
};

// AP over the first k entries of `ranked_labels`:
//   (1 / norm) * sum_i precision@i * [label_i == query_label]
// where norm is min(R, k) (or k). Returns 0 when R == 0.
double average_precision_at_k(std::span<const std::uint32_t> ranked_labels,
                              std::uint32_t query_label, std::size_t k,
                              std::size_t relevant_total,
                              ApNormalization norm = ApNormalization::kMinRelevantK);

enum class Method {
  kMilan,           // learned hash codes, Hamming ranking
  kMilanEuclidean,  // learned embeddings before quantization, Euclidean ranking
  kLsh,             // sign random projections of raw features
  kRawEuclidean,    // exact Euclidean on raw features
  kRawHamming,      // raw features thresholded at 0.5, Hamming ranking
};

std::string_view to_string(Method m);
// Throws UsageError listing the valid names.
Method parse_method(std::string_view name);
std::string valid_method_names();

struct EvalReport {
  std::string method;
  std::size_t k = 0;
  std::size_t code_bits = 0;  // 0 for real-valued methods
  std::size_t query_count = 0;
  std::size_t archive_size = 0;
  std::string split;          // free-form description of the protocol
  std::vector<double> per_query_ap;
  double map = 0.0;
  double mean_latency_us = 0.0;  // search only, encoding excluded
  double total_wall_ms = 0.0;

  nlohmann::json to_json() const;
};

// What a method needs beyond the data: trained parameters for the learned
// methods, a hasher for LSH.
struct MethodModel {
  const NetworkParams* params = nullptr;
  const LshHasher* lsh = nullptr;
};

struct EvalOptions {
  std::size_t threads = 1;
  ApNormalization normalization = ApNormalization::kMinRelevantK;
  std::string split_description;
};

// Encodes the archive once, ranks it for every query and aggregates AP@k.
// Ranking ties break by archive row. Throws UsageError when the method's
// model is missing.
EvalReport evaluate(Method method, const MethodModel& model, const LabeledDataset& queries,
                    const LabeledDataset& archive, std::size_t k, const EvalOptions& opts = {});

// Per-query ranked archive labels (first min(k, N) entries) for a method;
// exposed for cross-checks.
std::vector<std::vector<std::uint32_t>> ranked_labels(Method method, const MethodModel& model,
                                                      const LabeledDataset& queries,
                                                      const LabeledDataset& archive,
                                                      std::size_t k, std::size_t threads = 1);

// Full protocol on one dataset: stratified split, training when the method
// needs it, evaluation of test queries against train + validation as archive.
struct ExperimentSetup {
  SplitSpec split;
  TrainConfig train;
  Method method = Method::kMilan;
  std::size_t k = 20;
  std::size_t threads = 1;
  std::uint64_t seed = 0;  // root seed; fanned out to split/init/miner/lsh
};

struct ExperimentOutcome {
  DatasetSplit split;
  LabeledDataset archive;
  std::optional<TrainResult> trained;
  std::optional<LshHasher> lsh;
  EvalReport report;
};

ExperimentOutcome run_experiment(const LabeledDataset& ds, const ExperimentSetup& setup);

// Re-evaluates an already-run experiment with another method or k.
EvalReport reevaluate(const ExperimentOutcome& outcome, Method method, std::size_t k,
                      std::size_t threads = 1);

enum class SweepAxis { kHashBits, kTrainFraction, kTopK };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kHashBits;
  std::vector<double> values;

  void validate() const;
};

// Parses "hash_bits=16,24,32".
SweepSpec parse_sweep(std::string_view text);

struct SweepRow {
  SweepAxis axis;
  double value = 0;
  double map = 0;
  double mean_latency_us = 0;
};

// One train + evaluate per value in ascending order; the top_k axis trains
// once and re-ranks. Failures are rethrown with the axis value attached.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const LabeledDataset& ds,
                                const ExperimentSetup& base);

// Header: axis,value,map,mean_latency_us
std::string sweep_csv(std::span<const SweepRow> rows);

enum class SearchKind { kHamming, kEuclidean };

struct LatencyStats {
  double mean_us = 0;
  double p50_us = 0;
  double p95_us = 0;
  std::size_t repetitions = 0;
};

// Times single top-k queries against a random archive of n items of the
// given width (bits for Hamming, dimensions for Euclidean). One warmup query
// is discarded. Single-threaded.
LatencyStats bench_latency(SearchKind kind, std::size_t n, std::size_t width,
                           std::size_t repetitions, std::size_t k = 20, std::uint64_t seed = 0);

}  // namespace mlhash
