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

#include "mlhash/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mlhash/error.hpp"
#include "mlhash/parallel.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

bool needs_network(Method m) { return m == Method::kMilan || m == Method::kMilanEuclidean; }

struct Rankings {
  std::vector<std::vector<std::uint32_t>> labels;
  std::vector<double> latency_us;
  std::size_t code_bits = 0;
};

std::vector<HashCode> encode_rows(const LabeledDataset& ds, auto&& encoder) {
  std::vector<HashCode> codes;
  codes.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) codes.push_back(encoder(ds.row(i)));
  return codes;
}

Rankings rank_hamming(const std::vector<HashCode>& archive_codes,
                      const std::vector<HashCode>& query_codes, const LabeledDataset& archive,
                      std::size_t k, std::size_t threads) {
  const HammingIndex index = build_index(archive_codes, {});
  Rankings r;
  r.code_bits = index.bits();
  r.labels.resize(query_codes.size());
  r.latency_us.resize(query_codes.size());
  parallel_for(query_codes.size(), threads, [&](std::size_t q) {
    const auto t0 = Clock::now();
    const auto hits = index.search_topk(query_codes[q], k);
    r.latency_us[q] = micros_since(t0);
    auto& out = r.labels[q];
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(archive.label(h.id));
  });
  return r;
}

Rankings rank_euclidean(std::span<const float> archive_rows, std::span<const float> query_rows,
                        std::size_t dim, const LabeledDataset& archive, std::size_t k,
                        std::size_t threads) {
  const std::size_t nq = query_rows.size() / dim;
  Rankings r;
  r.labels.resize(nq);
  r.latency_us.resize(nq);
  parallel_for(nq, threads, [&](std::size_t q) {
    const auto t0 = Clock::now();
    const auto hits = euclidean_topk(archive_rows, dim, query_rows.subspan(q * dim, dim), k);
    r.latency_us[q] = micros_since(t0);
    auto& out = r.labels[q];
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(archive.label(h.id));
  });
  return r;
}

Rankings rank(Method method, const MethodModel& model, const LabeledDataset& queries,
              const LabeledDataset& archive, std::size_t k, std::size_t threads) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (archive.empty()) throw ValidationError("evaluation archive is empty");
  if (queries.empty()) throw ValidationError("evaluation query set is empty");
  if (queries.dim() != archive.dim()) {
    throw ValidationError("query dimension " + std::to_string(queries.dim()) +
                          " differs from archive dimension " + std::to_string(archive.dim()));
  }
  if (needs_network(method) && model.params == nullptr) {
    throw UsageError("method '" + std::string(to_string(method)) + "' needs a trained model");
  }
  if (method == Method::kLsh && model.lsh == nullptr) {
    throw UsageError("method 'lsh' needs an LSH hasher");
  }
  switch (method) {
    case Method::kMilan:
      return rank_hamming(encode_dataset(*model.params, archive),
                          encode_dataset(*model.params, queries), archive, k, threads);
    case Method::kMilanEuclidean: {
      // Column-major K x N is row-major N x K.
      const Mat<float> a = embed_dataset(*model.params, archive);
      const Mat<float> q = embed_dataset(*model.params, queries);
      return rank_euclidean({a.data(), static_cast<std::size_t>(a.size())},
                            {q.data(), static_cast<std::size_t>(q.size())},
                            static_cast<std::size_t>(a.rows()), archive, k, threads);
    }
    case Method::kLsh: {
      auto enc = [&](std::span<const float> x) { return model.lsh->encode(x); };
      return rank_hamming(encode_rows(archive, enc), encode_rows(queries, enc), archive, k, threads);
    }
    case Method::kRawEuclidean:
      return rank_euclidean(archive.features(), queries.features(), archive.dim(), archive, k,
                            threads);
    case Method::kRawHamming: {
      auto enc = [](std::span<const float> x) { return baseline_binarize_raw(x); };
      return rank_hamming(encode_rows(archive, enc), encode_rows(queries, enc), archive, k, threads);
    }
  }
  throw ValidationError("unknown method");
}

}  // namespace

double average_precision_at_k(std::span<const std::uint32_t> ranked_labels,
                              std::uint32_t query_label, std::size_t k,
                              std::size_t relevant_total, ApNormalization norm) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (relevant_total == 0) return 0.0;
  const std::size_t depth = std::min(k, ranked_labels.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (ranked_labels[i] != query_label) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  const double denom = norm == ApNormalization::kMinRelevantK
                           ? static_cast<double>(std::min(relevant_total, k))
                           : static_cast<double>(k);
  return sum / denom;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kMilan: return "milan";
    case Method::kMilanEuclidean: return "milan-euclidean";
    case Method::kLsh: return "lsh";
    case Method::kRawEuclidean: return "raw-euclidean";
    case Method::kRawHamming: return "raw-hamming";
  }
  return "milan";
}

std::string valid_method_names() { return "milan, milan-euclidean, lsh, raw-euclidean, raw-hamming"; }

Method parse_method(std::string_view name) {
  for (auto m : {Method::kMilan, Method::kMilanEuclidean, Method::kLsh, Method::kRawEuclidean,
                 Method::kRawHamming}) {
    if (name == to_string(m)) return m;
  }
  throw UsageError("unknown method '" + std::string(name) + "'; valid methods: " +
                   valid_method_names());
}

nlohmann::json EvalReport::to_json() const {
  return {
      {"method", method},
      {"k", k},
      {"code_bits", code_bits},
      {"query_count", query_count},
      {"archive_size", archive_size},
      {"split", split},
      {"map", map},
      {"per_query_ap", per_query_ap},
      {"mean_latency_us", mean_latency_us},
      {"total_wall_ms", total_wall_ms},
  };
}

std::vector<std::vector<std::uint32_t>> ranked_labels(Method method, const MethodModel& model,
                                                      const LabeledDataset& queries,
                                                      const LabeledDataset& archive,
                                                      std::size_t k, std::size_t threads) {
  return rank(method, model, queries, archive, k, threads).labels;
}

EvalReport evaluate(Method method, const MethodModel& model, const LabeledDataset& queries,
                    const LabeledDataset& archive, std::size_t k, const EvalOptions& opts) {
  const auto t0 = Clock::now();
  const Rankings r = rank(method, model, queries, archive, k, opts.threads);
  const auto sizes = archive.class_sizes();

  EvalReport rep;
  rep.method = std::string(to_string(method));
  rep.k = k;
  rep.code_bits = r.code_bits;
  rep.query_count = queries.size();
  rep.archive_size = archive.size();
  rep.split = opts.split_description;
  rep.per_query_ap.resize(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto y = queries.label(q);
    const std::size_t relevant = y < sizes.size() ? sizes[y] : 0;
    rep.per_query_ap[q] = average_precision_at_k(r.labels[q], y, k, relevant, opts.normalization);
  }
  // Fixed-order sums keep the aggregate independent of thread count.
  rep.map = std::accumulate(rep.per_query_ap.begin(), rep.per_query_ap.end(), 0.0) /
            static_cast<double>(rep.per_query_ap.size());
  rep.mean_latency_us = std::accumulate(r.latency_us.begin(), r.latency_us.end(), 0.0) /
                        static_cast<double>(r.latency_us.size());
  rep.total_wall_ms = micros_since(t0) / 1000.0;
  return rep;
}

namespace {

std::string describe_split(const SplitSpec& s) {
  std::ostringstream out;
  out << "stratified train_fraction=" << s.train_fraction << " val_per_class=" << s.val_per_class
      << "; queries=test, archive=train+val";
  return out.str();
}

MethodModel model_of(const ExperimentOutcome& o) {
  MethodModel m;
  if (o.trained) m.params = &o.trained->params;
  if (o.lsh) m.lsh = &*o.lsh;
  return m;
}

}  // namespace

ExperimentOutcome run_experiment(const LabeledDataset& ds, const ExperimentSetup& setup) {
  ExperimentOutcome out;
  SplitSpec split = setup.split;
  split.seed = stream_seed(setup.seed, "split");
  out.split = stratified_split(ds, split);
  out.archive = out.split.val.empty() ? out.split.train : concat(out.split.train, out.split.val);

  if (needs_network(setup.method)) {
    TrainConfig cfg = setup.train;
    cfg.seed = setup.seed;
    out.trained = train(out.split.train, out.split.val, cfg);
  }
  if (setup.method == Method::kLsh) {
    out.lsh.emplace(ds.dim(), setup.train.hash_bits, stream_seed(setup.seed, "lsh"));
  }
  EvalOptions opts;
  opts.threads = setup.threads;
  opts.split_description = describe_split(split);
  out.report = evaluate(setup.method, model_of(out), out.split.test, out.archive, setup.k, opts);
  return out;
}

EvalReport reevaluate(const ExperimentOutcome& outcome, Method method, std::size_t k,
                      std::size_t threads) {
  EvalOptions opts;
  opts.threads = threads;
  opts.split_description = outcome.report.split;
  return evaluate(method, model_of(outcome), outcome.split.test, outcome.archive, k, opts);
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kHashBits: return "hash_bits";
    case SweepAxis::kTrainFraction: return "train_fraction";
    case SweepAxis::kTopK: return "top_k";
  }
  return "hash_bits";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "hash_bits") return SweepAxis::kHashBits;
  if (name == "train_fraction") return SweepAxis::kTrainFraction;
  if (name == "top_k") return SweepAxis::kTopK;
  throw UsageError("unknown sweep axis '" + std::string(name) +
                   "'; valid axes: hash_bits, train_fraction, top_k");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  for (double v : values) {
    const bool integral = std::floor(v) == v;
    if (axis == SweepAxis::kTrainFraction) {
      if (!(v > 0.0 && v < 1.0)) throw ValidationError("train_fraction values must lie in (0, 1)");
    } else if (!(v >= 1.0) || !integral) {
      throw ValidationError(std::string(to_string(axis)) + " values must be positive integers");
    }
  }
}

SweepSpec parse_sweep(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw UsageError("sweep must look like axis=v1,v2,...");
  SweepSpec spec;
  spec.axis = parse_sweep_axis(text.substr(0, eq));
  std::string_view rest = text.substr(eq + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item(rest.substr(0, comma));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("bad sweep value '" + item + "'");
    spec.values.push_back(v);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return spec;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const LabeledDataset& ds,
                                const ExperimentSetup& base) {
  spec.validate();
  std::vector<double> values = spec.values;
  std::sort(values.begin(), values.end());

  auto attach = [&](double v, const std::exception& e) {
    std::ostringstream msg;
    msg << "sweep " << to_string(spec.axis) << "=" << v << " failed: " << e.what();
    return Error(msg.str());
  };

  std::vector<SweepRow> rows;
  std::optional<ExperimentOutcome> shared;
  for (double v : values) {
    try {
      ExperimentSetup setup = base;
      EvalReport rep;
      switch (spec.axis) {
        case SweepAxis::kHashBits:
          setup.train.hash_bits = static_cast<std::size_t>(v);
          rep = run_experiment(ds, setup).report;
          break;
        case SweepAxis::kTrainFraction:
          setup.split.train_fraction = v;
          rep = run_experiment(ds, setup).report;
          break;
        case SweepAxis::kTopK:
          if (!shared) shared = run_experiment(ds, setup);
          rep = reevaluate(*shared, setup.method, static_cast<std::size_t>(v), setup.threads);
          break;
      }
      rows.push_back({spec.axis, v, rep.map, rep.mean_latency_us});
    } catch (const std::exception& e) {
      throw attach(v, e);
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "axis,value,map,mean_latency_us\n";
  for (const auto& r : rows) {
    out << to_string(r.axis) << ',' << r.value << ',' << r.map << ',' << r.mean_latency_us << '\n';
  }
  return out.str();
}

LatencyStats bench_latency(SearchKind kind, std::size_t n, std::size_t width,
                           std::size_t repetitions, std::size_t k, std::uint64_t seed) {
  if (n < 1) throw ValidationError("benchmark archive needs at least one item");
  if (repetitions < 10) throw ValidationError("benchmark needs at least 10 repetitions");
  if (width < 1) throw ValidationError("benchmark width must be positive");
  Rng rng(seed);
  std::vector<double> times;
  times.reserve(repetitions);

  if (kind == SearchKind::kHamming) {
    auto random_code = [&] {
      HashCode c(width);
      for (std::size_t b = 0; b < width; ++b) c.set(b, (rng() >> 17) & 1u);
      return c;
    };
    HammingIndex index(width);
    for (std::size_t i = 0; i < n; ++i) index.add(i, random_code());
    [[maybe_unused]] volatile std::uint32_t sink = 0;
    for (std::size_t r = 0; r <= repetitions; ++r) {
      const HashCode q = random_code();
      const auto t0 = Clock::now();
      const auto hits = index.search_topk(q, k);
      const double us = micros_since(t0);
      sink = hits.front().distance;
      if (r > 0) times.push_back(us);  // the first query is warmup
    }
  } else {
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    std::vector<float> archive(n * width);
    for (auto& x : archive) x = uni(rng);
    std::vector<float> q(width);
    [[maybe_unused]] volatile double sink = 0;
    for (std::size_t r = 0; r <= repetitions; ++r) {
      for (auto& x : q) x = uni(rng);
      const auto t0 = Clock::now();
      const auto hits = euclidean_topk(archive, width, q, k);
      const double us = micros_since(t0);
      sink = hits.front().distance;
      if (r > 0) times.push_back(us);
    }
  }

  LatencyStats s;
  s.repetitions = times.size();
  s.mean_us = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  std::sort(times.begin(), times.end());
  auto pct = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(times.size()))) - 1;
    return times[std::min(idx, times.size() - 1)];
  };
  s.p50_us = pct(0.50);
  s.p95_us = pct(0.95);
  return s;
}

}  // namespace mlhash
