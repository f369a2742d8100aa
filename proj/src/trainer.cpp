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

#include "mlhash/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mlhash/error.hpp"
#include "mlhash/eval.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

namespace {

constexpr Eigen::Index kEmbedChunk = 512;

Eigen::Map<const Mat<float>> as_matrix(const LabeledDataset& ds) {
  return {ds.features().data(), static_cast<Eigen::Index>(ds.dim()),
          static_cast<Eigen::Index>(ds.size())};
}

std::string_view to_string(RegularizerScope s) {
  return s == RegularizerScope::kAllSlots ? "all-slots" : "unique-images";
}

RegularizerScope parse_scope(std::string_view s) {
  if (s == "all-slots") return RegularizerScope::kAllSlots;
  if (s == "unique-images") return RegularizerScope::kUniqueImages;
  throw ValidationError("unknown regularizer scope '" + std::string(s) + "'");
}

}  // namespace

std::vector<std::size_t> TrainConfig::layer_dims(std::size_t input_dim) const {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden_layers.begin(), hidden_layers.end());
  dims.push_back(hash_bits);
  return dims;
}

void TrainConfig::validate() const {
  try {
    weights.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (max_resamples < 1) throw ConfigError("max_resamples must be at least 1");
  if (hash_bits < 1) throw ConfigError("hash_bits must be at least 1");
  for (auto h : hidden_layers) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(negative_slope > 0.0f)) throw ConfigError("negative slope must be positive");
  if (iterations_per_epoch < 1) throw ConfigError("iterations per epoch must be at least 1");
  if (eval_every < 1 || log_every < 1) throw ConfigError("eval_every and log_every must be at least 1");
  if (val_k < 1) throw ConfigError("val_k must be at least 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"alpha", cfg.weights.margin},
      {"lambda1", cfg.weights.push},
      {"lambda2", cfg.weights.balancing},
      {"triplets_per_batch", cfg.batch_size},
      {"mining", std::string(to_string(cfg.mining))},
      {"max_resamples", cfg.max_resamples},
      {"regularizer_scope", std::string(to_string(cfg.regularizer_scope))},
      {"learning_rate", cfg.learning_rate},
      {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},
      {"epsilon", cfg.epsilon},
      {"hash_bits", cfg.hash_bits},
      {"hidden_layers", cfg.hidden_layers},
      {"negative_slope", cfg.negative_slope},
      {"epochs", cfg.epochs},
      {"iterations_per_epoch", cfg.iterations_per_epoch},
      {"eval_every", cfg.eval_every},
      {"val_k", cfg.val_k},
      {"log_every", cfg.log_every},
      {"seed", cfg.seed},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") cfg.weights.margin = value.get<double>();
      else if (key == "lambda1") cfg.weights.push = value.get<double>();
      else if (key == "lambda2") cfg.weights.balancing = value.get<double>();
      else if (key == "triplets_per_batch") cfg.batch_size = value.get<std::size_t>();
      else if (key == "mining") cfg.mining = parse_mining_mode(value.get<std::string>());
      else if (key == "max_resamples") cfg.max_resamples = value.get<std::size_t>();
      else if (key == "regularizer_scope") cfg.regularizer_scope = parse_scope(value.get<std::string>());
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "beta1") cfg.beta1 = value.get<double>();
      else if (key == "beta2") cfg.beta2 = value.get<double>();
      else if (key == "epsilon") cfg.epsilon = value.get<double>();
      else if (key == "hash_bits") cfg.hash_bits = value.get<std::size_t>();
      else if (key == "hidden_layers") cfg.hidden_layers = value.get<std::vector<std::size_t>>();
      else if (key == "negative_slope") cfg.negative_slope = value.get<float>();
      else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "iterations_per_epoch") cfg.iterations_per_epoch = value.get<std::size_t>();
      else if (key == "eval_every") cfg.eval_every = value.get<std::size_t>();
      else if (key == "val_k") cfg.val_k = value.get<std::size_t>();
      else if (key == "log_every") cfg.log_every = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  // Round-trippable doubles so equal histories give equal files.
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "step,total,metric,push,balancing,val_map\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.total << ',' << r.metric << ',' << r.push << ',' << r.balancing << ',';
    if (r.val_map) out << *r.val_map;
    out << '\n';
  }
  return out.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv();
  if (!out) throw IoError("write failed for " + path.string());
}

Mat<float> embed_rows(const NetworkParams& params, const LabeledDataset& ds,
                      std::span<const std::size_t> rows) {
  Mat<float> x(static_cast<Eigen::Index>(ds.dim()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto r = ds.row(rows[j]);
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vec<float>>(r.data(), static_cast<Eigen::Index>(r.size()));
  }
  return forward(params, x).output();
}

Mat<float> embed_dataset(const NetworkParams& params, const LabeledDataset& ds) {
  const auto all = as_matrix(ds);
  Mat<float> out(static_cast<Eigen::Index>(params.output_dim()), all.cols());
  for (Eigen::Index start = 0; start < all.cols(); start += kEmbedChunk) {
    const Eigen::Index n = std::min(kEmbedChunk, all.cols() - start);
    out.middleCols(start, n) = forward(params, all.middleCols(start, n)).output();
  }
  return out;
}

std::vector<HashCode> encode_dataset(const NetworkParams& params, const LabeledDataset& ds) {
  const Mat<float> v = embed_dataset(params, ds);
  std::vector<HashCode> codes;
  codes.reserve(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index i = 0; i < v.cols(); ++i) {
    codes.push_back(binarize(std::span<const float>(v.col(i).data(), static_cast<std::size_t>(v.rows()))));
  }
  return codes;
}

HammingIndex build_index(std::span<const HashCode> codes, std::span<const std::uint32_t> labels) {
  if (codes.empty()) throw ValidationError("cannot index an empty archive");
  if (!labels.empty() && labels.size() != codes.size()) {
    throw ValidationError("label count does not match code count");
  }
  HammingIndex index(codes.front().bits());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (labels.empty()) {
      index.add(i, codes[i]);
    } else {
      index.add(i, codes[i], labels[i]);
    }
  }
  return index;
}

double validate(const NetworkParams& params, const LabeledDataset& queries,
                const LabeledDataset& archive, std::size_t k) {
  if (archive.empty()) throw ValidationError("validation archive is empty");
  if (queries.empty()) throw ValidationError("validation query set is empty");
  MethodModel model;
  model.params = &params;
  return evaluate(Method::kMilan, model, queries, archive, k).map;
}

CombinedLossResult<float> evaluate_objective(const NetworkParams& params, const LabeledDataset& ds,
                                             std::span<const Triplet> triplets,
                                             const LossWeights& weights) {
  const auto m = static_cast<Eigen::Index>(triplets.size());
  std::vector<std::size_t> rows;
  rows.reserve(3 * triplets.size());
  for (const auto& t : triplets) rows.push_back(t.anchor);
  for (const auto& t : triplets) rows.push_back(t.positive);
  for (const auto& t : triplets) rows.push_back(t.negative);
  const Mat<float> v = embed_rows(params, ds, rows);
  TripletBatch<float> batch{v.leftCols(m), v.middleCols(m, m), v.rightCols(m)};
  return combined_loss(batch, weights);
}

TrainResult train(const LabeledDataset& train_ds, const LabeledDataset& val, const TrainConfig& cfg,
                  const TrainObserver& observer) {
  cfg.validate();
  auto params = init_params<float>(cfg.layer_dims(train_ds.dim()), stream_seed(cfg.seed, "init"),
                                   cfg.negative_slope);
  return train_from(std::move(params), train_ds, val, cfg, observer);
}

TrainResult train_from(NetworkParams params, const LabeledDataset& train_ds,
                       const LabeledDataset& val, const TrainConfig& cfg,
                       const TrainObserver& observer) {
  cfg.validate();
  if (train_ds.empty()) throw ValidationError("training set is empty");
  if (params.input_dim() != train_ds.dim()) {
    throw ValidationError("network expects D=" + std::to_string(params.input_dim()) +
                          " but training data has D=" + std::to_string(train_ds.dim()));
  }
  if (params.output_dim() != cfg.hash_bits) {
    throw ValidationError("network emits K=" + std::to_string(params.output_dim()) +
                          " but config asks for K=" + std::to_string(cfg.hash_bits));
  }
  const bool has_val = !val.empty();
  if (has_val && val.dim() != train_ds.dim()) {
    throw ValidationError("validation data dimension differs from training data");
  }

  MinerConfig mcfg;
  mcfg.batch_size = cfg.batch_size;
  mcfg.mode = cfg.mining;
  mcfg.max_resamples = cfg.max_resamples;
  mcfg.margin = cfg.weights.margin;
  mcfg.seed = stream_seed(cfg.seed, "miner");
  TripletMiner miner(train_ds, mcfg);
  auto adam = make_adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  TrainResult result;
  result.params = params;
  const std::size_t total = cfg.total_steps();
  const auto m = static_cast<Eigen::Index>(cfg.batch_size);
  const EmbedFn embed = [&](std::span<const std::size_t> rows) {
    return embed_rows(params, train_ds, rows);
  };

  std::vector<std::size_t> rows(3 * cfg.batch_size);
  Mat<float> x(static_cast<Eigen::Index>(train_ds.dim()), 3 * m);
  Mat<float> grad;
  ForwardTrace<float> trace;
  BackwardResult<float> back;
  for (std::size_t step = 1; step <= total; ++step) {
    const auto triplets = miner.sample_batch(embed);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      rows[i] = triplets[i].anchor;
      rows[cfg.batch_size + i] = triplets[i].positive;
      rows[2 * cfg.batch_size + i] = triplets[i].negative;
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto r = train_ds.row(rows[j]);
      x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vec<float>>(r.data(), static_cast<Eigen::Index>(r.size()));
    }
    forward_into(params, x, trace);
    const auto& v = trace.output();
    const TripletBatch<float> batch{v.leftCols(m), v.middleCols(m, m), v.rightCols(m)};
    const auto loss = cfg.regularizer_scope == RegularizerScope::kUniqueImages
                          ? combined_loss(batch, cfg.weights, rows)
                          : combined_loss(batch, cfg.weights);
    if (!std::isfinite(loss.total)) {
      throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
    }
    grad.resize(v.rows(), v.cols());
    grad << loss.grad_anchors, loss.grad_positives, loss.grad_negatives;
    backward_into(params, trace, grad, back);
    try {
      adam_step(adam, params, back.param_grads);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    const bool eval_now = has_val && (step % cfg.eval_every == 0 || step == total);
    if (step % cfg.log_every != 0 && !eval_now && step != total) continue;
    HistoryRow row{step, loss.total, loss.metric, loss.push, loss.balancing, std::nullopt};
    if (eval_now) {
      const double map = validate(params, val, train_ds, cfg.val_k);
      row.val_map = map;
      if (!result.best_val_map || map >= *result.best_val_map) {
        result.best_val_map = map;
        result.best_step = step;
        result.params = params;
      }
    }
    result.history.rows.push_back(row);
    if (observer) observer(row);
  }
  if (!has_val && total > 0) {
    result.params = params;
    result.best_step = total;
  }
  return result;
}

}  // namespace mlhash
