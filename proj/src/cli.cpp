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

#include "mlhash/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mlhash/error.hpp"
#include "mlhash/eval.hpp"
#include "mlhash/feature_store.hpp"
#include "mlhash/hashing.hpp"
#include "mlhash/net.hpp"
#include "mlhash/rng.hpp"
#include "mlhash/trainer.hpp"

namespace mlhash {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool json_output = false;
  std::string config_path;
};

// Flags shared by the commands that split data and train.
struct ExperimentFlags {
  std::string data;
  double train_fraction = 0.6;
  std::size_t val_per_class = 20;
  bool unit_norm = false;
  TrainConfig train;
  std::string mining = "random";
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--data", f.data, "Feature file (FSTR1)")->required();
  cmd->add_option("--train-fraction", f.train_fraction, "Per-class fraction used for train+val");
  cmd->add_option("--val-per-class", f.val_per_class, "Validation samples carved from train per class");
  cmd->add_flag("--unit-norm", f.unit_norm, "Scale every feature vector to unit length first");
  cmd->add_option("--hash-bits", f.train.hash_bits, "Code length K");
  cmd->add_option("--alpha", f.train.weights.margin, "Triplet margin");
  cmd->add_option("--lambda1", f.train.weights.push, "Push loss weight");
  cmd->add_option("--lambda2", f.train.weights.balancing, "Balancing loss weight");
  cmd->add_option("--batch", f.train.batch_size, "Triplets per mini-batch (M)");
  cmd->add_option("--mining", f.mining, "random | margin-violating");
  cmd->add_option("--max-resamples", f.train.max_resamples, "Negative redraws per slot when mining");
  cmd->add_option("--lr", f.train.learning_rate, "Adam learning rate");
  cmd->add_option("--beta1", f.train.beta1, "Adam beta1");
  cmd->add_option("--beta2", f.train.beta2, "Adam beta2");
  cmd->add_option("--epochs", f.train.epochs, "Training epochs");
  cmd->add_option("--iterations", f.train.iterations_per_epoch, "Steps per epoch");
  cmd->add_option("--eval-every", f.train.eval_every, "Steps between validation passes");
  cmd->add_option("--val-k", f.train.val_k, "k for validation mAP");
  cmd->add_option("--log-every", f.train.log_every, "Steps between history rows");
}

// Applies a --config document, then re-applies any flag given explicitly on
// the command line so flags win over the file.
void resolve_experiment(CLI::App* cmd, ExperimentFlags& f, const GlobalOptions& g) {
  const ExperimentFlags from_flags = f;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw UsageError("cannot read config file " + g.config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
    json train_part = json::object();
    for (const auto& [key, value] : doc.items()) {
      if (key == "train_fraction") f.train_fraction = value.get<double>();
      else if (key == "val_per_class") f.val_per_class = value.get<std::size_t>();
      else if (key == "unit_norm") f.unit_norm = value.get<bool>();
      else if (key == "data") f.data = cmd->count("--data") ? f.data : value.get<std::string>();
      else if (key == "seed" || key == "threads") continue;
      else train_part[key] = value;
    }
    f.train = train_config_from_json(train_part);
    f.mining = std::string(to_string(f.train.mining));
    auto keep = [&](const char* flag, auto member) {
      if (cmd->count(flag)) f.*member = from_flags.*member;
    };
    keep("--train-fraction", &ExperimentFlags::train_fraction);
    keep("--val-per-class", &ExperimentFlags::val_per_class);
    keep("--mining", &ExperimentFlags::mining);
    if (cmd->count("--unit-norm")) f.unit_norm = true;
    auto keep_train = [&](const char* flag, auto member) {
      if (cmd->count(flag)) f.train.*member = from_flags.train.*member;
    };
    keep_train("--hash-bits", &TrainConfig::hash_bits);
    keep_train("--batch", &TrainConfig::batch_size);
    keep_train("--max-resamples", &TrainConfig::max_resamples);
    keep_train("--lr", &TrainConfig::learning_rate);
    keep_train("--beta1", &TrainConfig::beta1);
    keep_train("--beta2", &TrainConfig::beta2);
    keep_train("--epochs", &TrainConfig::epochs);
    keep_train("--iterations", &TrainConfig::iterations_per_epoch);
    keep_train("--eval-every", &TrainConfig::eval_every);
    keep_train("--val-k", &TrainConfig::val_k);
    keep_train("--log-every", &TrainConfig::log_every);
    if (cmd->count("--alpha")) f.train.weights.margin = from_flags.train.weights.margin;
    if (cmd->count("--lambda1")) f.train.weights.push = from_flags.train.weights.push;
    if (cmd->count("--lambda2")) f.train.weights.balancing = from_flags.train.weights.balancing;
  }
  try {
    f.train.mining = parse_mining_mode(f.mining);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  f.train.seed = g.seed;
  try {
    f.train.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

LabeledDataset load_features(const std::string& path, bool unit_norm) {
  auto ds = load_dataset(path);
  return unit_norm ? unit_normalized(ds) : ds;
}

ExperimentSetup make_setup(const ExperimentFlags& f, const GlobalOptions& g, Method method,
                           std::size_t k) {
  ExperimentSetup s;
  s.split.train_fraction = f.train_fraction;
  s.split.val_per_class = f.val_per_class;
  s.train = f.train;
  s.method = method;
  s.k = k;
  s.threads = g.threads;
  s.seed = g.seed;
  return s;
}

json resolved_config(const ExperimentFlags& f, const GlobalOptions& g) {
  json j = to_json(f.train);
  j["train_fraction"] = f.train_fraction;
  j["val_per_class"] = f.val_per_class;
  j["unit_norm"] = f.unit_norm;
  j["data"] = f.data;
  j["seed"] = g.seed;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// ---- gen-synth ------------------------------------------------------------

struct GenFlags {
  SyntheticSpec spec;
  std::string output;
};

int cmd_gen_synth(const GenFlags& f, const GlobalOptions& g, std::ostream& out) {
  SyntheticSpec spec = f.spec;
  spec.seed = stream_seed(g.seed, "synth");
  const auto ds = gen_synthetic(spec);
  save_dataset(ds, f.output);
  if (g.json_output) {
    out << json{{"path", f.output}, {"N", ds.size()}, {"D", ds.dim()}, {"C", ds.class_count()}}.dump()
        << '\n';
  } else {
    out << "wrote " << f.output << ": N=" << ds.size() << " D=" << ds.dim()
        << " C=" << ds.class_count() << '\n';
  }
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainFlags {
  ExperimentFlags exp;
  std::string out_dir = ".";
};

int cmd_train(CLI::App* cmd, TrainFlags& f, const GlobalOptions& g, std::ostream& out,
              std::ostream& err) {
  resolve_experiment(cmd, f.exp, g);
  const auto ds = load_features(f.exp.data, f.exp.unit_norm);
  SplitSpec split{f.exp.train_fraction, f.exp.val_per_class, stream_seed(g.seed, "split")};
  const auto parts = stratified_split(ds, split);

  const json config = resolved_config(f.exp, g);
  out << config.dump(2) << '\n';

  const auto result = train(parts.train, parts.val, f.exp.train, [&](const HistoryRow& row) {
    if (row.val_map && !g.json_output) {
      err << "step " << row.step << " loss " << row.total << " val_map@" << f.exp.train.val_k
          << " " << *row.val_map << '\n';
    }
  });

  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  save_checkpoint(result.params, dir / "model.bin");
  result.history.write_csv(dir / "history.csv");
  write_text(dir / "config.json", config.dump(2) + "\n");
  const auto archive = parts.val.empty() ? parts.train : concat(parts.train, parts.val);
  save_dataset(archive, dir / "archive.bin");
  save_dataset(parts.test, dir / "test.bin");

  if (g.json_output) {
    json summary{{"checkpoint", (dir / "model.bin").string()},
                 {"history", (dir / "history.csv").string()},
                 {"best_step", result.best_step},
                 {"hash_bits", result.params.output_dim()}};
    if (result.best_val_map) summary["best_val_map"] = *result.best_val_map;
    out << summary.dump() << '\n';
  } else {
    out << "checkpoint " << (dir / "model.bin").string() << " (best step " << result.best_step;
    if (result.best_val_map) out << ", val mAP " << *result.best_val_map;
    out << ")\n";
  }
  return kExitOk;
}

// ---- encode / index / query -------------------------------------------------

struct EncodeFlags {
  std::string model;
  std::string data;
  std::string output;
  bool unit_norm = false;
};

int cmd_encode(const EncodeFlags& f, const GlobalOptions& g, std::ostream& out) {
  const auto params = load_checkpoint(f.model);
  const auto ds = load_features(f.data, f.unit_norm);
  if (ds.dim() != params.input_dim()) {
    throw ValidationError("model expects D=" + std::to_string(params.input_dim()) +
                          " but " + f.data + " has D=" + std::to_string(ds.dim()));
  }
  const auto codes = encode_dataset(params, ds);
  const auto index = build_index(codes, {});
  save_codes(index, f.output);
  if (g.json_output) {
    out << json{{"path", f.output}, {"N", index.size()}, {"K", index.bits()}}.dump() << '\n';
  } else {
    out << "wrote " << f.output << ": N=" << index.size() << " K=" << index.bits() << '\n';
  }
  return kExitOk;
}

struct IndexFlags {
  std::string codes;
};

int cmd_index(const IndexFlags& f, const GlobalOptions& g, std::ostream& out) {
  const auto index = load_codes(f.codes);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < index.size(); ++i) ones += index.code(i).popcount();
  const double fraction = index.empty() ? 0.0
                                        : static_cast<double>(ones) /
                                              static_cast<double>(index.size() * index.bits());
  const std::size_t bytes = index.size() * index.words_per_code() * 8;
  if (g.json_output) {
    out << json{{"N", index.size()}, {"K", index.bits()}, {"words_per_code", index.words_per_code()},
                {"code_bytes", bytes}, {"ones_fraction", fraction}}
               .dump()
        << '\n';
  } else {
    out << "N=" << index.size() << " K=" << index.bits() << " words/code=" << index.words_per_code()
        << " code bytes=" << bytes << " ones fraction=" << fraction << '\n';
  }
  return kExitOk;
}

struct QueryFlags {
  std::string codes;
  std::string query_codes;
  std::string model;
  std::string data;
  std::size_t row = 0;
  std::size_t top_k = 20;
  bool unit_norm = false;
};

int cmd_query(const QueryFlags& f, const GlobalOptions& g, std::ostream& out) {
  const auto index = load_codes(f.codes);
  HashCode query;
  if (!f.query_codes.empty()) {
    const auto queries = load_codes(f.query_codes);
    if (f.row >= queries.size()) throw ValidationError("--row is past the end of the query code file");
    query = queries.code(f.row);
  } else {
    if (f.model.empty() || f.data.empty()) {
      throw UsageError("query needs --query-codes, or --model together with --data");
    }
    const auto params = load_checkpoint(f.model);
    const auto ds = load_features(f.data, f.unit_norm);
    if (f.row >= ds.size()) throw ValidationError("--row is past the end of the feature file");
    if (ds.dim() != params.input_dim()) {
      throw ValidationError("model expects D=" + std::to_string(params.input_dim()) +
                            " but the query file has D=" + std::to_string(ds.dim()));
    }
    const Mat<float> v = embed_rows(params, ds, std::vector<std::size_t>{f.row});
    query = binarize(std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
  }
  if (query.bits() != index.bits()) {
    throw ValidationError("query code has K=" + std::to_string(query.bits()) +
                          " but the archive has K=" + std::to_string(index.bits()));
  }
  const auto hits = index.search_topk(query, f.top_k);
  if (g.json_output) {
    json rows = json::array();
    for (std::size_t r = 0; r < hits.size(); ++r) {
      rows.push_back({{"rank", r + 1}, {"id", hits[r].id}, {"distance", hits[r].distance}});
    }
    out << rows.dump() << '\n';
  } else {
    out << "rank\tid\tdistance\n";
    for (std::size_t r = 0; r < hits.size(); ++r) {
      out << (r + 1) << '\t' << hits[r].id << '\t' << hits[r].distance << '\n';
    }
  }
  return kExitOk;
}

// ---- eval / bench -----------------------------------------------------------

struct EvalFlags {
  ExperimentFlags exp;
  std::string method = "milan";
  std::size_t k = 20;
  std::string model;
  std::string output;
};

int cmd_eval(CLI::App* cmd, EvalFlags& f, const GlobalOptions& g, std::ostream& out) {
  const Method method = parse_method(f.method);
  resolve_experiment(cmd, f.exp, g);
  const auto ds = load_features(f.exp.data, f.exp.unit_norm);
  const auto setup = make_setup(f.exp, g, method, f.k);

  EvalReport report;
  if (!f.model.empty()) {
    // Evaluate a saved checkpoint on the same split without retraining.
    const auto params = load_checkpoint(f.model);
    SplitSpec split = setup.split;
    split.seed = stream_seed(g.seed, "split");
    const auto parts = stratified_split(ds, split);
    const auto archive = parts.val.empty() ? parts.train : concat(parts.train, parts.val);
    std::optional<LshHasher> lsh;
    if (method == Method::kLsh) lsh.emplace(ds.dim(), f.exp.train.hash_bits, stream_seed(g.seed, "lsh"));
    MethodModel model{&params, lsh ? &*lsh : nullptr};
    EvalOptions opts;
    opts.threads = g.threads;
    opts.split_description = "checkpoint " + f.model + "; queries=test, archive=train+val";
    report = evaluate(method, model, parts.test, archive, f.k, opts);
  } else {
    report = run_experiment(ds, setup).report;
  }
  json doc = report.to_json();
  doc["config"] = resolved_config(f.exp, g);
  if (!f.output.empty()) write_text(f.output, doc.dump(2) + "\n");
  out << (g.json_output ? doc.dump() : doc.dump(2)) << '\n';
  return kExitOk;
}

struct BenchFlags {
  ExperimentFlags exp;
  std::string sweep;
  std::string method = "milan";
  std::size_t k = 20;
  std::size_t n = 100000;
  std::size_t width = 0;
  std::size_t repetitions = 100;
  std::string output;
};

int cmd_bench(CLI::App* cmd, BenchFlags& f, const GlobalOptions& g, std::ostream& out) {
  const Method method = parse_method(f.method);
  if (!f.sweep.empty()) {
    if (f.exp.data.empty()) throw UsageError("--sweep needs --data");
    const auto spec = parse_sweep(f.sweep);
    resolve_experiment(cmd, f.exp, g);
    const auto ds = load_features(f.exp.data, f.exp.unit_norm);
    const auto rows = run_sweep(spec, ds, make_setup(f.exp, g, method, f.k));
    const auto csv = sweep_csv(rows);
    if (!f.output.empty()) write_text(f.output, csv);
    out << csv;
    return kExitOk;
  }
  const bool euclid = method == Method::kRawEuclidean || method == Method::kMilanEuclidean;
  std::size_t width = f.width;
  if (width == 0) width = euclid ? 2048 : f.exp.train.hash_bits;
  const auto stats = bench_latency(euclid ? SearchKind::kEuclidean : SearchKind::kHamming, f.n,
                                   width, f.repetitions, f.k, stream_seed(g.seed, "bench"));
  if (g.json_output) {
    out << json{{"method", to_string(method)}, {"n", f.n}, {"width", width}, {"k", f.k},
                {"repetitions", stats.repetitions}, {"mean_us", stats.mean_us},
                {"p50_us", stats.p50_us}, {"p95_us", stats.p95_us}}
               .dump()
        << '\n';
  } else {
    out << "method,n,width,k,repetitions,mean_us,p50_us,p95_us\n"
        << to_string(method) << ',' << f.n << ',' << width << ',' << f.k << ','
        << stats.repetitions << ',' << stats.mean_us << ',' << stats.p50_us << ','
        << stats.p95_us << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metric-learning hashing: train binary codes and search them by Hamming distance",
               "mlhash"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Root seed for every random stream");
  app.add_option("--threads", g.threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--json", g.json_output, "Machine-readable JSON on stdout");
  app.add_option("--config", g.config_path, "JSON experiment config (flags override it)");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write a synthetic Gaussian-cluster feature file");
  gen_cmd->add_option("--classes", gen.spec.classes, "Number of classes");
  gen_cmd->add_option("--per-class", gen.spec.per_class, "Samples per class");
  gen_cmd->add_option("--dim", gen.spec.dim, "Feature dimension");
  gen_cmd->add_option("--spread", gen.spec.spread, "Per-coordinate noise sigma");
  gen_cmd->add_option("--separation", gen.spec.separation, "Radius of the class-mean sphere");
  gen_cmd->add_option("-o,--output", gen.output, "Output feature file")->required();

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "Split a feature file and train the hashing network");
  add_experiment_flags(train_cmd, tr.exp);
  train_cmd->add_option("--out-dir", tr.out_dir, "Directory for model.bin, history.csv, config.json");

  EncodeFlags enc;
  auto* encode_cmd = app.add_subcommand("encode", "Encode a feature file into a code file");
  encode_cmd->add_option("--model", enc.model, "Checkpoint")->required();
  encode_cmd->add_option("--data", enc.data, "Feature file")->required();
  encode_cmd->add_option("-o,--output", enc.output, "Output code file (HCOD1)")->required();
  encode_cmd->add_flag("--unit-norm", enc.unit_norm, "Scale features to unit length first");

  IndexFlags idx;
  auto* index_cmd = app.add_subcommand("index", "Load a code file and summarize the index");
  index_cmd->add_option("--codes", idx.codes, "Code file")->required();

  QueryFlags qf;
  auto* query_cmd = app.add_subcommand("query", "Top-k Hamming search; prints rank, id, distance");
  query_cmd->add_option("--codes", qf.codes, "Archive code file")->required();
  query_cmd->add_option("--query-codes", qf.query_codes, "Code file holding the query");
  query_cmd->add_option("--model", qf.model, "Checkpoint used to encode --data");
  query_cmd->add_option("--data", qf.data, "Feature file holding the query");
  query_cmd->add_option("--row", qf.row, "Row of the query file to use");
  query_cmd->add_option("--top-k", qf.top_k, "Results to return")->check(CLI::PositiveNumber);
  query_cmd->add_flag("--unit-norm", qf.unit_norm, "Scale features to unit length first");

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Run the split/train/evaluate protocol; prints a JSON report");
  add_experiment_flags(eval_cmd, ev.exp);
  eval_cmd->add_option("--method", ev.method, "One of: " + valid_method_names());
  eval_cmd->add_option("--k", ev.k, "mAP@k cut-off")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--model", ev.model, "Evaluate this checkpoint instead of training");
  eval_cmd->add_option("-o,--output", ev.output, "Also write the report here");

  BenchFlags bf;
  auto* bench_cmd = app.add_subcommand("bench", "Search latency benchmark or parameter sweep");
  add_experiment_flags(bench_cmd, bf.exp);
  bench_cmd->get_option("--data")->required(false);
  bench_cmd->add_option("--sweep", bf.sweep, "axis=v1,v2,... over hash_bits, train_fraction or top_k");
  bench_cmd->add_option("--method", bf.method, "One of: " + valid_method_names());
  bench_cmd->add_option("--k", bf.k, "Top-k")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--n", bf.n, "Archive size for the latency benchmark");
  bench_cmd->add_option("--width", bf.width, "Code bits or feature dimension (default K or 2048)");
  bench_cmd->add_option("--reps", bf.repetitions, "Timed queries (>= 10)");
  bench_cmd->add_option("-o,--output", bf.output, "Also write the sweep CSV here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_synth(gen, g, out);
    if (train_cmd->parsed()) return cmd_train(train_cmd, tr, g, out, err);
    if (encode_cmd->parsed()) return cmd_encode(enc, g, out);
    if (index_cmd->parsed()) return cmd_index(idx, g, out);
    if (query_cmd->parsed()) return cmd_query(qf, g, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_cmd, ev, g, out);
    if (bench_cmd->parsed()) return cmd_bench(bench_cmd, bf, g, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace mlhash
