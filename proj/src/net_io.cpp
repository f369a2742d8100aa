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

#include <fstream>
#include <string>

#include "mlhash/binary_io.hpp"
#include "mlhash/net.hpp"

namespace mlhash {

namespace {

constexpr std::string_view kMagic = "MILN1";
// Sanity cap on any single layer dimension read from a checkpoint.
constexpr std::uint64_t kMaxLayerDim = 1u << 24;

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
  if (params.layers.empty()) throw ValidationError("cannot save an empty network");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  io::write_magic(out, kMagic);
  io::write_le<std::uint64_t>(out, params.layers.size());
  for (const auto& layer : params.layers) {
    io::write_le<std::uint64_t>(out, layer.out_dim());
    io::write_le<std::uint64_t>(out, layer.in_dim());
    // Eigen is column-major; the file is row-major.
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = layer.weights;
    io::write_f32_array(out, {rm.data(), static_cast<std::size_t>(rm.size())});
    io::write_f32_array(out, {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
  }
  io::write_le<std::uint64_t>(out, params.output_dim());
  io::write_le<std::uint64_t>(out, params.input_dim());
  io::write_le<float>(out, params.negative_slope);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  io::expect_magic(in, kMagic);
  const auto file_size = std::filesystem::file_size(path);
  const auto count = io::read_le<std::uint64_t>(in, "layer count");
  if (count == 0 || count > 64) throw FormatError("implausible layer count " + std::to_string(count));

  NetworkParams params;
  for (std::uint64_t l = 0; l < count; ++l) {
    const auto out_dim = io::read_le<std::uint64_t>(in, "layer rows");
    const auto in_dim = io::read_le<std::uint64_t>(in, "layer cols");
    if (out_dim == 0 || in_dim == 0 || out_dim > kMaxLayerDim || in_dim > kMaxLayerDim) {
      throw FormatError("implausible layer shape in layer " + std::to_string(l));
    }
    if (out_dim * in_dim * 4 > file_size) {
      throw FormatError("layer " + std::to_string(l) + " is larger than the checkpoint file");
    }
    if (!params.layers.empty() && params.layers.back().out_dim() != in_dim) {
      throw FormatError("layer " + std::to_string(l) + " does not chain with its predecessor");
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
    io::read_f32_array(in, {rm.data(), static_cast<std::size_t>(rm.size())}, "weights");
    DenseLayer<float> layer;
    layer.weights = rm;
    layer.bias.resize(static_cast<Eigen::Index>(out_dim));
    io::read_f32_array(in, {layer.bias.data(), static_cast<std::size_t>(out_dim)}, "bias");
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw FormatError("non-finite parameter in layer " + std::to_string(l));
    }
    params.layers.push_back(std::move(layer));
  }
  const auto k = io::read_le<std::uint64_t>(in, "K");
  const auto d = io::read_le<std::uint64_t>(in, "D");
  params.negative_slope = io::read_le<float>(in, "negative slope");
  io::expect_eof(in);
  if (k != params.output_dim() || d != params.input_dim()) {
    throw FormatError("checkpoint metadata (K=" + std::to_string(k) + ", D=" + std::to_string(d) +
                      ") disagrees with layer shapes");
  }
  return params;
}

}  // namespace mlhash
