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

#include "mlhash/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "mlhash/binary_io.hpp"
#include "mlhash/parallel.hpp"
#include "mlhash/rng.hpp"

namespace mlhash {

namespace {

constexpr std::string_view kCodeMagic = "HCOD1";

std::uint64_t pad_mask(std::size_t bits) {
  const std::size_t used = bits % 64;
  return used == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << used) - 1;
}

template <typename T>
HashCode threshold_impl(std::span<const T> v, T threshold) {
  if (v.empty()) throw ValidationError("cannot binarize an empty vector");
  HashCode code(v.size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (v[n] >= threshold) code.set(n, true);
  }
  return code;
}

}  // namespace

HashCode::HashCode(std::size_t bits) : bits_(bits), words_(words_for_bits(bits), 0) {
  if (bits == 0) throw ValidationError("hash codes need at least one bit");
}

HashCode::HashCode(std::size_t bits, std::vector<std::uint64_t> words)
    : bits_(bits), words_(std::move(words)) {
  if (bits == 0) throw ValidationError("hash codes need at least one bit");
  if (words_.size() != words_for_bits(bits)) {
    throw ValidationError("expected " + std::to_string(words_for_bits(bits)) + " words for " +
                          std::to_string(bits) + " bits, got " + std::to_string(words_.size()));
  }
  if (!pad_bits_clear(words_, bits)) throw ValidationError("pad bits beyond K must be zero");
}

void HashCode::set(std::size_t n, bool value) {
  if (n >= bits_) throw ValidationError("bit index out of range");
  const std::uint64_t m = std::uint64_t{1} << (n % 64);
  if (value) {
    words_[n / 64] |= m;
  } else {
    words_[n / 64] &= ~m;
  }
}

std::size_t HashCode::popcount() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool pad_bits_clear(std::span<const std::uint64_t> words, std::size_t bits) {
  if (words.size() != words_for_bits(bits)) return false;
  return words.empty() || (words.back() & ~pad_mask(bits)) == 0;
}

HashCode threshold_code(std::span<const float> v, float threshold) {
  return threshold_impl(v, threshold);
}

HashCode threshold_code(std::span<const double> v, double threshold) {
  return threshold_impl(v, threshold);
}

std::size_t hamming_distance(const HashCode& a, const HashCode& b) {
  if (a.bits() != b.bits()) {
    throw ValidationError("hamming distance between codes of " + std::to_string(a.bits()) +
                          " and " + std::to_string(b.bits()) + " bits");
  }
  const auto wa = a.words();
  const auto wb = b.words();
  std::size_t d = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return d;
}

HammingIndex::HammingIndex(std::size_t bits) : bits_(bits), words_per_code_(words_for_bits(bits)) {
  if (bits == 0) throw ValidationError("index codes need at least one bit");
}

void HammingIndex::add(std::uint64_t id, const HashCode& code) {
  if (!labels_.empty()) throw ValidationError("index was built with labels; add a label too");
  add_code(id, code);
}

void HammingIndex::add(std::uint64_t id, const HashCode& code, std::uint32_t label) {
  if (labels_.size() != ids_.size()) throw ValidationError("index was built without labels");
  add_code(id, code);
  labels_.push_back(label);
}

void HammingIndex::add_code(std::uint64_t id, const HashCode& code) {
  if (code.bits() != bits_) {
    throw ValidationError("code has " + std::to_string(code.bits()) + " bits, index expects " +
                          std::to_string(bits_));
  }
  if (ids_.size() >= std::numeric_limits<std::uint32_t>::max()) throw ValidationError("index is full");
  if (!id_set_.insert(id).second) throw ValidationError("duplicate id " + std::to_string(id));
  const auto pos = static_cast<std::uint32_t>(ids_.size());
  ids_.push_back(id);
  words_.insert(words_.end(), code.words().begin(), code.words().end());
  if (id_order_.empty() || ids_[id_order_.back()] < id) {
    id_order_.push_back(pos);
  } else {
    auto it = std::lower_bound(id_order_.begin(), id_order_.end(), id,
                               [&](std::uint32_t p, std::uint64_t v) { return ids_[p] < v; });
    id_order_.insert(it, pos);
  }
}

HashCode HammingIndex::code(std::size_t pos) const {
  if (pos >= size()) throw ValidationError("index position out of range");
  const auto* w = words_.data() + pos * words_per_code_;
  return HashCode(bits_, std::vector<std::uint64_t>(w, w + words_per_code_));
}

void HammingIndex::scan_distances(const HashCode& query, std::vector<std::uint32_t>& out) const {
  const std::size_t n = ids_.size();
  out.resize(n);
  const auto q = query.words();
  const std::uint64_t* w = words_.data();
  if (words_per_code_ == 1) {
    const std::uint64_t q0 = q[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint32_t>(std::popcount(w[i] ^ q0));
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t* c = w + i * words_per_code_;
    std::uint32_t d = 0;
    for (std::size_t j = 0; j < words_per_code_; ++j) d += static_cast<std::uint32_t>(std::popcount(c[j] ^ q[j]));
    out[i] = d;
  }
}

std::vector<HammingHit> HammingIndex::search_topk(const HashCode& query, std::size_t k) const {
  if (k == 0) throw ValidationError("top-k search needs k >= 1");
  if (query.bits() != bits_) {
    throw ValidationError("query has " + std::to_string(query.bits()) + " bits, index has " +
                          std::to_string(bits_));
  }
  if (empty()) throw ValidationError("search on an empty index");
  k = std::min(k, size());

  std::vector<std::uint32_t> dist;
  scan_distances(query, dist);

  // Distances are bounded by K, so a counting pass finds the cut-off
  // distance and the output slot of every kept item without sorting.
  std::vector<std::size_t> hist(bits_ + 2, 0);
  for (auto d : dist) ++hist[d];
  std::size_t cutoff = 0;
  std::size_t below = 0;  // items strictly closer than `cutoff`
  while (below + hist[cutoff] < k) below += hist[cutoff++];
  std::vector<std::size_t> slot(cutoff + 1, 0);
  for (std::size_t d = 1; d <= cutoff; ++d) slot[d] = slot[d - 1] + hist[d - 1];

  std::vector<HammingHit> hits(k);
  for (auto pos : id_order_) {
    const auto d = dist[pos];
    if (d > cutoff) continue;
    auto& s = slot[d];
    if (d == cutoff && s >= k) continue;
    hits[s++] = {ids_[pos], d};
  }
  return hits;
}

std::vector<std::vector<HammingHit>> HammingIndex::search_batch(std::span<const HashCode> queries,
                                                                std::size_t k,
                                                                std::size_t threads) const {
  std::vector<std::vector<HammingHit>> results(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) { results[i] = search_topk(queries[i], k); });
  return results;
}

void save_codes(const HammingIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  io::write_magic(out, kCodeMagic);
  io::write_le<std::uint64_t>(out, index.size());
  io::write_le<std::uint64_t>(out, index.bits());
  for (std::size_t i = 0; i < index.size(); ++i) {
    io::write_le<std::uint64_t>(out, index.ids()[i]);
    const auto code = index.code(i);
    for (auto w : code.words()) io::write_le<std::uint64_t>(out, w);
  }
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

HammingIndex load_codes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open code file " + path.string());
  io::expect_magic(in, kCodeMagic);
  const auto n = io::read_le<std::uint64_t>(in, "N");
  const auto k = io::read_le<std::uint64_t>(in, "K");
  if (k == 0) throw FormatError("code file declares K=0");
  const auto file_size = std::filesystem::file_size(path);
  const auto wpc = words_for_bits(k);
  if (k > file_size * 8 || n > file_size / (8 * (1 + wpc)) ||
      5 + 16 + n * 8 * (1 + wpc) != file_size) {
    throw FormatError("code file size does not match header (N=" + std::to_string(n) +
                      ", K=" + std::to_string(k) + ")");
  }
  HammingIndex index(k);
  std::vector<std::uint64_t> words(wpc);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto id = io::read_le<std::uint64_t>(in, "id");
    for (auto& w : words) w = io::read_le<std::uint64_t>(in, "code");
    if (!pad_bits_clear(words, k)) {
      throw FormatError("code for id " + std::to_string(id) + " has nonzero pad bits");
    }
    try {
      index.add(id, HashCode(k, words));
    } catch (const ValidationError& e) {
      throw FormatError(std::string("invalid code file: ") + e.what());
    }
  }
  io::expect_eof(in);
  return index;
}

LshHasher::LshHasher(std::size_t dim, std::size_t bits, std::uint64_t seed)
    : dim_(dim), bits_(bits), projections_(dim * bits) {
  if (dim == 0 || bits == 0) throw ValidationError("LSH needs positive dimension and bit count");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& w : projections_) w = normal(rng);
}

namespace {

template <typename T>
HashCode lsh_encode_impl(const LshHasher& h, std::span<const T> x) {
  if (x.size() != h.dim()) {
    throw ValidationError("LSH input has " + std::to_string(x.size()) + " features, expected " +
                          std::to_string(h.dim()));
  }
  HashCode code(h.bits());
  for (std::size_t j = 0; j < h.bits(); ++j) {
    const auto w = h.projection(j);
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += w[i] * static_cast<double>(x[i]);
    if (dot >= 0.0) code.set(j, true);
  }
  return code;
}

}  // namespace

HashCode LshHasher::encode(std::span<const float> x) const { return lsh_encode_impl(*this, x); }
HashCode LshHasher::encode(std::span<const double> x) const { return lsh_encode_impl(*this, x); }

std::vector<EuclideanHit> euclidean_topk(std::span<const float> archive, std::size_t dim,
                                         std::span<const float> query, std::size_t k) {
  if (k == 0) throw ValidationError("top-k search needs k >= 1");
  if (dim == 0 || query.size() != dim || archive.size() % dim != 0) {
    throw ValidationError("query dimension " + std::to_string(query.size()) +
                          " does not match archive dimension " + std::to_string(dim));
  }
  const std::size_t n = archive.size() / dim;
  if (n == 0) throw ValidationError("search on an empty archive");
  k = std::min(k, n);

  std::vector<std::pair<double, std::uint64_t>> scored(n);
  const float* q = query.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = archive.data() + i * dim;
    // Four independent partial sums in a fixed order.
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t j = 0;
    for (; j + 4 <= dim; j += 4) {
      const double d0 = double(r[j]) - q[j];
      const double d1 = double(r[j + 1]) - q[j + 1];
      const double d2 = double(r[j + 2]) - q[j + 2];
      const double d3 = double(r[j + 3]) - q[j + 3];
      s0 += d0 * d0;
      s1 += d1 * d1;
      s2 += d2 * d2;
      s3 += d3 * d3;
    }
    for (; j < dim; ++j) {
      const double d = double(r[j]) - q[j];
      s0 += d * d;
    }
    scored[i] = {(s0 + s1) + (s2 + s3), i};
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  std::vector<EuclideanHit> hits(k);
  for (std::size_t i = 0; i < k; ++i) hits[i] = {scored[i].second, std::sqrt(scored[i].first)};
  return hits;
}

}  // namespace mlhash
