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

// Binary codes and exhaustive Hamming search, plus the comparison hashers:
// thresholded raw features, sign-random-projection LSH and exact Euclidean
// search.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_set>
#include <vector>

#include "mlhash/error.hpp"

namespace mlhash {

// K bits packed into 64-bit words, bit n at word n / 64, position n % 64.
// Bits at positions >= K are always zero.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t bits);
  // Adopts packed words; throws ValidationError if sizes or pad bits are wrong.
  HashCode(std::size_t bits, std::vector<std::uint64_t> words);

  std::size_t bits() const { return bits_; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool get(std::size_t n) const { return (words_[n / 64] >> (n % 64)) & 1u; }
  void set(std::size_t n, bool value);
  std::size_t popcount() const;

  friend bool operator==(const HashCode&, const HashCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

inline std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

// True iff every bit position >= bits is zero in the packed words.
bool pad_bits_clear(std::span<const std::uint64_t> words, std::size_t bits);

// bit n = 1 iff v[n] >= threshold (a value exactly at the threshold maps to 1).
HashCode threshold_code(std::span<const float> v, float threshold = 0.5f);
HashCode threshold_code(std::span<const double> v, double threshold = 0.5);

// Quantizes a sigmoid embedding at 0.5.
inline HashCode binarize(std::span<const float> v) { return threshold_code(v, 0.5f); }
inline HashCode binarize(std::span<const double> v) { return threshold_code(v, 0.5); }

// The same 0.5 rule applied directly to raw descriptors (K = D).
inline HashCode baseline_binarize_raw(std::span<const float> g) { return threshold_code(g, 0.5f); }

std::size_t hamming_distance(const HashCode& a, const HashCode& b);

struct HammingHit {
  std::uint64_t id = 0;
  std::uint32_t distance = 0;
  friend bool operator==(const HammingHit&, const HammingHit&) = default;
};

struct EuclideanHit {
  std::uint64_t id = 0;
  double distance = 0.0;
  friend bool operator==(const EuclideanHit&, const EuclideanHit&) = default;
};

// Immutable-after-build archive of equal-length codes searched by linear
// scan. Results are ordered by (distance, id).
class HammingIndex {
 public:
  explicit HammingIndex(std::size_t bits);

  void add(std::uint64_t id, const HashCode& code);
  void add(std::uint64_t id, const HashCode& code, std::uint32_t label);

  std::size_t size() const { return ids_.size(); }
  std::size_t bits() const { return bits_; }
  bool empty() const { return ids_.empty(); }
  std::size_t words_per_code() const { return words_per_code_; }
  std::span<const std::uint64_t> ids() const { return ids_; }
  bool has_labels() const { return !ids_.empty() && labels_.size() == ids_.size(); }
  std::span<const std::uint32_t> labels() const { return labels_; }
  HashCode code(std::size_t pos) const;

  // The k nearest codes (all of them if k > size()).
  std::vector<HammingHit> search_topk(const HashCode& query, std::size_t k) const;

  // Runs every query, fanning out over `threads` workers; result i belongs
  // to queries[i].
  std::vector<std::vector<HammingHit>> search_batch(std::span<const HashCode> queries,
                                                    std::size_t k, std::size_t threads = 1) const;

  friend bool operator==(const HammingIndex& a, const HammingIndex& b) {
    return a.bits_ == b.bits_ && a.ids_ == b.ids_ && a.words_ == b.words_;
  }

 private:
  void add_code(std::uint64_t id, const HashCode& code);
  void scan_distances(const HashCode& query, std::vector<std::uint32_t>& out) const;

  std::size_t bits_;
  std::size_t words_per_code_;
  std::vector<std::uint64_t> ids_;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint32_t> labels_;
  std::unordered_set<std::uint64_t> id_set_;
  // Positions sorted by id, so a scan in this order visits ties by id.
  std::vector<std::uint32_t> id_order_;
};

// Code file: "HCOD1" | N u64 | K u64 | N x (id u64 | ceil(K/64) u64 words).
void save_codes(const HammingIndex& index, const std::filesystem::path& path);
HammingIndex load_codes(const std::filesystem::path& path);

// n hyperplanes drawn from a standard Gaussian; bit j is 1 iff w_j . x >= 0.
class LshHasher {
 public:
  LshHasher(std::size_t dim, std::size_t bits, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::size_t bits() const { return bits_; }
  std::span<const double> projection(std::size_t j) const {
    return {projections_.data() + j * dim_, dim_};
  }

  HashCode encode(std::span<const float> x) const;
  HashCode encode(std::span<const double> x) const;

 private:
  std::size_t dim_;
  std::size_t bits_;
  std::vector<double> projections_;  // bits x dim, row-major
};

inline HashCode lsh_encode(const LshHasher& h, std::span<const float> x) { return h.encode(x); }

// Exact Euclidean k-NN over a row-major archive (row index = id).
std::vector<EuclideanHit> euclidean_topk(std::span<const float> archive, std::size_t dim,
                                         std::span<const float> query, std::size_t k);

}  // namespace mlhash
