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

// Brute-force retrieval oracles shared by the unit and acceptance tests:
// full distance matrices, sorting on (distance, row) and a direct AP@k.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "mlhash/eval.hpp"
#include "mlhash/feature_store.hpp"
#include "mlhash/net.hpp"

namespace mlhash::testing {

// Reference AP@k, written independently of the library.
inline double reference_ap(const std::vector<std::uint32_t>& ranked, std::uint32_t q,
                           std::size_t k, std::size_t relevant) {
  if (relevant == 0) return 0.0;
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    if (ranked[i] == q) {
      ++hits;
      sum += double(hits) / double(i + 1);
    }
  }
  return sum / double(std::min(relevant, k));
}

inline std::vector<double> code_or_vector(Method m, const MethodModel& model,
                                          std::span<const float> row, std::size_t dim) {
  std::vector<double> out;
  switch (m) {
    case Method::kRawEuclidean:
      out.assign(row.begin(), row.end());
      break;
    case Method::kRawHamming:
      for (float v : row) out.push_back(v >= 0.5f ? 1.0 : 0.0);
      break;
    case Method::kLsh:
      for (std::size_t j = 0; j < model.lsh->bits(); ++j) {
        double dot = 0;
        const auto w = model.lsh->projection(j);
        for (std::size_t d = 0; d < dim; ++d) dot += w[d] * row[d];
        out.push_back(dot >= 0 ? 1.0 : 0.0);
      }
      break;
    case Method::kMilan:
    case Method::kMilanEuclidean: {
      const auto v = forward(*model.params, row).output();
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double x = v(i, 0);
        out.push_back(m == Method::kMilan ? (x >= 0.5 ? 1.0 : 0.0) : x);
      }
      break;
    }
  }
  return out;
}

// Full distance matrix, sort by (distance, row), reference AP.
inline std::vector<double> oracle_aps(Method m, const MethodModel& model,
                                      const LabeledDataset& queries,
                                      const LabeledDataset& archive, std::size_t k) {
  std::vector<std::vector<double>> enc;
  for (std::size_t i = 0; i < archive.size(); ++i) {
    enc.push_back(code_or_vector(m, model, archive.row(i), archive.dim()));
  }
  const bool hamming = m == Method::kMilan || m == Method::kRawHamming || m == Method::kLsh;
  std::vector<double> aps;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto q = code_or_vector(m, model, queries.row(qi), queries.dim());
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < enc.size(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double diff = q[j] - enc[i][j];
        s += hamming ? double(q[j] != enc[i][j]) : diff * diff;
      }
      d.emplace_back(s, i);
    }
    std::sort(d.begin(), d.end());
    std::vector<std::uint32_t> ranked;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < archive.size(); ++i) relevant += archive.label(i) == queries.label(qi);
    for (const auto& [dist, row] : d) ranked.push_back(archive.label(row));
    aps.push_back(reference_ap(ranked, queries.label(qi), k, relevant));
  }
  return aps;
}

}  // namespace mlhash::testing
