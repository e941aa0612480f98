// attnback/cosine.hpp

// Copyright 2026  attnback authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>

#include "attnback/error.hpp"
#include "attnback/numerics.hpp"

namespace attnback {

inline double CosineScore(const Vector &e_i, const Vector &e_j) {
  ATTNBACK_CHECK(e_i.size() == e_j.size(), "cosine: dims differ (", e_i.size(), " vs ",
                 e_j.size(), ")");
  const double ni = e_i.norm(), nj = e_j.norm();
  ATTNBACK_CHECK(ni > 0.0 && nj > 0.0, "cosine: zero-norm embedding");
  return e_i.dot(e_j) / (ni * nj);
}

enum class EnrollAggregation {
  kMean,
  /// The single embedding was extracted from concatenated enrollment audio
  /// upstream; it is passed through.
  kConcatFeatures,
};

inline Vector AggregateEnrollment(std::span<const Vector> embeds, EnrollAggregation mode) {
  ATTNBACK_CHECK(!embeds.empty(), "empty enrollment list");
  if (mode == EnrollAggregation::kConcatFeatures) {
    ATTNBACK_CHECK(embeds.size() == 1,
                   "concat aggregation expects one precomputed embedding, got ", embeds.size());
    return embeds.front();
  }
  Vector sum = Vector::Zero(embeds.front().size());
  for (const Vector &e : embeds) {
    ATTNBACK_CHECK(e.size() == sum.size(), "enrollment dims differ (", e.size(), " vs ",
                   sum.size(), ")");
    sum += e;
  }
  return sum / static_cast<double>(embeds.size());
}

}  // namespace attnback
