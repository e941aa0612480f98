// attnback/objectives.hpp

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

// Training objectives over a balanced batch.  Both losses are sums over
// cells, not means; callers that want per-pair scale divide themselves.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "attnback/error.hpp"

namespace attnback {

/// Probabilities P(q_lm, h_nm) for test speaker l, held-out index m and
/// enrollment speaker n.  Cell (l, m, n) is a target trial iff l == n.
class BatchScores {
 public:
  BatchScores(int num_speakers, int utts_per_speaker)
      : m_(num_speakers), k_(utts_per_speaker),
        p_(static_cast<std::size_t>(num_speakers) * utts_per_speaker * num_speakers, 0.5) {
    ATTNBACK_CHECK(num_speakers >= 1 && utts_per_speaker >= 1,
                   "BatchScores: need M >= 1 and K >= 1");
  }

  int num_speakers() const { return m_; }
  int utts_per_speaker() const { return k_; }
  std::size_t size() const { return p_.size(); }

  std::size_t Index(int l, int m, int n) const {
    return (static_cast<std::size_t>(l) * k_ + m) * m_ + n;
  }
  double &at(int l, int m, int n) { return p_[Index(l, m, n)]; }
  double at(int l, int m, int n) const { return p_[Index(l, m, n)]; }

  std::vector<double> &values() { return p_; }
  const std::vector<double> &values() const { return p_; }

 private:
  int m_, k_;
  std::vector<double> p_;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // dL/dP, BatchScores layout
};

inline constexpr double kProbClip = 1e-12;

inline double ClipProbability(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

inline LossResult BceLoss(const BatchScores &batch) {
  LossResult r;
  r.grad.assign(batch.size(), 0.0);
  const int M = batch.num_speakers(), K = batch.utts_per_speaker();
  for (int l = 0; l < M; ++l) {
    for (int m = 0; m < K; ++m) {
      for (int n = 0; n < M; ++n) {
        const std::size_t i = batch.Index(l, m, n);
        const double raw = batch.values()[i];
        const double p = ClipProbability(raw);
        const bool clipped = p != raw;
        if (l == n) {
          r.value -= std::log(p);
          r.grad[i] = clipped ? 0.0 : -1.0 / p;
        } else {
          r.value -= std::log1p(-p);
          r.grad[i] = clipped ? 0.0 : 1.0 / (1.0 - p);
        }
      }
    }
  }
  return r;
}

/// Softmax over enrollment speakers of the raw probabilities, per (l, m)
/// row; the target column is n == l.
inline LossResult Ge2eLoss(const BatchScores &batch) {
  LossResult r;
  r.grad.assign(batch.size(), 0.0);
  const int M = batch.num_speakers(), K = batch.utts_per_speaker();
  std::vector<double> row(M);
  for (int l = 0; l < M; ++l) {
    for (int m = 0; m < K; ++m) {
      double mx = -INFINITY;
      for (int n = 0; n < M; ++n) {
        row[n] = ClipProbability(batch.at(l, m, n));
        mx = std::max(mx, row[n]);
      }
      double sum = 0.0;
      for (int n = 0; n < M; ++n) sum += std::exp(row[n] - mx);
      const double log_norm = mx + std::log(sum);
      r.value += log_norm - row[l];
      for (int n = 0; n < M; ++n) {
        const double softmax = std::exp(row[n] - log_norm);
        r.grad[batch.Index(l, m, n)] = softmax - (n == l ? 1.0 : 0.0);
      }
    }
  }
  return r;
}

struct LossValue {
  double total = 0.0;
  double bce = 0.0;
  double ge2e = 0.0;
  double lambda = 0.0;
};

struct CombinedLoss {
  LossValue value;
  std::vector<double> grad;
};

inline constexpr double kDefaultLossWeight = 0.6;

/// total = lambda * ge2e + (1 - lambda) * bce.
inline CombinedLoss CombinedLossFn(const BatchScores &batch, double lambda = kDefaultLossWeight) {
  ATTNBACK_CHECK(lambda >= 0.0 && lambda <= 1.0, "loss weight lambda must be in [0, 1], got ",
                 lambda);
  LossResult bce = BceLoss(batch);
  LossResult ge2e = Ge2eLoss(batch);
  CombinedLoss out;
  out.value.bce = bce.value;
  out.value.ge2e = ge2e.value;
  out.value.lambda = lambda;
  out.value.total = lambda * ge2e.value + (1.0 - lambda) * bce.value;
  out.grad.resize(batch.size());
  for (std::size_t i = 0; i < out.grad.size(); ++i)
    out.grad[i] = lambda * ge2e.grad[i] + (1.0 - lambda) * bce.grad[i];
  return out;
}

}  // namespace attnback
