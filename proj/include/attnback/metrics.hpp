// attnback/metrics.hpp

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

/**
   Detection metrics.

   A trial is accepted when score >= threshold.  For a threshold t,
      P_miss(t) = #{target scores < t} / #targets
      P_fa(t)   = #{nontarget scores >= t} / #nontargets.
   Candidate thresholds are the distinct scores in increasing order followed
   by +inf (reject everything), so the operating points run from
   (P_miss, P_fa) = (0, 1) to (1, 0).

   EER is read where P_miss - P_fa changes sign, interpolating linearly
   between the two neighbouring operating points when they do not meet
   exactly.  minDCF is normalized by min(c_miss p, c_fa (1 - p)).
*/

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/error.hpp"
#include "attnback/trials.hpp"

namespace attnback {

struct ScoreRecord {
  std::string trial_id;
  double score = 0.0;
  std::optional<TrialLabel> label;

  bool operator==(const ScoreRecord &) const = default;
};

using ScoreSet = std::vector<ScoreRecord>;

struct OperatingPoint {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void Validate() const {
    ATTNBACK_CHECK(p_target > 0.0 && p_target < 1.0, "p_target must be in (0, 1), got ", p_target);
    ATTNBACK_CHECK(c_miss > 0.0 && c_fa > 0.0, "detection costs must be positive");
  }
};

struct ErrorRatePoint {
  double threshold;
  double p_miss;
  double p_fa;
};

/// Operating points at every distinct threshold plus +inf, in threshold order.
inline std::vector<ErrorRatePoint> ErrorRateCurve(const ScoreSet &scores) {
  std::vector<double> tgt, non;
  for (const ScoreRecord &r : scores) {
    ATTNBACK_CHECK(r.label.has_value(), "score record ", r.trial_id, " has no label");
    ATTNBACK_CHECK(std::isfinite(r.score), "score record ", r.trial_id, " is not finite");
    (*r.label == TrialLabel::kTarget ? tgt : non).push_back(r.score);
  }
  ATTNBACK_CHECK(!tgt.empty() && !non.empty(), "need at least one target and one nontarget (have ",
                 tgt.size(), " and ", non.size(), ")");
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  thresholds.reserve(tgt.size() + non.size());
  std::merge(tgt.begin(), tgt.end(), non.begin(), non.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nt = static_cast<double>(tgt.size()), nn = static_cast<double>(non.size());
  std::vector<ErrorRatePoint> curve;
  curve.reserve(thresholds.size() + 1);
  std::size_t ti = 0, ni = 0;  // counts strictly below the current threshold
  for (double t : thresholds) {
    while (ti < tgt.size() && tgt[ti] < t) ++ti;
    while (ni < non.size() && non[ni] < t) ++ni;
    curve.push_back({t, static_cast<double>(ti) / nt, static_cast<double>(non.size() - ni) / nn});
  }
  curve.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  return curve;
}

struct EerResult {
  double eer;
  double threshold;
};

inline EerResult Eer(const ScoreSet &scores) {
  const std::vector<ErrorRatePoint> c = ErrorRateCurve(scores);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = c[i].p_miss - c[i].p_fa;
    if (d < 0.0) continue;
    if (d == 0.0 || i == 0) return {c[i].p_miss, c[i].threshold};
    const ErrorRatePoint &lo = c[i - 1];
    const double d_lo = lo.p_miss - lo.p_fa;
    const double alpha = -d_lo / (d - d_lo);
    const double eer = lo.p_miss + alpha * (c[i].p_miss - lo.p_miss);
    const double thr = std::isfinite(c[i].threshold)
                           ? lo.threshold + alpha * (c[i].threshold - lo.threshold)
                           : lo.threshold;
    return {eer, thr};
  }
  // Unreachable: the last point always has P_miss - P_fa = 1.
  return {c.back().p_miss, c.back().threshold};
}

struct DcfResult {
  double min_dcf;
  double threshold;
};

inline double NormalizedDcf(double p_miss, double p_fa, const OperatingPoint &op) {
  const double cost = op.c_miss * p_miss * op.p_target + op.c_fa * p_fa * (1.0 - op.p_target);
  return cost / std::min(op.c_miss * op.p_target, op.c_fa * (1.0 - op.p_target));
}

inline DcfResult MinDcf(const ScoreSet &scores, const OperatingPoint &op) {
  op.Validate();
  const std::vector<ErrorRatePoint> c = ErrorRateCurve(scores);
  DcfResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const ErrorRatePoint &pt : c) {
    const double v = NormalizedDcf(pt.p_miss, pt.p_fa, op);
    if (v < best.min_dcf) best = {v, pt.threshold};
  }
  return best;
}

struct DetPoint {
  double p_fa;
  double p_miss;
};

inline std::vector<DetPoint> DetPoints(const ScoreSet &scores) {
  std::vector<DetPoint> out;
  for (const ErrorRatePoint &pt : ErrorRateCurve(scores)) out.push_back({pt.p_fa, pt.p_miss});
  return out;
}

// ---------------------------------------------------------------------------
// Text formats.  Scores: "trial-id<TAB>score[<TAB>target|nontarget]".
// DET: "P_fa<TAB>P_miss".

inline std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string EncodeScores(const ScoreSet &scores) {
  std::string out;
  for (const ScoreRecord &r : scores) {
    out += r.trial_id;
    out += '\t';
    out += FormatDouble(r.score);
    if (r.label) {
      out += '\t';
      out += LabelName(*r.label);
    }
    out += '\n';
  }
  return out;
}

inline ScoreSet DecodeScores(std::string_view text) {
  ScoreSet out;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> f = SplitString(line, '\t');
    if (f.size() != 2 && f.size() != 3)
      throw FormatError(detail::Concat("score file line ", line_no, ": expected 2 or 3 fields"),
                        line_no);
    ScoreRecord r;
    r.trial_id = f[0];
    const char *b = f[1].data();
    auto [ptr, ec] = std::from_chars(b, b + f[1].size(), r.score);
    if (ec != std::errc() || ptr != b + f[1].size() || !std::isfinite(r.score))
      throw FormatError(detail::Concat("score file line ", line_no, ": bad score '", f[1], "'"),
                        line_no);
    if (f.size() == 3) {
      r.label = ParseLabel(f[2]);
      if (!r.label)
        throw FormatError(detail::Concat("score file line ", line_no, ": bad label '", f[2], "'"),
                          line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string EncodeDet(const std::vector<DetPoint> &points) {
  std::string out;
  for (const DetPoint &p : points) {
    out += FormatDouble(p.p_fa);
    out += '\t';
    out += FormatDouble(p.p_miss);
    out += '\n';
  }
  return out;
}

inline void WriteScores(const ScoreSet &scores, const std::filesystem::path &path) {
  WriteFileAtomic(path, EncodeScores(scores));
}

inline ScoreSet ReadScores(const std::filesystem::path &path) {
  return DecodeScores(ReadFileBytes(path));
}

}  // namespace attnback
