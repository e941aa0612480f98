// attnback/synthetic.hpp

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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "attnback/embeddings.hpp"
#include "attnback/error.hpp"
#include "attnback/rng.hpp"
#include "attnback/trials.hpp"

namespace attnback {

struct SyntheticSpec {
  int num_speakers = 100;
  int utts_per_speaker = 10;
  int dim = 32;
  double sigma_between = 1.0;
  double sigma_within = 0.5;
  /// When set, each speaker draws its own within-speaker scale uniformly
  /// from [first, second] and sigma_within is ignored.
  std::optional<std::pair<double, double>> within_range;
  std::uint64_t seed = 0;

  void Validate() const {
    ATTNBACK_CHECK(num_speakers >= 1 && utts_per_speaker >= 1 && dim >= 1,
                   "synthetic spec: counts must be >= 1");
    ATTNBACK_CHECK(sigma_between > 0.0 && sigma_within > 0.0,
                   "synthetic spec: sigma_between and sigma_within must be > 0");
    if (within_range)
      ATTNBACK_CHECK(within_range->first > 0.0 && within_range->first <= within_range->second,
                     "synthetic spec: within range must satisfy 0 < lo <= hi");
  }
};

struct SyntheticData {
  EmbeddingSet set;
  std::map<std::string, Vector> speaker_means;
  std::map<std::string, double> speaker_within_scale;
};

inline std::string SpeakerName(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04d", i);
  return buf;
}

inline std::string UtteranceName(int spk, int utt) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%04d-utt%03d", spk, utt);
  return buf;
}

/**
   Speaker mean ~ N(0, sigma_b^2 I); utterance ~ N(mean, sigma_w^2 I).
   Per speaker the draw order is: one uniform for the within scale (always
   drawn, so a collapsed range reproduces the homoscedastic stream), the
   mean, then the utterances.  Values are rounded to float precision so sets
   survive an EMBV1 round trip unchanged.
*/
inline SyntheticData GenerateSynthetic(const SyntheticSpec &spec) {
  spec.Validate();
  Rng rng(spec.seed);
  SyntheticData out{EmbeddingSet(spec.dim), {}, {}};
  const double lo = spec.within_range ? spec.within_range->first : spec.sigma_within;
  const double hi = spec.within_range ? spec.within_range->second : spec.sigma_within;
  for (int s = 0; s < spec.num_speakers; ++s) {
    const std::string spk = SpeakerName(s);
    const double u = rng.Uniform();
    const double sigma_w = lo + u * (hi - lo);
    Vector mean(spec.dim);
    for (int i = 0; i < spec.dim; ++i) mean[i] = spec.sigma_between * rng.Normal();
    for (int k = 0; k < spec.utts_per_speaker; ++k) {
      Vector v(spec.dim);
      for (int i = 0; i < spec.dim; ++i)
        v[i] = static_cast<double>(static_cast<float>(mean[i] + sigma_w * rng.Normal()));
      out.set.Add(spk, UtteranceName(s, k), std::move(v));
    }
    out.speaker_means.emplace(spk, std::move(mean));
    out.speaker_within_scale.emplace(spk, sigma_w);
  }
  return out;
}

struct TrainEvalSplit {
  EmbeddingSet train;
  EmbeddingSet eval;
  TrialList trials;
};

/**
   Speaker-disjoint split.  round(fraction * speakers) speakers go to the
   evaluation side; each of them gets `enrollments` randomly chosen
   enrollment utterances, the rest become test utterances.  Trials are the
   full cross product: every eval test utterance against every eval
   speaker's enrollment set, in speaker order.
*/
inline TrainEvalSplit SplitTrainEval(const EmbeddingSet &set, double eval_fraction,
                                     int enrollments, Rng &rng) {
  ATTNBACK_CHECK(eval_fraction > 0.0 && eval_fraction < 1.0,
                 "eval fraction must be in (0, 1), got ", eval_fraction);
  ATTNBACK_CHECK(enrollments >= 1, "need at least one enrollment per eval speaker");
  std::vector<std::string> speakers;
  for (const auto &[spk, idx] : set.speakers()) speakers.push_back(spk);
  const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * speakers.size()));
  ATTNBACK_CHECK(n_eval >= 1 && n_eval < speakers.size(), "eval fraction ", eval_fraction,
                 " of ", speakers.size(), " speakers leaves an empty side");

  rng.Shuffle(&speakers);
  std::set<std::string> eval_speakers(speakers.begin(), speakers.begin() + n_eval);

  TrainEvalSplit out{EmbeddingSet(set.dim()), EmbeddingSet(set.dim()), {}};
  struct EvalSpeaker {
    std::string id;
    std::vector<std::string> enroll, test;
  };
  std::vector<EvalSpeaker> eval_info;
  for (const auto &[spk, idx] : set.speakers()) {
    if (!eval_speakers.count(spk)) continue;
    ATTNBACK_CHECK(idx.size() > static_cast<std::size_t>(enrollments), "eval speaker ", spk,
                   " has ", idx.size(), " utterances; need more than ", enrollments);
    std::vector<std::size_t> order = idx;
    rng.Shuffle(&order);
    EvalSpeaker info{spk, {}, {}};
    std::set<std::size_t> enroll_idx(order.begin(), order.begin() + enrollments);
    for (std::size_t i : idx) {
      if (enroll_idx.count(i))
        info.enroll.push_back(set[i].utterance);
      else
        info.test.push_back(set[i].utterance);
    }
    eval_info.push_back(std::move(info));
  }
  for (const EmbeddingRecord &rec : set.records()) {
    EmbeddingSet &dst = eval_speakers.count(rec.speaker) ? out.eval : out.train;
    dst.Add(rec.speaker, rec.utterance, rec.vector);
  }
  for (const EvalSpeaker &tester : eval_info) {
    for (const std::string &test : tester.test) {
      for (const EvalSpeaker &enrolled : eval_info) {
        out.trials.push_back(Trial{enrolled.id, enrolled.enroll, test,
                                   enrolled.id == tester.id ? TrialLabel::kTarget
                                                            : TrialLabel::kNontarget});
      }
    }
  }
  return out;
}

}  // namespace attnback
