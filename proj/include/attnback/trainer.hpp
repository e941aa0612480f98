// attnback/trainer.hpp

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "attnback/attention.hpp"
#include "attnback/binary_io.hpp"
#include "attnback/embeddings.hpp"
#include "attnback/error.hpp"
#include "attnback/objectives.hpp"
#include "attnback/rng.hpp"

namespace attnback {

struct BatchSpec {
  int num_speakers = 256;     // M
  int utts_per_speaker = 5;   // K
  std::uint64_t seed = 0;

  void Validate() const {
    ATTNBACK_CHECK(num_speakers >= 2, "batch needs at least 2 speakers, got M=", num_speakers);
    ATTNBACK_CHECK(utts_per_speaker >= 2,
                   "batch needs at least 2 utterances per speaker, got K=", utts_per_speaker);
  }
};

/// Triangular cyclical learning rate: lr_min at step 0, lr_max at
/// half_cycle, back to lr_min at 2 * half_cycle.
struct CyclicalLrSchedule {
  double lr_min = 1e-5;
  double lr_max = 3e-5;
  std::uint64_t half_cycle = 2000;

  void Validate() const {
    ATTNBACK_CHECK(lr_min >= 0.0 && lr_min <= lr_max, "learning rates must satisfy 0 <= lr_min <= lr_max");
    ATTNBACK_CHECK(half_cycle >= 1, "half cycle must be >= 1 step");
  }
};

inline double LrAt(const CyclicalLrSchedule &schedule, std::uint64_t step) {
  const std::uint64_t pos = step % (2 * schedule.half_cycle);
  const double span = schedule.lr_max - schedule.lr_min;
  const double h = static_cast<double>(schedule.half_cycle);
  if (pos <= schedule.half_cycle) return schedule.lr_min + span * (static_cast<double>(pos) / h);
  return schedule.lr_max - span * (static_cast<double>(pos - schedule.half_cycle) / h);
}

// ---------------------------------------------------------------------------
// Balanced batches.

/// One (test, enrollment-set) pair: test utterance m of speaker l against
/// the enrollment set of speaker n built by holding out index m.
struct BatchTrial {
  int test_speaker = 0;      // l
  int held_out = 0;          // m
  int enroll_speaker = 0;    // n
  std::size_t test = 0;      // index into TrainingBatch::embeddings
  std::vector<std::size_t> enroll;
  bool target() const { return test_speaker == enroll_speaker; }
};

struct TrainingBatch {
  int num_speakers = 0;
  int utts_per_speaker = 0;
  std::vector<std::string> speakers;                  // M
  std::vector<std::vector<std::string>> utterances;   // M x K
  std::vector<Vector> embeddings;                     // M*K, speaker-major
  std::vector<BatchTrial> trials;                     // ordered by (l, m, n)

  std::size_t pair_count() const { return trials.size(); }
};

/// Samples K utterances (without replacement) from each listed speaker and
/// lays out every (l, m, n) pair.
inline TrainingBatch BuildBatch(const EmbeddingSet &pool, const std::vector<std::string> &speakers,
                                int utts_per_speaker, Rng &rng) {
  TrainingBatch batch;
  const int M = static_cast<int>(speakers.size());
  const int K = utts_per_speaker;
  batch.num_speakers = M;
  batch.utts_per_speaker = K;
  batch.speakers = speakers;
  batch.utterances.resize(M);
  for (int l = 0; l < M; ++l) {
    auto it = pool.speakers().find(speakers[l]);
    ATTNBACK_CHECK(it != pool.speakers().end(), "speaker ", speakers[l], " not in pool");
    std::vector<std::size_t> idx = it->second;
    ATTNBACK_CHECK(idx.size() >= static_cast<std::size_t>(K), "speaker ", speakers[l], " has ",
                   idx.size(), " utterances, batch needs K=", K);
    rng.Shuffle(&idx);
    for (int k = 0; k < K; ++k) {
      batch.utterances[l].push_back(pool[idx[k]].utterance);
      batch.embeddings.push_back(pool[idx[k]].vector);
    }
  }
  batch.trials.reserve(static_cast<std::size_t>(M) * K * M);
  for (int l = 0; l < M; ++l) {
    for (int m = 0; m < K; ++m) {
      for (int n = 0; n < M; ++n) {
        BatchTrial t;
        t.test_speaker = l;
        t.held_out = m;
        t.enroll_speaker = n;
        t.test = static_cast<std::size_t>(l) * K + m;
        for (int k = 0; k < K; ++k)
          if (k != m) t.enroll.push_back(static_cast<std::size_t>(n) * K + k);
        batch.trials.push_back(std::move(t));
      }
    }
  }
  return batch;
}

/// Speakers with at least K utterances, sorted by id.
inline std::vector<std::string> EligibleSpeakers(const EmbeddingSet &pool, int utts_per_speaker) {
  std::vector<std::string> out;
  for (const auto &[spk, idx] : pool.speakers())
    if (idx.size() >= static_cast<std::size_t>(utts_per_speaker)) out.push_back(spk);
  return out;
}

inline void CheckPoolFitsBatch(const EmbeddingSet &pool, const BatchSpec &spec) {
  spec.Validate();
  const std::size_t eligible = EligibleSpeakers(pool, spec.utts_per_speaker).size();
  ATTNBACK_CHECK(eligible >= static_cast<std::size_t>(spec.num_speakers), "only ", eligible,
                 " speakers have at least K=", spec.utts_per_speaker,
                 " utterances but the batch needs M=", spec.num_speakers,
                 "; reduce --batch-speakers or --batch-utts");
}

/// M random speakers x K random utterances each.
inline TrainingBatch ComposeBatch(const EmbeddingSet &pool, const BatchSpec &spec, Rng &rng) {
  CheckPoolFitsBatch(pool, spec);
  std::vector<std::string> speakers = EligibleSpeakers(pool, spec.utts_per_speaker);
  rng.Shuffle(&speakers);
  speakers.resize(spec.num_speakers);
  return BuildBatch(pool, speakers, spec.utts_per_speaker, rng);
}

// ---------------------------------------------------------------------------
// Loss and gradients over a batch.

struct BatchEvaluation {
  CombinedLoss loss;
  ParamGradients grads;
};

/// Forward every pair, evaluate the combined loss and backpropagate it.
/// Each enrollment set (n, m) is aggregated once and its gradient summed
/// over all tests that use it.
inline BatchEvaluation EvaluateBatch(const AttentionBackendParams &params,
                                     const BackendConfig &config, const TrainingBatch &batch,
                                     double lambda) {
  const int M = batch.num_speakers, K = batch.utts_per_speaker;
  const auto key = [K](int n, int m) { return static_cast<std::size_t>(n) * K + m; };
  std::vector<EnrollmentTrace> enroll(static_cast<std::size_t>(M) * K);
  std::vector<bool> have(enroll.size(), false);
  std::vector<ScoreTrace> scores(batch.trials.size());
  BatchScores probs(M, K);
  for (std::size_t t = 0; t < batch.trials.size(); ++t) {
    const BatchTrial &trial = batch.trials[t];
    const std::size_t e = key(trial.enroll_speaker, trial.held_out);
    if (!have[e]) {
      std::vector<Vector> rows;
      for (std::size_t i : trial.enroll) rows.push_back(batch.embeddings[i]);
      enroll[e] = Aggregate(StackRows(rows), params, config);
      have[e] = true;
    }
    scores[t] = Score(batch.embeddings[trial.test], enroll[e].representative(), params);
    probs.at(trial.test_speaker, trial.held_out, trial.enroll_speaker) = scores[t].p;
  }

  BatchEvaluation out;
  out.loss = CombinedLossFn(probs, lambda);
  out.grads = ParamGradients::Zeros(config);
  std::vector<Vector> d_h(enroll.size(), Vector::Zero(config.dim));
  for (std::size_t t = 0; t < batch.trials.size(); ++t) {
    const BatchTrial &trial = batch.trials[t];
    const double d_p =
        out.loss.grad[probs.Index(trial.test_speaker, trial.held_out, trial.enroll_speaker)];
    ScoreGradients g = ScoreBackward(scores[t], d_p, params, &out.grads);
    d_h[key(trial.enroll_speaker, trial.held_out)] += g.d_h;
  }
  for (std::size_t e = 0; e < enroll.size(); ++e)
    if (have[e]) AggregateBackward(enroll[e], d_h[e], params, config, &out.grads);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochStats {
  std::uint64_t epoch = 0;
  double total = 0.0;  // per-pair means
  double bce = 0.0;
  double ge2e = 0.0;
  double lr = 0.0;     // rate used for the last step of the epoch

  bool operator==(const EpochStats &) const = default;
};

struct TrainState {
  BackendConfig config;
  AttentionBackendParams params;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  Rng rng;
  std::vector<EpochStats> history;
};

struct TrainOptions {
  BackendConfig backend;
  BatchSpec batch;
  CyclicalLrSchedule schedule;
  double lambda = kDefaultLossWeight;
  int epochs = 40;
};

/// Tab-separated: epoch, mean total, mean bce, mean ge2e, lr.
inline std::string FormatEpochLine(const EpochStats &s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu\t%.8g\t%.8g\t%.8g\t%.6g",
                static_cast<unsigned long long>(s.epoch), s.total, s.bce, s.ge2e, s.lr);
  return buf;
}

/// Parameters come from the first draws of the seed's stream; batch
/// sampling continues on the same generator.
inline TrainState InitTrainState(const BackendConfig &config, std::uint64_t seed) {
  config.Validate();
  TrainState state;
  state.config = config;
  state.rng = Rng(seed);
  state.params = InitParams(config, state.rng);
  return state;
}

/// Runs `num_epochs` more epochs on `state`.  Each epoch shuffles the
/// eligible speakers and partitions them into floor(n / M) batches; the
/// remainder is skipped for that epoch.
inline void TrainEpochs(TrainState *state, const EmbeddingSet &pool, const TrainOptions &opts,
                        int num_epochs,
                        const std::function<void(const EpochStats &)> &on_epoch = {}) {
  opts.schedule.Validate();
  CheckPoolFitsBatch(pool, opts.batch);
  ATTNBACK_CHECK(pool.dim() == state->config.dim, "pool dim ", pool.dim(),
                 " does not match backend D=", state->config.dim);
  const int M = opts.batch.num_speakers, K = opts.batch.utts_per_speaker;
  for (int e = 0; e < num_epochs; ++e) {
    std::vector<std::string> speakers = EligibleSpeakers(pool, K);
    state->rng.Shuffle(&speakers);
    const std::size_t num_batches = speakers.size() / M;
    double total = 0.0, bce = 0.0, ge2e = 0.0, pairs = 0.0, lr = 0.0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      std::vector<std::string> chosen(speakers.begin() + b * M, speakers.begin() + (b + 1) * M);
      TrainingBatch batch = BuildBatch(pool, chosen, K, state->rng);
      BatchEvaluation ev = EvaluateBatch(state->params, state->config, batch, opts.lambda);
      if (!std::isfinite(ev.loss.value.total))
        throw Error(detail::Concat("non-finite loss at step ", state->step));
      lr = LrAt(opts.schedule, state->step);
      const double n_pairs = static_cast<double>(batch.pair_count());
      state->params.AddScaled(ev.grads, -lr / n_pairs);
      state->params.a = std::max(state->params.a, kMinCalibrationScale);
      ++state->step;
      total += ev.loss.value.total;
      bce += ev.loss.value.bce;
      ge2e += ev.loss.value.ge2e;
      pairs += n_pairs;
    }
    ++state->epoch;
    EpochStats stats{state->epoch, total / pairs, bce / pairs, ge2e / pairs, lr};
    state->history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
}

inline TrainState Train(const EmbeddingSet &pool, const TrainOptions &opts,
                        const std::function<void(const EpochStats &)> &on_epoch = {}) {
  ATTNBACK_CHECK(opts.epochs >= 1, "epochs must be >= 1");
  CheckPoolFitsBatch(pool, opts.batch);
  TrainState state = InitTrainState(opts.backend, opts.batch.seed);
  TrainEpochs(&state, pool, opts, opts.epochs, on_epoch);
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoint: the ATNB1 parameter block followed by "TRNS1", u64 step,
// u64 epoch, u64 rng seed, u64 rng counter, u32 history length and per
// epoch u64 epoch + f64 total, bce, ge2e, lr.

inline constexpr std::string_view kTrainerMagic = "TRNS1";

inline std::string EncodeCheckpoint(const TrainState &state) {
  ByteWriter w;
  WriteParams(state.params, state.config, &w);
  w.Magic(kTrainerMagic);
  w.U64(state.step);
  w.U64(state.epoch);
  w.U64(state.rng.seed());
  w.U64(state.rng.counter());
  w.U32(static_cast<std::uint32_t>(state.history.size()));
  for (const EpochStats &s : state.history) {
    w.U64(s.epoch);
    w.F64(s.total);
    w.F64(s.bce);
    w.F64(s.ge2e);
    w.F64(s.lr);
  }
  return w.Release();
}

inline TrainState DecodeCheckpoint(std::string_view bytes) {
  ByteReader r(bytes);
  ParamsWithConfig pc = ReadParams(&r);
  TrainState state;
  state.config = pc.config;
  state.params = std::move(pc.params);
  r.ExpectMagic(kTrainerMagic, "trainer header");
  state.step = r.U64("step");
  state.epoch = r.U64("epoch");
  const std::uint64_t seed = r.U64("rng seed");
  const std::uint64_t counter = r.U64("rng counter");
  state.rng = Rng(seed, counter);
  const std::uint32_t n = r.U32("history length");
  if (static_cast<std::uint64_t>(n) * 40 > r.remaining())
    throw FormatError(detail::Concat("truncated input while reading epoch history at byte offset ",
                                     r.offset()),
                      r.offset());
  for (std::uint32_t i = 0; i < n; ++i) {
    EpochStats s;
    s.epoch = r.U64("history epoch");
    s.total = r.F64("history loss");
    s.bce = r.F64("history loss");
    s.ge2e = r.F64("history loss");
    s.lr = r.F64("history lr");
    state.history.push_back(s);
  }
  if (!r.AtEnd())
    throw FormatError(detail::Concat("trailing bytes at byte offset ", r.offset()), r.offset());
  return state;
}

inline void SaveCheckpoint(const TrainState &state, const std::filesystem::path &path) {
  WriteFileAtomic(path, EncodeCheckpoint(state));
}

inline TrainState LoadCheckpoint(const std::filesystem::path &path) {
  return DecodeCheckpoint(ReadFileBytes(path));
}

}  // namespace attnback
