// attnback/commands.hpp

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

// The four command-line operations (synth, train, score, eval) as plain
// functions over option structs, so the tool and the tests share them.
// Progress and warnings go to `log`; nothing is written until a result is
// complete.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attnback/attention.hpp"
#include "attnback/cosine.hpp"
#include "attnback/embeddings.hpp"
#include "attnback/error.hpp"
#include "attnback/lda.hpp"
#include "attnback/metrics.hpp"
#include "attnback/plda.hpp"
#include "attnback/synthetic.hpp"
#include "attnback/trainer.hpp"
#include "attnback/trials.hpp"

namespace attnback {

enum class BackendKind { kAttention, kCosine, kPlda };

inline std::string_view BackendName(BackendKind b) {
  switch (b) {
    case BackendKind::kAttention: return "attention";
    case BackendKind::kCosine: return "cosine";
    case BackendKind::kPlda: return "plda";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SyntheticSpec spec;
  double eval_fraction = 0.2;
  int enrollments = 3;
  std::string out = "synth";  // output prefix
};

struct SynthOutputs {
  std::filesystem::path all, train, eval, trials;
};

inline SynthOutputs SynthPaths(const std::string &prefix) {
  return {prefix + ".emb", prefix + ".train.emb", prefix + ".eval.emb", prefix + ".trials"};
}

/// Writes <out>.emb (every record), <out>.train.emb and <out>.eval.emb
/// (speaker-disjoint) and <out>.trials (labeled eval trials).
inline SynthOutputs RunSynth(const SynthOptions &opts, std::ostream &log) {
  SyntheticData data = GenerateSynthetic(opts.spec);
  // The split draws from its own stream so that it does not depend on how
  // many numbers the generator consumed.
  Rng split_rng(opts.spec.seed ^ 0x5bd1e995ULL);
  TrainEvalSplit split = SplitTrainEval(data.set, opts.eval_fraction, opts.enrollments, split_rng);
  SynthOutputs paths = SynthPaths(opts.out);
  WriteEmbeddings(data.set, paths.all);
  WriteEmbeddings(split.train, paths.train);
  WriteEmbeddings(split.eval, paths.eval);
  WriteTrials(split.trials, paths.trials);
  log << "synth: " << data.set.size() << " records (" << split.train.speakers().size()
      << " train / " << split.eval.speakers().size() << " eval speakers), " << split.trials.size()
      << " trials -> " << opts.out << ".{emb,train.emb,eval.emb,trials}\n";
  return paths;
}

// ---------------------------------------------------------------------------
// train

struct TrainCommandOptions {
  std::string embeddings;
  BackendKind backend = BackendKind::kAttention;
  std::string out;         // checkpoint (attention) or PLDA1 model (plda)
  std::string resume;      // optional checkpoint to continue from
  std::string log_path;    // per-epoch log; defaults to <out>.log
  TrainOptions train;      // attention back-end settings
  int lda_dim = 400;       // 0 disables LDA
  int latent_dim = 150;
  int plda_iters = 10;
  bool length_norm = false;
};

inline void RunTrainAttention(const TrainCommandOptions &opts, const EmbeddingSet &pool,
                              std::ostream &log) {
  TrainOptions t = opts.train;
  TrainState state;
  if (!opts.resume.empty()) {
    state = LoadCheckpoint(opts.resume);
    ATTNBACK_CHECK(state.config.dim == pool.dim(), "checkpoint dim ", state.config.dim,
                   " does not match embedding dim ", pool.dim());
    t.backend = state.config;  // head counts come from the checkpoint
    log << "train: resuming from " << opts.resume << " at epoch " << state.epoch << ", step "
        << state.step << "\n";
  } else {
    t.backend.dim = pool.dim();
    t.backend.Validate();
    CheckPoolFitsBatch(pool, t.batch);
    state = InitTrainState(t.backend, t.batch.seed);
  }
  const std::string log_path = opts.log_path.empty() ? opts.out + ".log" : opts.log_path;
  std::string lines;
  for (const EpochStats &s : state.history) lines += FormatEpochLine(s) + "\n";
  TrainEpochs(&state, pool, t, t.epochs, [&](const EpochStats &s) {
    const std::string line = FormatEpochLine(s);
    lines += line + "\n";
    log << "epoch\t" << line << "\n";
  });
  SaveCheckpoint(state, opts.out);
  WriteFileAtomic(log_path, lines);
  log << "train: wrote checkpoint " << opts.out << " and log " << log_path << "\n";
}

inline void RunTrainPlda(const TrainCommandOptions &opts, const EmbeddingSet &raw,
                         std::ostream &log) {
  ATTNBACK_CHECK(opts.lda_dim >= 0 && opts.latent_dim >= 1 && opts.plda_iters >= 0,
                 "invalid LDA/PLDA settings");
  EmbeddingSet pool = raw;
  if (opts.length_norm) {
    EmbeddingSet normed(raw.dim());
    const double scale = std::sqrt(static_cast<double>(raw.dim()));
    for (const EmbeddingRecord &r : raw.records()) {
      const double n = r.vector.norm();
      ATTNBACK_CHECK(n > 0.0, "zero-norm embedding ", r.speaker, "/", r.utterance);
      normed.Add(r.speaker, r.utterance, r.vector * (scale / n));
    }
    pool = std::move(normed);
  }
  std::optional<LdaProjection> lda;
  if (opts.lda_dim > 0) {
    int usable = 0;
    for (const auto &[spk, idx] : pool.speakers()) usable += idx.size() >= 2;
    const int cap = std::min(pool.dim(), usable - 1);
    int dim = opts.lda_dim;
    if (dim > cap) {
      log << "train: LDA dim " << dim << " exceeds min(input dim, speakers - 1) = " << cap
          << "; using " << cap << "\n";
      dim = cap;
    }
    lda = LdaFit(pool, dim);
    if (lda->ridge > 0.0) log << "train: LDA within-class scatter was singular; ridge " << lda->ridge << " added\n";
    pool = LdaApply(*lda, pool);
  }
  int latent = opts.latent_dim;
  if (latent > pool.dim()) {
    log << "train: PLDA latent dim " << latent << " exceeds feature dim " << pool.dim() << "; using "
        << pool.dim() << "\n";
    latent = pool.dim();
  }
  PldaFitResult fit = PldaFit(pool, latent, opts.plda_iters);
  PldaModel model = fit.model;
  model.length_norm = opts.length_norm;
  model.lda = lda;
  SavePlda(model, opts.out);
  std::string lines;
  for (std::size_t i = 0; i < fit.log_likelihood.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu\t%.10g\n", i, fit.log_likelihood[i]);
    lines += buf;
  }
  const std::string log_path = opts.log_path.empty() ? opts.out + ".log" : opts.log_path;
  WriteFileAtomic(log_path, lines);
  log << "train: PLDA (dim " << model.dim() << ", latent " << latent << ") log-likelihood "
      << fit.log_likelihood.front() << " -> " << fit.log_likelihood.back() << "; wrote "
      << opts.out << "\n";
}

inline void RunTrain(const TrainCommandOptions &opts, std::ostream &log) {
  ATTNBACK_CHECK(!opts.embeddings.empty(), "--embeddings is required");
  ATTNBACK_CHECK(!opts.out.empty(), "--out is required");
  const EmbeddingSet pool = ReadEmbeddings(opts.embeddings);
  log << "train: " << pool.size() << " embeddings of dim " << pool.dim() << " from "
      << pool.speakers().size() << " speakers\n";
  switch (opts.backend) {
    case BackendKind::kAttention: RunTrainAttention(opts, pool, log); break;
    case BackendKind::kPlda: RunTrainPlda(opts, pool, log); break;
    case BackendKind::kCosine:
      throw Error("the cosine back-end has no parameters to train; use `score --backend cosine`");
  }
}

// ---------------------------------------------------------------------------
// score

struct ScoreCommandOptions {
  std::string embeddings;
  std::string trials;
  std::string checkpoint;  // ATNB1/checkpoint for attention, PLDA1 for plda
  BackendKind backend = BackendKind::kAttention;
  EnrollAggregation agg = EnrollAggregation::kMean;
  std::string out;
};

namespace detail {

inline std::size_t LookupUtterance(const EmbeddingSet &set, const std::string &speaker,
                                   const std::string &utt, std::size_t line) {
  if (auto i = set.Find(speaker, utt)) return *i;
  std::optional<std::size_t> i;
  try {
    i = set.FindUtterance(utt);
  } catch (const Error &e) {
    throw Error(Concat("trial line ", line, ": ", e.what()));
  }
  if (!i) throw Error(Concat("trial line ", line, ": unknown utterance id '", utt, "'"));
  return *i;
}

inline std::string JoinIds(const std::vector<std::string> &ids, char sep) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += sep;
    out += ids[i];
  }
  return out;
}

}  // namespace detail

/// Scores every trial in order.  In concat mode the enrollment embedding is
/// looked up as utterance "<id1>+<id2>+..." of the enrolled speaker; if it
/// is absent, cosine falls back to the mean and PLDA to the average of
/// length-normalized embeddings, with one warning.
inline ScoreSet ScoreTrials(const ScoreCommandOptions &opts, const EmbeddingSet &set,
                            const TrialList &trials, std::ostream &log) {
  std::optional<ParamsWithConfig> attn;
  std::optional<PldaModel> plda;
  if (opts.backend == BackendKind::kAttention) {
    ATTNBACK_CHECK(!opts.checkpoint.empty(), "--checkpoint is required for the attention back-end");
    attn = LoadParams(opts.checkpoint);
    ATTNBACK_CHECK(attn->config.dim == set.dim(), "embedding dim ", set.dim(),
                   " does not match model dim ", attn->config.dim);
  } else if (opts.backend == BackendKind::kPlda) {
    ATTNBACK_CHECK(!opts.checkpoint.empty(), "--checkpoint (PLDA model) is required for plda");
    plda = LoadPlda(opts.checkpoint);
    ATTNBACK_CHECK(plda->input_dim() == set.dim(), "embedding dim ", set.dim(),
                   " does not match model input dim ", plda->input_dim());
  }
  bool warned = false;
  ScoreSet out;
  out.reserve(trials.size());
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const Trial &trial = trials[t];
    const std::size_t line = t + 1;
    const Vector &test =
        set[detail::LookupUtterance(set, "", trial.test_utterance, line)].vector;
    std::vector<Vector> enroll;
    bool precomputed = false;
    if (opts.agg == EnrollAggregation::kConcatFeatures && opts.backend != BackendKind::kAttention) {
      const std::string joined = detail::JoinIds(trial.enroll_utterances, '+');
      if (auto i = set.Find(trial.enroll_speaker, joined)) {
        enroll.push_back(set[*i].vector);
        precomputed = true;
      } else if (!warned) {
        log << "warning: no precomputed concatenated enrollment embedding (e.g. "
            << trial.enroll_speaker << "/" << joined << "); falling back to "
            << (opts.backend == BackendKind::kCosine ? "mean" : "length-normalized average")
            << " aggregation\n";
        warned = true;
      }
    }
    if (!precomputed)
      for (const std::string &u : trial.enroll_utterances)
        enroll.push_back(set[detail::LookupUtterance(set, trial.enroll_speaker, u, line)].vector);

    double score = 0.0;
    switch (opts.backend) {
      case BackendKind::kAttention:
        score = BackendForward(enroll, test, attn->params, attn->config).p();
        break;
      case BackendKind::kCosine: {
        const auto mode = precomputed ? EnrollAggregation::kConcatFeatures : EnrollAggregation::kMean;
        score = CosineScore(AggregateEnrollment(enroll, mode), test);
        break;
      }
      case BackendKind::kPlda: {
        const bool concat = opts.agg == EnrollAggregation::kConcatFeatures && !precomputed;
        score = PldaScoreMulti(*plda, enroll, test,
                               concat ? PldaEnrollMode::kConcatEmbeddings : PldaEnrollMode::kMean);
        break;
      }
    }
    out.push_back({trial.Id(), score, trial.label});
  }
  return out;
}

inline ScoreSet RunScore(const ScoreCommandOptions &opts, std::ostream &log) {
  ATTNBACK_CHECK(!opts.embeddings.empty() && !opts.trials.empty() && !opts.out.empty(),
                 "--embeddings, --trials and --out are required");
  const EmbeddingSet set = ReadEmbeddings(opts.embeddings);
  const TrialList trials = ReadTrials(opts.trials);
  ScoreSet scores = ScoreTrials(opts, set, trials, log);
  WriteScores(scores, opts.out);
  log << "score: " << scores.size() << " trials with the " << BackendName(opts.backend)
      << " back-end -> " << opts.out << "\n";
  return scores;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCommandOptions {
  std::string scores;
  std::vector<double> p_targets{0.01, 0.001};
  double c_miss = 1.0;
  double c_fa = 1.0;
  std::string det_out;  // defaults to <scores>.det
};

struct EvalReport {
  EerResult eer;
  std::vector<std::pair<double, DcfResult>> min_dcf;
  std::size_t num_targets = 0, num_nontargets = 0;
};

inline EvalReport EvaluateScores(const ScoreSet &scores, const EvalCommandOptions &opts) {
  for (const ScoreRecord &r : scores)
    ATTNBACK_CHECK(r.label.has_value(), "score record ", r.trial_id,
                   " has no label; eval needs a labeled score file");
  EvalReport rep;
  rep.eer = Eer(scores);
  for (double p : opts.p_targets)
    rep.min_dcf.emplace_back(p, MinDcf(scores, OperatingPoint{p, opts.c_miss, opts.c_fa}));
  for (const ScoreRecord &r : scores)
    (*r.label == TrialLabel::kTarget ? rep.num_targets : rep.num_nontargets)++;
  return rep;
}

/// Machine-readable report: one "key<TAB>value" line per figure, full
/// precision.
inline std::string FormatReport(const EvalReport &rep) {
  std::string out;
  out += "targets\t" + std::to_string(rep.num_targets) + "\n";
  out += "nontargets\t" + std::to_string(rep.num_nontargets) + "\n";
  out += "eer\t" + FormatDouble(rep.eer.eer) + "\n";
  out += "eer_threshold\t" + FormatDouble(rep.eer.threshold) + "\n";
  for (const auto &[p, d] : rep.min_dcf)
    out += "min_dcf@" + FormatDouble(p) + "\t" + FormatDouble(d.min_dcf) + "\n";
  return out;
}

inline std::string FormatSummary(const EvalReport &rep) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "EER %.2f%%", 100.0 * rep.eer.eer);
  std::string out = buf;
  for (const auto &[p, d] : rep.min_dcf) {
    std::snprintf(buf, sizeof(buf), "  minDCF(%g) %.4f", p, d.min_dcf);
    out += buf;
  }
  return out;
}

inline EvalReport RunEval(const EvalCommandOptions &opts, std::ostream &report, std::ostream &log) {
  ATTNBACK_CHECK(!opts.scores.empty(), "--scores is required");
  ATTNBACK_CHECK(!opts.p_targets.empty(), "at least one --p-target is required");
  const ScoreSet scores = ReadScores(opts.scores);
  EvalReport rep = EvaluateScores(scores, opts);
  const std::string det = opts.det_out.empty() ? opts.scores + ".det" : opts.det_out;
  WriteFileAtomic(det, EncodeDet(DetPoints(scores)));
  report << FormatReport(rep);
  log << "eval: " << FormatSummary(rep) << "; DET points -> " << det << "\n";
  return rep;
}

}  // namespace attnback
