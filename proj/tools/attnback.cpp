// tools/attnback.cpp

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

#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "attnback/commands.hpp"

using namespace attnback;

namespace {

const std::map<std::string, BackendKind> kBackends{
    {"attention", BackendKind::kAttention},
    {"cosine", BackendKind::kCosine},
    {"plda", BackendKind::kPlda}};

const std::map<std::string, EnrollAggregation> kAggregations{
    {"mean", EnrollAggregation::kMean}, {"concat", EnrollAggregation::kConcatFeatures}};

// --config lives on the top-level app and falls through from every
// subcommand; the file holds one section per command ([train], ...).
CLI::App *AddCommand(CLI::App &app, const std::string &name, const std::string &help) {
  CLI::App *cmd = app.add_subcommand(name, help);
  cmd->fallthrough();
  return cmd;
}

void LogResolvedConfig(const CLI::App *cmd) {
  std::istringstream lines(cmd->config_to_str(true, false));
  std::cerr << "# resolved " << cmd->get_name() << " config\n";
  for (std::string line; std::getline(lines, line);)
    if (!line.empty()) std::cerr << "#   " << line << "\n";
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Attention back-end for speaker verification: synth, train, score, eval."};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML/INI file with [synth], [train], [score] or [eval] sections; "
                 "unknown keys are rejected");
  app.allow_config_extras(CLI::config_extras_mode::error);
  // A repeated scalar flag overrides the earlier one (and the config file).
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // synth
  SynthOptions synth;
  double within_lo = 0.0, within_hi = 0.0;
  CLI::App *synth_cmd = AddCommand(app, "synth", "generate a synthetic embedding set and trials");
  synth_cmd->add_option("--speakers", synth.spec.num_speakers, "number of speakers")
      ->capture_default_str();
  synth_cmd->add_option("--utts", synth.spec.utts_per_speaker, "utterances per speaker")
      ->capture_default_str();
  synth_cmd->add_option("--dim", synth.spec.dim, "embedding dimension")->capture_default_str();
  synth_cmd->add_option("--sigma-b", synth.spec.sigma_between, "between-speaker scale")
      ->capture_default_str();
  synth_cmd->add_option("--sigma-w", synth.spec.sigma_within, "within-speaker scale")
      ->capture_default_str();
  CLI::Option *range_opt =
      synth_cmd->add_option("--sigma-w-range", "per-speaker within scale range LO HI")
          ->expected(2)
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
          ->each([&, n = 0](const std::string &v) mutable {
            (n++ % 2 == 0 ? within_lo : within_hi) = std::stod(v);
          });
  synth_cmd->add_option("--eval-fraction", synth.eval_fraction, "fraction of eval speakers")
      ->capture_default_str();
  synth_cmd->add_option("--enroll", synth.enrollments, "enrollment utterances per eval speaker")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed, "random seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output prefix")->capture_default_str();

  // train
  TrainCommandOptions train;
  CLI::App *train_cmd = AddCommand(app, "train", "train the attention back-end or LDA+PLDA");
  train_cmd->add_option("--embeddings", train.embeddings, "training embeddings (EMBV1)")->required();
  train_cmd->add_option("--backend", train.backend, "attention | plda")
      ->transform(CLI::CheckedTransformer(kBackends))
      ->default_str("attention");
  train_cmd->add_option("--out", train.out, "checkpoint or PLDA model to write")->required();
  train_cmd->add_option("--checkpoint", train.resume, "resume from this checkpoint");
  train_cmd->add_option("--log", train.log_path, "per-epoch log (default <out>.log)");
  train_cmd->add_option("--epochs", train.train.epochs, "epochs to run")->capture_default_str();
  train_cmd->add_option("--batch-speakers", train.train.batch.num_speakers, "speakers per batch (M)")
      ->capture_default_str();
  train_cmd->add_option("--batch-utts", train.train.batch.utts_per_speaker,
                        "utterances per speaker (K)")
      ->capture_default_str();
  train_cmd->add_option("--lambda", train.train.lambda, "GE2E weight in the combined loss")
      ->capture_default_str();
  train_cmd->add_option("--lr-min", train.train.schedule.lr_min, "cyclical LR lower bound")
      ->capture_default_str();
  train_cmd->add_option("--lr-max", train.train.schedule.lr_max, "cyclical LR upper bound")
      ->capture_default_str();
  train_cmd->add_option("--half-cycle", train.train.schedule.half_cycle, "steps per half cycle")
      ->capture_default_str();
  train_cmd->add_option("--sdsa-heads", train.train.backend.sdsa_heads, "self-attention heads")
      ->capture_default_str();
  train_cmd->add_option("--ffsa-heads", train.train.backend.ffsa_heads, "pooling heads")
      ->capture_default_str();
  train_cmd->add_option("--ffsa-hidden", train.train.backend.ffsa_hidden, "pooling hidden size")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.train.batch.seed, "random seed")->capture_default_str();
  train_cmd->add_option("--lda-dim", train.lda_dim, "LDA output dim, 0 for none (plda)")
      ->capture_default_str();
  train_cmd->add_option("--latent-dim", train.latent_dim, "PLDA latent dim (plda)")
      ->capture_default_str();
  train_cmd->add_option("--plda-iters", train.plda_iters, "EM iterations (plda)")
      ->capture_default_str();
  train_cmd->add_flag("--length-norm", train.length_norm, "length-normalize before LDA/PLDA");

  // score
  ScoreCommandOptions score;
  CLI::App *score_cmd = AddCommand(app, "score", "score a trial list");
  score_cmd->add_option("--embeddings", score.embeddings, "embeddings (EMBV1)")->required();
  score_cmd->add_option("--trials", score.trials, "trial list")->required();
  score_cmd->add_option("--checkpoint", score.checkpoint, "attention checkpoint or PLDA model");
  score_cmd->add_option("--backend", score.backend, "attention | cosine | plda")
      ->transform(CLI::CheckedTransformer(kBackends))
      ->default_str("attention");
  score_cmd->add_option("--agg", score.agg, "enrollment aggregation for cosine/plda: mean | concat")
      ->transform(CLI::CheckedTransformer(kAggregations))
      ->default_str("mean");
  score_cmd->add_option("--out", score.out, "score file to write")->required();

  // eval
  EvalCommandOptions eval;
  CLI::App *eval_cmd = AddCommand(app, "eval", "EER, minDCF and DET points of a score file");
  eval_cmd->add_option("--scores", eval.scores, "labeled score file")->required();
  eval_cmd->add_option("--p-target", eval.p_targets, "target prior (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  eval_cmd->add_option("--c-miss", eval.c_miss, "miss cost")->capture_default_str();
  eval_cmd->add_option("--c-fa", eval.c_fa, "false-alarm cost")->capture_default_str();
  eval_cmd->add_option("--out", eval.det_out, "DET points file (default <scores>.det)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (synth_cmd->parsed()) {
      LogResolvedConfig(synth_cmd);
      if (range_opt->count() > 0) synth.spec.within_range = std::make_pair(within_lo, within_hi);
      RunSynth(synth, std::cerr);
    } else if (train_cmd->parsed()) {
      LogResolvedConfig(train_cmd);
      RunTrain(train, std::cerr);
    } else if (score_cmd->parsed()) {
      LogResolvedConfig(score_cmd);
      RunScore(score, std::cerr);
    } else if (eval_cmd->parsed()) {
      LogResolvedConfig(eval_cmd);
      RunEval(eval, std::cout, std::cerr);
    }
  } catch (const std::exception &e) {
    std::cerr << "attnback " << app.get_subcommands().front()->get_name() << ": error: "
              << e.what() << "\n";
    return 1;
  }
  return 0;
}
