// tests/trainer_test.cc

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


#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "attnback/synthetic.hpp"
#include "attnback/trainer.hpp"
#include "pipeline_oracle.hpp"
#include "test_util.hpp"

namespace attnback {
namespace {

EmbeddingSet MakePool(int speakers, int utts, int dim, std::uint64_t seed,
                      double sigma_w = 0.5) {
  SyntheticSpec spec;
  spec.num_speakers = speakers;
  spec.utts_per_speaker = utts;
  spec.dim = dim;
  spec.sigma_within = sigma_w;
  spec.seed = seed;
  return GenerateSynthetic(spec).set;
}

void ExpectTableLayout(const TrainingBatch &batch) {
  const int M = batch.num_speakers, K = batch.utts_per_speaker;
  ASSERT_EQ(batch.trials.size(), static_cast<std::size_t>(M * K * M));
  std::size_t i = 0;
  for (int l = 0; l < M; ++l)
    for (int m = 0; m < K; ++m)
      for (int n = 0; n < M; ++n, ++i) {
        const BatchTrial &t = batch.trials[i];
        EXPECT_EQ(t.test_speaker, l);
        EXPECT_EQ(t.held_out, m);
        EXPECT_EQ(t.enroll_speaker, n);
        EXPECT_EQ(t.test, static_cast<std::size_t>(l * K + m));
        ASSERT_EQ(t.enroll.size(), static_cast<std::size_t>(K - 1));
        std::set<std::size_t> want;
        for (int k = 0; k < K; ++k)
          if (k != m) want.insert(n * K + k);
        EXPECT_EQ(std::set<std::size_t>(t.enroll.begin(), t.enroll.end()), want);
        EXPECT_EQ(std::count(t.enroll.begin(), t.enroll.end(), t.test), 0);
      }
}

TEST(ComposeBatch, ThreeByFourLayout) {
  EmbeddingSet pool = MakePool(5, 6, 4, 1);
  Rng rng(1);
  TrainingBatch batch = ComposeBatch(pool, BatchSpec{3, 4, 0}, rng);
  ExpectTableLayout(batch);
  int pos = 0, neg = 0;
  for (const BatchTrial &t : batch.trials) (t.target() ? pos : neg)++;
  EXPECT_EQ(pos, 12);
  EXPECT_EQ(neg, 24);
}

TEST(ComposeBatch, MinimumCase) {
  EmbeddingSet pool = MakePool(2, 2, 4, 2);
  Rng rng(2);
  TrainingBatch batch = ComposeBatch(pool, BatchSpec{2, 2, 0}, rng);
  ExpectTableLayout(batch);
  int pos = 0;
  for (const BatchTrial &t : batch.trials) {
    pos += t.target();
    EXPECT_EQ(t.enroll.size(), 1u);
  }
  EXPECT_EQ(pos, 4);
  EXPECT_EQ(batch.trials.size() - pos, 4u);
}

TEST(ComposeBatch, DistinctUtterancesPerSpeaker) {
  EmbeddingSet pool = MakePool(6, 5, 4, 3);
  Rng rng(3);
  TrainingBatch batch = ComposeBatch(pool, BatchSpec{4, 5, 0}, rng);
  std::set<std::string> spk(batch.speakers.begin(), batch.speakers.end());
  EXPECT_EQ(spk.size(), 4u);
  for (int l = 0; l < 4; ++l) {
    std::set<std::string> u(batch.utterances[l].begin(), batch.utterances[l].end());
    EXPECT_EQ(u.size(), 5u);
    for (int k = 0; k < 5; ++k) {
      auto idx = pool.Find(batch.speakers[l], batch.utterances[l][k]);
      ASSERT_TRUE(idx.has_value());
      EXPECT_EQ(pool[*idx].vector, batch.embeddings[l * 5 + k]);
    }
  }
}

TEST(ComposeBatch, DeterministicReplay) {
  EmbeddingSet pool = MakePool(8, 4, 4, 4);
  Rng a(77), b(77);
  TrainingBatch x = ComposeBatch(pool, BatchSpec{4, 3, 0}, a);
  TrainingBatch y = ComposeBatch(pool, BatchSpec{4, 3, 0}, b);
  EXPECT_EQ(x.speakers, y.speakers);
  EXPECT_EQ(x.utterances, y.utterances);
  ASSERT_EQ(x.trials.size(), y.trials.size());
  for (std::size_t i = 0; i < x.trials.size(); ++i) {
    EXPECT_EQ(x.trials[i].test, y.trials[i].test);
    EXPECT_EQ(x.trials[i].enroll, y.trials[i].enroll);
  }
}

TEST(ComposeBatch, RejectsSmallPool) {
  EmbeddingSet pool = MakePool(3, 3, 4, 5);
  Rng rng(5);
  try {
    ComposeBatch(pool, BatchSpec{4, 3, 0}, rng);
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("--batch-speakers"), std::string::npos);
  }
  EXPECT_THROW(ComposeBatch(pool, BatchSpec{2, 4, 0}, rng), Error);
  EXPECT_THROW(ComposeBatch(pool, BatchSpec{1, 2, 0}, rng), Error);
  EXPECT_THROW(ComposeBatch(pool, BatchSpec{2, 1, 0}, rng), Error);
}

TEST(ComposeBatch, ExcludesSpeakersWithTooFewUtterances) {
  EmbeddingSet pool(2);
  for (int s = 0; s < 4; ++s)
    for (int u = 0; u < (s == 0 ? 2 : 3); ++u)
      pool.Add(SpeakerName(s), UtteranceName(s, u), Vector::Constant(2, 1.0 + s + 0.1 * u));
  EXPECT_EQ(EligibleSpeakers(pool, 3).size(), 3u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    TrainingBatch b = ComposeBatch(pool, BatchSpec{3, 3, 0}, rng);
    for (const std::string &s : b.speakers) EXPECT_NE(s, SpeakerName(0));
  }
}

double Triangle(double lo, double hi, double half, double step) {
  const double period = 2 * half;
  const double phase = step - period * std::floor(step / period);
  const double frac = 1.0 - std::abs(phase / half - 1.0);
  return lo + (hi - lo) * frac;
}

TEST(LrSchedule, Endpoints) {
  CyclicalLrSchedule s;
  EXPECT_DOUBLE_EQ(LrAt(s, 0), 1e-5);
  EXPECT_DOUBLE_EQ(LrAt(s, 2000), 3e-5);
  EXPECT_DOUBLE_EQ(LrAt(s, 4000), 1e-5);
}

TEST(LrSchedule, MatchesClosedFormTriangle) {
  CyclicalLrSchedule s{1e-5, 3e-5, 2000};
  for (std::uint64_t step = 0; step <= 8000; ++step) {
    const double lr = LrAt(s, step);
    ASSERT_NEAR(lr, Triangle(1e-5, 3e-5, 2000, static_cast<double>(step)), 1e-18) << step;
    ASSERT_GE(lr, 1e-5);
    ASSERT_LE(lr, 3e-5);
    ASSERT_DOUBLE_EQ(lr, LrAt(s, step + 4000));
  }
}

TEST(LrSchedule, RejectsBadSchedules) {
  EXPECT_THROW((CyclicalLrSchedule{3e-5, 1e-5, 10}.Validate()), Error);
  EXPECT_THROW((CyclicalLrSchedule{1e-5, 3e-5, 0}.Validate()), Error);
  EXPECT_THROW((CyclicalLrSchedule{-1e-5, 3e-5, 10}.Validate()), Error);
}

TEST(EvaluateBatch, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    testing::PipelineCheck c = testing::CheckPipelineGradient(BackendConfig{8, 2, 2, 5}, 3, 3, seed);
    EXPECT_LT(c.result.max_rel_error, 1e-4) << "seed " << seed << " index " << c.result.worst_index;
  }
}

TEST(EvaluateBatch, LossMatchesForwardOnlyRecomputation) {
  const BackendConfig cfg{8, 2, 2, 5};
  EmbeddingSet pool = MakePool(5, 4, 8, 6);
  Rng rng(6);
  AttentionBackendParams p = InitParams(cfg, rng);
  TrainingBatch batch = ComposeBatch(pool, BatchSpec{4, 3, 0}, rng);
  BatchEvaluation ev = EvaluateBatch(p, cfg, batch, 0.6);
  EXPECT_NEAR(ev.loss.value.total, testing::ForwardOnlyBatchLoss(p, cfg, batch, 0.6),
              1e-12 * std::abs(ev.loss.value.total));
}

TrainOptions SmallOptions(int dim, int M, int K, int epochs, std::uint64_t seed) {
  TrainOptions o;
  o.backend = BackendConfig{dim, 2, 2, 8};
  o.batch = BatchSpec{M, K, seed};
  o.epochs = epochs;
  return o;
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  EmbeddingSet pool = MakePool(8, 4, 8, 7);
  TrainOptions o = SmallOptions(8, 4, 3, 1, 9);
  o.schedule = CyclicalLrSchedule{0.0, 0.0, 10};
  TrainState init = InitTrainState(o.backend, o.batch.seed);
  TrainState done = Train(pool, o);
  EXPECT_EQ(init.params.Flatten(), done.params.Flatten());
  EXPECT_EQ(done.epoch, 1u);
  EXPECT_EQ(done.step, 2u);
}

TEST(Train, LossDecreasesOnSeparableData) {
  EmbeddingSet pool = MakePool(40, 6, 16, 8, 0.3);
  TrainOptions o = SmallOptions(16, 8, 3, 30, 10);
  o.schedule = CyclicalLrSchedule{1e-2, 3e-2, 20};
  TrainState s = Train(pool, o);
  ASSERT_EQ(s.history.size(), 30u);
  EXPECT_LT(s.history.back().total, s.history.front().total);
  EXPECT_GE(s.params.a, kMinCalibrationScale);
}

TEST(Train, EqualSeedsGiveIdenticalCheckpoints) {
  EmbeddingSet pool = MakePool(12, 4, 8, 11);
  TrainOptions o = SmallOptions(8, 4, 3, 3, 12);
  o.schedule = CyclicalLrSchedule{1e-3, 3e-3, 5};
  EXPECT_EQ(EncodeCheckpoint(Train(pool, o)), EncodeCheckpoint(Train(pool, o)));
  TrainOptions other = o;
  other.batch.seed = 13;
  EXPECT_NE(EncodeCheckpoint(Train(pool, o)), EncodeCheckpoint(Train(pool, other)));
}

TEST(Train, ResumeEqualsUninterruptedRun) {
  testing::TempDir dir("resume");
  EmbeddingSet pool = MakePool(12, 4, 8, 14);
  TrainOptions o = SmallOptions(8, 4, 3, 5, 15);
  o.schedule = CyclicalLrSchedule{1e-3, 3e-3, 4};
  const std::string full = EncodeCheckpoint(Train(pool, o));

  TrainState part = InitTrainState(o.backend, o.batch.seed);
  TrainEpochs(&part, pool, o, 3);
  SaveCheckpoint(part, dir / "ck");
  TrainState resumed = LoadCheckpoint(dir / "ck");
  TrainEpochs(&resumed, pool, o, 2);
  EXPECT_EQ(EncodeCheckpoint(resumed), full);
}

TEST(Train, NonFiniteLossNamesStep) {
  EmbeddingSet pool = MakePool(8, 4, 8, 16);
  TrainOptions o = SmallOptions(8, 4, 3, 1, 17);
  TrainState s = InitTrainState(o.backend, 17);
  s.params.b = std::numeric_limits<double>::quiet_NaN();
  s.step = 42;
  try {
    TrainEpochs(&s, pool, o, 1);
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("step 42"), std::string::npos) << e.what();
  }
}

TEST(Train, EpochLineFormat) {
  EpochStats s{3, 1.5, 0.25, 2.0, 1e-5};
  const std::string line = FormatEpochLine(s);
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
  EXPECT_EQ(line.substr(0, 2), "3\t");
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  EmbeddingSet pool = MakePool(8, 4, 8, 18);
  TrainOptions o = SmallOptions(8, 4, 3, 2, 19);
  const std::string bytes = EncodeCheckpoint(Train(pool, o));
  EXPECT_EQ(EncodeCheckpoint(DecodeCheckpoint(bytes)), bytes);
}

TEST(Checkpoint, TruncationRejectedWithOffset) {
  EmbeddingSet pool = MakePool(8, 4, 8, 20);
  TrainOptions o = SmallOptions(8, 4, 3, 2, 21);
  const std::string bytes = EncodeCheckpoint(Train(pool, o));
  for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      DecodeCheckpoint(std::string_view(bytes).substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const FormatError &e) {
      EXPECT_LE(e.position(), cut);
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
  }
}

TEST(Checkpoint, ParamsLoaderAcceptsCheckpoint) {
  testing::TempDir dir("ckparams");
  EmbeddingSet pool = MakePool(8, 4, 8, 22);
  TrainState s = Train(pool, SmallOptions(8, 4, 3, 1, 23));
  SaveCheckpoint(s, dir / "ck");
  ParamsWithConfig pc = LoadParams(dir / "ck");
  EXPECT_EQ(pc.params.Flatten(), s.params.Flatten());
}

}  // namespace
}  // namespace attnback
