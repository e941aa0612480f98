// tests/attention_test.cc

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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "attnback/attention.hpp"
#include "attnback/grad_check.hpp"
#include "test_util.hpp"

namespace attnback {
namespace {

using testing::RandomMatrix;
using testing::RandomVector;
using testing::Rows;

BackendConfig SmallConfig() { return BackendConfig{8, 2, 2, 5}; }

Matrix PermuteRows(const Matrix &m, const std::vector<int> &perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

TEST(BackendConfig, RejectsNonDividingHeads) {
  EXPECT_THROW((BackendConfig{8, 3, 2, 5}.Validate()), Error);
  EXPECT_THROW((BackendConfig{8, 2, 3, 5}.Validate()), Error);
  EXPECT_THROW((BackendConfig{8, 2, 2, 0}.Validate()), Error);
  EXPECT_NO_THROW(SmallConfig().Validate());
}

TEST(InitParams, ShapesAndDeterminism) {
  Rng r1(17), r2(17);
  AttentionBackendParams a = InitParams(SmallConfig(), r1);
  AttentionBackendParams b = InitParams(SmallConfig(), r2);
  EXPECT_EQ(a.wq[0].rows(), 8);
  EXPECT_EQ(a.wq[0].cols(), 4);
  EXPECT_EQ(a.ffsa_w[1].rows(), 5);
  EXPECT_EQ(a.ffsa_w[1].cols(), 4);
  EXPECT_EQ(a.ffsa_v[0].size(), 5);
  EXPECT_EQ(a.a, 10.0);
  EXPECT_EQ(a.b, -5.0);
  EXPECT_EQ(a.Flatten(), b.Flatten());
  const double bound = std::sqrt(1.0 / 8);
  EXPECT_LE(a.wo.cwiseAbs().maxCoeff(), bound);
}

TEST(InitParams, ForwardIsFiniteOverSeeds) {
  const BackendConfig cfg = SmallConfig();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    AttentionBackendParams p = InitParams(cfg, rng);
    Matrix E = RandomMatrix(3, 8, rng);
    Vector q = RandomVector(8, rng);
    const double P = BackendForward(Rows(E), q, p, cfg).p();
    ASSERT_TRUE(std::isfinite(P));
    ASSERT_GT(P, 0.0);
    ASSERT_LT(P, 1.0);
  }
}

TEST(Sdsa, ZeroOutputWeightIsIdentity) {
  Rng rng(1);
  AttentionBackendParams p = InitParams(SmallConfig(), rng);
  p.wo.setZero();
  Matrix E = RandomMatrix(4, 8, rng);
  EXPECT_EQ(SdsaForward(E, p, SmallConfig()).output, E);
}

TEST(Sdsa, SingleRowAttendsToItself) {
  Rng rng(2);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  Matrix E = RandomMatrix(1, 8, rng);
  SdsaTrace t = SdsaForward(E, p, cfg);
  Matrix concat(1, 8);
  for (int i = 0; i < cfg.sdsa_heads; ++i) {
    EXPECT_EQ(t.heads[i].attn(0, 0), 1.0);
    concat.middleCols(i * 4, 4) = E * p.wv[i];
  }
  EXPECT_LE((t.output - (concat * p.wo + E)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Sdsa, RowPermutationEquivariance) {
  Rng rng(3);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  Matrix E = RandomMatrix(4, 8, rng);
  std::vector<int> perm{2, 0, 3, 1};
  Matrix h1 = SdsaForward(E, p, cfg).output;
  Matrix h2 = SdsaForward(PermuteRows(E, perm), p, cfg).output;
  EXPECT_LE((PermuteRows(h1, perm) - h2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sdsa, RejectsWrongWidth) {
  Rng rng(4);
  AttentionBackendParams p = InitParams(SmallConfig(), rng);
  EXPECT_THROW(SdsaForward(Matrix::Zero(3, 6), p, SmallConfig()), Error);
}

TEST(Ffsa, SingleRowPassesThrough) {
  Rng rng(5);
  AttentionBackendParams p = InitParams(SmallConfig(), rng);
  Matrix H = RandomMatrix(1, 8, rng);
  Vector h = FfsaForward(H, p, SmallConfig()).output;
  EXPECT_LE((h - Vector(H.row(0).transpose())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ffsa, IdenticalRowsGiveThatRow) {
  Rng rng(6);
  AttentionBackendParams p = InitParams(SmallConfig(), rng);
  Vector row = RandomVector(8, rng);
  Matrix H(4, 8);
  for (int k = 0; k < 4; ++k) H.row(k) = row.transpose();
  EXPECT_LE((FfsaForward(H, p, SmallConfig()).output - row).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ffsa, RowPermutationInvariance) {
  Rng rng(7);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  Matrix H = RandomMatrix(5, 8, rng);
  Vector h1 = FfsaForward(H, p, cfg).output;
  Vector h2 = FfsaForward(PermuteRows(H, {4, 2, 0, 1, 3}), p, cfg).output;
  EXPECT_LE((h1 - h2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ffsa, OutputInConvexHullOfEachSlice) {
  Rng rng(8);
  const BackendConfig cfg = SmallConfig();
  for (int trial = 0; trial < 50; ++trial) {
    AttentionBackendParams p = InitParams(cfg, rng);
    Matrix H = RandomMatrix(1 + rng.UniformInt(6), 8, rng, 3.0);
    FfsaTrace t = FfsaForward(H, p, cfg);
    for (int j = 0; j < cfg.ffsa_heads; ++j) {
      const Vector &w = t.heads[j].weights;
      EXPECT_NEAR(w.sum(), 1.0, 1e-12);
      EXPECT_GE(w.minCoeff(), 0.0);
      Vector recon = H.middleCols(j * 4, 4).transpose() * w;
      EXPECT_LE((recon - t.output.segment(j * 4, 4)).cwiseAbs().maxCoeff(), 1e-12);
      // Each coordinate lies between the slice's column min and max.
      for (int c = 0; c < 4; ++c) {
        EXPECT_GE(t.output[j * 4 + c], H.col(j * 4 + c).minCoeff() - 1e-12);
        EXPECT_LE(t.output[j * 4 + c], H.col(j * 4 + c).maxCoeff() + 1e-12);
      }
    }
  }
}

TEST(Score, ClosedFormCases) {
  AttentionBackendParams p;
  p.a = 1.0;
  p.b = 0.0;
  Vector h(3);
  h << 1.0, 2.0, -0.5;
  EXPECT_NEAR(Score(h, h, p).p, 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(Score(h, h, p).p, 0.73106, 1e-5);
  Vector orth(3);
  orth << 2.0, -1.0, 0.0;
  EXPECT_NEAR(Score(orth, h, p).p, 0.5, 1e-15);
  p.a = 2.0;
  p.b = 1.0;
  ScoreTrace anti = Score(Vector(-h), h, p);
  EXPECT_NEAR(anti.s, -1.0, 1e-15);
  EXPECT_NEAR(anti.p, 0.26894, 1e-5);
}

TEST(Score, ZeroNormRejected) {
  AttentionBackendParams p;
  EXPECT_THROW(Score(Vector::Zero(3), Vector::Ones(3), p), Error);
  EXPECT_THROW(Score(Vector::Ones(3), Vector::Zero(3), p), Error);
}

TEST(Score, MonotoneInCosineWhenScalePositive) {
  AttentionBackendParams p;
  p.a = 0.7;
  p.b = -0.3;
  Vector h(2);
  h << 1.0, 0.0;
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double ang = M_PI * (1.0 - i / 100.0);
    Vector q(2);
    q << std::cos(ang), std::sin(ang);
    const double P = Score(q, h, p).p;
    EXPECT_GT(P, prev);
    prev = P;
  }
}

TEST(BackendForward, SingletonWithZeroOutputWeight) {
  Rng rng(9);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  p.wo.setZero();
  Vector e = RandomVector(8, rng), q = RandomVector(8, rng);
  std::vector<Vector> enroll{e};
  EXPECT_DOUBLE_EQ(BackendForward(enroll, q, p, cfg).p(), Score(q, e, p).p);
}

TEST(BackendForward, RepeatedTestAsEnrollment) {
  Rng rng(10);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  p.wo.setZero();
  p.a = 1.0;
  p.b = 0.0;
  Vector q = RandomVector(8, rng);
  std::vector<Vector> enroll{q, q, q};
  EXPECT_NEAR(BackendForward(enroll, q, p, cfg).p(), 0.73106, 1e-5);
}

TEST(BackendForward, EnrollmentOrderInvariance) {
  Rng rng(11);
  const BackendConfig cfg = SmallConfig();
  for (int trial = 0; trial < 25; ++trial) {
    AttentionBackendParams p = InitParams(cfg, rng);
    std::vector<Vector> enroll = Rows(RandomMatrix(5, 8, rng));
    Vector q = RandomVector(8, rng);
    const double base = BackendForward(enroll, q, p, cfg).p();
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    rng.Shuffle(&perm);
    std::vector<Vector> shuffled;
    for (int i : perm) shuffled.push_back(enroll[i]);
    EXPECT_NEAR(BackendForward(shuffled, q, p, cfg).p(), base, 1e-12);
  }
}

TEST(BackendBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(12);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  ForwardTrace t = BackendForward(Rows(RandomMatrix(3, 8, rng)), RandomVector(8, rng), p, cfg);
  BackendGradients g = BackendBackward(t, 0.0, p, cfg);
  for (double v : g.params.Flatten()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.d_enroll.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_test.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BackendBackward, OffsetGradientIsLogisticDerivative) {
  Rng rng(13);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  ForwardTrace t = BackendForward(Rows(RandomMatrix(3, 8, rng)), RandomVector(8, rng), p, cfg);
  const double dP = -1.7;
  BackendGradients g = BackendBackward(t, dP, p, cfg);
  EXPECT_NEAR(g.params.b, dP * t.p() * (1.0 - t.p()), 1e-15);
  EXPECT_NEAR(g.params.a, dP * t.p() * (1.0 - t.p()) * t.score.cosine, 1e-15);
}

// Finite differences through P for every parameter and for both inputs.
TEST(BackendBackward, MatchesFiniteDifferencesOverSeeds) {
  const BackendConfig cfg = SmallConfig();
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Rng rng(seed);
    AttentionBackendParams p = InitParams(cfg, rng);
    // Smaller calibration so P is not saturated and all paths carry signal.
    p.a = 2.0 + rng.Uniform();
    p.b = -0.5;
    Matrix E = RandomMatrix(3, 8, rng);
    Vector q = RandomVector(8, rng);
    ForwardTrace t = BackendForward(Rows(E), q, p, cfg);
    BackendGradients g = BackendBackward(t, 1.0, p, cfg);

    std::vector<double> theta = p.Flatten();
    auto f_params = [&](std::span<const double> x) {
      AttentionBackendParams pp = p;
      pp.Unflatten(x);
      return BackendForward(Rows(E), q, pp, cfg).p();
    };
    EXPECT_LT(GradCheck(f_params, theta, g.params.Flatten(), 1e-5), 1e-4) << "seed " << seed;

    std::vector<double> e_flat(E.data(), E.data() + E.size());
    std::vector<double> de(g.d_enroll.data(), g.d_enroll.data() + g.d_enroll.size());
    auto f_enroll = [&](std::span<const double> x) {
      Matrix EE = Eigen::Map<const Matrix>(x.data(), 3, 8);
      return BackendForward(Rows(EE), q, p, cfg).p();
    };
    EXPECT_LT(GradCheck(f_enroll, e_flat, de, 1e-5), 1e-4) << "seed " << seed;

    std::vector<double> q_flat(q.data(), q.data() + q.size());
    std::vector<double> dq(g.d_test.data(), g.d_test.data() + g.d_test.size());
    auto f_test = [&](std::span<const double> x) {
      Vector qq = Eigen::Map<const Vector>(x.data(), 8);
      return BackendForward(Rows(E), qq, p, cfg).p();
    };
    EXPECT_LT(GradCheck(f_test, q_flat, dq, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(ParamsFile, RoundTripIsBitExact) {
  Rng rng(14);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  ByteWriter w;
  WriteParams(p, cfg, &w);
  ByteReader r(w.str());
  ParamsWithConfig back = ReadParams(&r);
  EXPECT_TRUE(r.AtEnd());
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.params.Flatten(), p.Flatten());
  ByteWriter w2;
  WriteParams(back.params, back.config, &w2);
  EXPECT_EQ(w.str(), w2.str());
}

TEST(ParamsFile, HeaderLayout) {
  Rng rng(15);
  const BackendConfig cfg = SmallConfig();
  AttentionBackendParams p = InitParams(cfg, rng);
  ByteWriter w;
  WriteParams(p, cfg, &w);
  const std::string &s = w.str();
  ASSERT_EQ(s.size(), 5 + 4 * 4 + 8 * p.NumScalars());
  EXPECT_EQ(s.substr(0, 5), "ATNB1");
  EXPECT_EQ(static_cast<unsigned char>(s[5]), 8);    // D, little-endian
  EXPECT_EQ(static_cast<unsigned char>(s[9]), 2);    // d1
  EXPECT_EQ(static_cast<unsigned char>(s[13]), 2);   // d2
  EXPECT_EQ(static_cast<unsigned char>(s[17]), 5);   // D2
  double first;
  std::memcpy(&first, s.data() + 21, 8);
  EXPECT_EQ(first, p.wq[0](0, 0));
}

TEST(ParamsFile, TruncationReportsOffset) {
  Rng rng(16);
  AttentionBackendParams p = InitParams(SmallConfig(), rng);
  ByteWriter w;
  WriteParams(p, SmallConfig(), &w);
  std::string cut = w.str().substr(0, 100);
  ByteReader r(cut);
  try {
    ReadParams(&r);
    FAIL();
  } catch (const FormatError &e) {
    EXPECT_LE(e.position(), 100u);
    EXPECT_GE(e.position(), 93u);
  }
}

}  // namespace
}  // namespace attnback
