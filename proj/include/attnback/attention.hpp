// attnback/attention.hpp

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
   Attention back-end for multi-enrollment speaker verification.

   A speaker's K enrollment embeddings are stacked into E (K x D) and passed
   through two blocks:

     1. multi-head scaled-dot self-attention with a residual connection,
           H = Concat(H_1 .. H_d1) Wo + E,
           H_i = Softmax(Q_i K_i^T / sqrt(D/d1)) V_i,
        where Q_i = E Wq_i, K_i = E Wk_i, V_i = E Wv_i;

     2. multi-head feed-forward self-attention that pools the rows of H,
           h = Concat(h_1 .. h_d2),
           h_j = Softmax(v_j^T tanh(W_j Ht_j^T)) Ht_j,
        where Ht_j is the j-th column block of H (K x D/d2).

   A test embedding q is then scored as P = sigmoid(a cos(q, h) + b).

   Nothing in either block depends on row position, so the score is
   invariant to the order of the enrollment list.
*/

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/error.hpp"
#include "attnback/numerics.hpp"
#include "attnback/rng.hpp"

namespace attnback {

struct BackendConfig {
  int dim = 512;          // D
  int sdsa_heads = 4;     // d1
  int ffsa_heads = 4;     // d2
  int ffsa_hidden = 64;   // D2

  int sdsa_head_dim() const { return dim / sdsa_heads; }
  int ffsa_head_dim() const { return dim / ffsa_heads; }

  void Validate() const {
    ATTNBACK_CHECK(dim >= 1 && sdsa_heads >= 1 && ffsa_heads >= 1 && ffsa_hidden >= 1,
                   "backend config: all sizes must be >= 1 (D=", dim, ", d1=", sdsa_heads,
                   ", d2=", ffsa_heads, ", D2=", ffsa_hidden, ")");
    ATTNBACK_CHECK(dim % sdsa_heads == 0, "backend config: SDSA head count ", sdsa_heads,
                   " does not divide D=", dim);
    ATTNBACK_CHECK(dim % ffsa_heads == 0, "backend config: FFSA head count ", ffsa_heads,
                   " does not divide D=", dim);
  }

  bool operator==(const BackendConfig &) const = default;
};

/// Lower bound applied to the calibration scale after every training step.
inline constexpr double kMinCalibrationScale = 1e-3;

/// All trainable tensors.  The same struct doubles as the gradient container.
struct AttentionBackendParams {
  std::vector<Matrix> wq, wk, wv;  // d1 each, D x D/d1
  Matrix wo;                       // D x D
  std::vector<Matrix> ffsa_w;      // d2 each, D2 x D/d2
  std::vector<Vector> ffsa_v;      // d2 each, length D2
  double a = 0.0;
  double b = 0.0;

  static AttentionBackendParams Zeros(const BackendConfig &config) {
    config.Validate();
    AttentionBackendParams p;
    const int dh = config.sdsa_head_dim(), dg = config.ffsa_head_dim();
    for (int i = 0; i < config.sdsa_heads; ++i) {
      p.wq.push_back(Matrix::Zero(config.dim, dh));
      p.wk.push_back(Matrix::Zero(config.dim, dh));
      p.wv.push_back(Matrix::Zero(config.dim, dh));
    }
    p.wo = Matrix::Zero(config.dim, config.dim);
    for (int j = 0; j < config.ffsa_heads; ++j) {
      p.ffsa_w.push_back(Matrix::Zero(config.ffsa_hidden, dg));
      p.ffsa_v.push_back(Vector::Zero(config.ffsa_hidden));
    }
    return p;
  }

  /// Visits every tensor as a flat span, in declaration (= file) order:
  /// per SDSA head Wq, Wk, Wv; Wo; per FFSA head W, v; a; b.
  template <typename F>
  void ForEachTensor(F &&f) {
    for (std::size_t i = 0; i < wq.size(); ++i) {
      f(std::span<double>(wq[i].data(), wq[i].size()));
      f(std::span<double>(wk[i].data(), wk[i].size()));
      f(std::span<double>(wv[i].data(), wv[i].size()));
    }
    f(std::span<double>(wo.data(), wo.size()));
    for (std::size_t j = 0; j < ffsa_w.size(); ++j) {
      f(std::span<double>(ffsa_w[j].data(), ffsa_w[j].size()));
      f(std::span<double>(ffsa_v[j].data(), ffsa_v[j].size()));
    }
    f(std::span<double>(&a, 1));
    f(std::span<double>(&b, 1));
  }

  template <typename F>
  void ForEachTensor(F &&f) const {
    const_cast<AttentionBackendParams *>(this)->ForEachTensor(
        [&f](std::span<double> s) { f(std::span<const double>(s.data(), s.size())); });
  }

  std::size_t NumScalars() const {
    std::size_t n = 0;
    ForEachTensor([&n](std::span<const double> s) { n += s.size(); });
    return n;
  }

  std::vector<double> Flatten() const {
    std::vector<double> out;
    out.reserve(NumScalars());
    ForEachTensor([&out](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
    return out;
  }

  void Unflatten(std::span<const double> flat) {
    ATTNBACK_CHECK(flat.size() == NumScalars(), "parameter vector has ", flat.size(),
                   " entries, expected ", NumScalars());
    std::size_t at = 0;
    ForEachTensor([&](std::span<double> s) {
      for (double &v : s) v = flat[at++];
    });
  }

  /// this += scale * other (shapes must match).
  void AddScaled(const AttentionBackendParams &other, double scale) {
    std::vector<double> src = other.Flatten();
    ATTNBACK_CHECK(src.size() == NumScalars(), "AddScaled: parameter shape mismatch");
    std::size_t at = 0;
    ForEachTensor([&](std::span<double> s) {
      for (double &v : s) v += scale * src[at++];
    });
  }

  bool AllFinite() const {
    bool ok = true;
    ForEachTensor([&ok](std::span<const double> s) {
      for (double v : s) ok = ok && std::isfinite(v);
    });
    return ok;
  }

  bool operator==(const AttentionBackendParams &other) const {
    return Flatten() == other.Flatten();
  }
};

using ParamGradients = AttentionBackendParams;

/// Fan-in uniform initialization; a = 10, b = -5.  Tensors are drawn in
/// declaration order.
inline AttentionBackendParams InitParams(const BackendConfig &config, Rng &rng) {
  AttentionBackendParams p = AttentionBackendParams::Zeros(config);
  auto fill = [&rng](std::span<double> s, int fan_in) {
    const double bound = std::sqrt(1.0 / fan_in);
    for (double &v : s) v = rng.Uniform(-bound, bound);
  };
  for (int i = 0; i < config.sdsa_heads; ++i) {
    fill({p.wq[i].data(), static_cast<std::size_t>(p.wq[i].size())}, config.dim);
    fill({p.wk[i].data(), static_cast<std::size_t>(p.wk[i].size())}, config.dim);
    fill({p.wv[i].data(), static_cast<std::size_t>(p.wv[i].size())}, config.dim);
  }
  fill({p.wo.data(), static_cast<std::size_t>(p.wo.size())}, config.dim);
  for (int j = 0; j < config.ffsa_heads; ++j) {
    fill({p.ffsa_w[j].data(), static_cast<std::size_t>(p.ffsa_w[j].size())},
         config.ffsa_head_dim());
    fill({p.ffsa_v[j].data(), static_cast<std::size_t>(p.ffsa_v[j].size())},
         config.ffsa_hidden);
  }
  p.a = 10.0;
  p.b = -5.0;
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass.

struct SdsaHeadTrace {
  Matrix q, k, v;  // K x D/d1
  Matrix attn;     // K x K, rows sum to one
};

struct SdsaTrace {
  Matrix input;    // E
  std::vector<SdsaHeadTrace> heads;
  Matrix concat;   // K x D
  Matrix output;   // H
};

struct FfsaHeadTrace {
  Matrix slice;     // Ht_j, K x D/d2
  Matrix hidden;    // tanh(W_j Ht_j^T), D2 x K
  Vector weights;   // length K, convex
};

struct FfsaTrace {
  std::vector<FfsaHeadTrace> heads;
  Vector output;    // h
};

struct EnrollmentTrace {
  SdsaTrace sdsa;
  FfsaTrace ffsa;
  const Vector &representative() const { return ffsa.output; }
};

struct ScoreTrace {
  Vector q, h;
  double q_norm = 0.0, h_norm = 0.0;
  double cosine = 0.0;
  double s = 0.0;
  double p = 0.0;
};

struct ForwardTrace {
  EnrollmentTrace enroll;
  ScoreTrace score;
  double p() const { return score.p; }
};

inline void CheckParamShapes(const AttentionBackendParams &params, const BackendConfig &config) {
  ATTNBACK_CHECK(params.wq.size() == static_cast<std::size_t>(config.sdsa_heads) &&
                     params.ffsa_w.size() == static_cast<std::size_t>(config.ffsa_heads) &&
                     params.wo.rows() == config.dim,
                 "attention parameters do not match config (D=", config.dim,
                 ", d1=", config.sdsa_heads, ", d2=", config.ffsa_heads, ")");
}

inline SdsaTrace SdsaForward(const Matrix &E, const AttentionBackendParams &params,
                             const BackendConfig &config) {
  ATTNBACK_CHECK(E.rows() >= 1, "sdsa: need at least one enrollment row");
  ATTNBACK_CHECK(E.cols() == config.dim, "sdsa: input is ", ShapeString(E),
                 " but D=", config.dim);
  CheckParamShapes(params, config);
  const int dh = config.sdsa_head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  SdsaTrace t;
  t.input = E;
  t.concat.resize(E.rows(), config.dim);
  t.heads.resize(config.sdsa_heads);
  for (int i = 0; i < config.sdsa_heads; ++i) {
    SdsaHeadTrace &head = t.heads[i];
    head.q = E * params.wq[i];
    head.k = E * params.wk[i];
    head.v = E * params.wv[i];
    Matrix logits = scale * (head.q * head.k.transpose());
    head.attn = SoftmaxRows(logits);
    t.concat.middleCols(i * dh, dh) = head.attn * head.v;
  }
  t.output = t.concat * params.wo + E;
  return t;
}

inline FfsaTrace FfsaForward(const Matrix &H, const AttentionBackendParams &params,
                             const BackendConfig &config) {
  ATTNBACK_CHECK(H.rows() >= 1 && H.cols() == config.dim, "ffsa: input is ",
                 ShapeString(H), " but D=", config.dim);
  CheckParamShapes(params, config);
  const int dg = config.ffsa_head_dim();
  FfsaTrace t;
  t.output.resize(config.dim);
  t.heads.resize(config.ffsa_heads);
  for (int j = 0; j < config.ffsa_heads; ++j) {
    FfsaHeadTrace &head = t.heads[j];
    head.slice = H.middleCols(j * dg, dg);
    head.hidden = TanhElem(params.ffsa_w[j] * head.slice.transpose());
    Vector logits = head.hidden.transpose() * params.ffsa_v[j];
    head.weights = Softmax(logits);
    t.output.segment(j * dg, dg) = head.slice.transpose() * head.weights;
  }
  return t;
}

inline ScoreTrace Score(const Vector &q, const Vector &h, const AttentionBackendParams &params) {
  ATTNBACK_CHECK(q.size() == h.size(), "score: test has dim ", q.size(),
                 " but representative has dim ", h.size());
  ScoreTrace t;
  t.q = q;
  t.h = h;
  t.q_norm = q.norm();
  t.h_norm = h.norm();
  ATTNBACK_CHECK(t.q_norm > 0.0 && t.h_norm > 0.0,
                 "score: zero-norm embedding (degenerate input)");
  t.cosine = q.dot(h) / (t.q_norm * t.h_norm);
  t.s = params.a * t.cosine + params.b;
  t.p = Sigmoid(t.s);
  return t;
}

inline Matrix StackRows(std::span<const Vector> rows) {
  ATTNBACK_CHECK(!rows.empty(), "empty enrollment list");
  Matrix E(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    ATTNBACK_CHECK(rows[k].size() == E.cols(), "enrollment embedding ", k, " has dim ",
                   rows[k].size(), ", expected ", E.cols());
    E.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  }
  return E;
}

/// SDSA followed by FFSA: enrollment matrix -> representative vector h.
inline EnrollmentTrace Aggregate(const Matrix &E, const AttentionBackendParams &params,
                                 const BackendConfig &config) {
  EnrollmentTrace t;
  t.sdsa = SdsaForward(E, params, config);
  t.ffsa = FfsaForward(t.sdsa.output, params, config);
  return t;
}

inline ForwardTrace BackendForward(std::span<const Vector> enroll, const Vector &test,
                                   const AttentionBackendParams &params,
                                   const BackendConfig &config) {
  ATTNBACK_CHECK(test.size() == config.dim, "test embedding has dim ", test.size(),
                 ", expected ", config.dim);
  ForwardTrace t;
  t.enroll = Aggregate(StackRows(enroll), params, config);
  t.score = Score(test, t.enroll.representative(), params);
  return t;
}

// ---------------------------------------------------------------------------
// Backward pass.  Gradients accumulate (+=) into the supplied container.

struct ScoreGradients {
  Vector d_q, d_h;
};

inline ScoreGradients ScoreBackward(const ScoreTrace &t, double d_p,
                                    const AttentionBackendParams &params,
                                    ParamGradients *grads) {
  const double d_s = d_p * t.p * (1.0 - t.p);
  grads->a += d_s * t.cosine;
  grads->b += d_s;
  const double d_cos = d_s * params.a;
  const double inv = 1.0 / (t.q_norm * t.h_norm);
  ScoreGradients out;
  out.d_h = d_cos * (t.q * inv - t.cosine * t.h / (t.h_norm * t.h_norm));
  out.d_q = d_cos * (t.h * inv - t.cosine * t.q / (t.q_norm * t.q_norm));
  return out;
}

/// Returns dL/dH given dL/dh.
inline Matrix FfsaBackward(const FfsaTrace &t, const Vector &d_h,
                           const AttentionBackendParams &params, const BackendConfig &config,
                           ParamGradients *grads) {
  const int dg = config.ffsa_head_dim();
  const Eigen::Index K = t.heads.front().slice.rows();
  Matrix d_H(K, config.dim);
  for (int j = 0; j < config.ffsa_heads; ++j) {
    const FfsaHeadTrace &head = t.heads[j];
    const Vector d_hj = d_h.segment(j * dg, dg);
    // h_j = slice^T w
    Vector d_w = head.slice * d_hj;
    Matrix d_slice = head.weights * d_hj.transpose();
    // softmax
    const double mean = head.weights.dot(d_w);
    Vector d_logits = head.weights.cwiseProduct((d_w.array() - mean).matrix());
    // logits = hidden^T v
    grads->ffsa_v[j] += head.hidden * d_logits;
    Matrix d_hidden = params.ffsa_v[j] * d_logits.transpose();
    Matrix d_pre = d_hidden.cwiseProduct(
        (1.0 - head.hidden.array().square()).matrix());
    // pre = W slice^T
    grads->ffsa_w[j] += d_pre * head.slice;
    d_slice += d_pre.transpose() * params.ffsa_w[j];
    d_H.middleCols(j * dg, dg) = d_slice;
  }
  return d_H;
}

/// Returns dL/dE given dL/dH.
inline Matrix SdsaBackward(const SdsaTrace &t, const Matrix &d_H,
                           const AttentionBackendParams &params, const BackendConfig &config,
                           ParamGradients *grads) {
  const int dh = config.sdsa_head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix &E = t.input;
  Matrix d_E = d_H;  // residual
  grads->wo += t.concat.transpose() * d_H;
  Matrix d_concat = d_H * params.wo.transpose();
  for (int i = 0; i < config.sdsa_heads; ++i) {
    const SdsaHeadTrace &head = t.heads[i];
    Matrix d_head = d_concat.middleCols(i * dh, dh);
    Matrix d_attn = d_head * head.v.transpose();
    Matrix d_v = head.attn.transpose() * d_head;
    Vector row_dot = d_attn.cwiseProduct(head.attn).rowwise().sum();
    Matrix d_logits = head.attn.cwiseProduct(
        (d_attn.colwise() - row_dot));
    Matrix d_q = scale * (d_logits * head.k);
    Matrix d_k = scale * (d_logits.transpose() * head.q);
    grads->wq[i] += E.transpose() * d_q;
    grads->wk[i] += E.transpose() * d_k;
    grads->wv[i] += E.transpose() * d_v;
    d_E += d_q * params.wq[i].transpose() + d_k * params.wk[i].transpose() +
           d_v * params.wv[i].transpose();
  }
  return d_E;
}

inline Matrix AggregateBackward(const EnrollmentTrace &t, const Vector &d_h,
                                const AttentionBackendParams &params,
                                const BackendConfig &config, ParamGradients *grads) {
  Matrix d_H = FfsaBackward(t.ffsa, d_h, params, config, grads);
  return SdsaBackward(t.sdsa, d_H, params, config, grads);
}

struct BackendGradients {
  ParamGradients params;
  Matrix d_enroll;  // K x D
  Vector d_test;
};

inline BackendGradients BackendBackward(const ForwardTrace &t, double d_p,
                                        const AttentionBackendParams &params,
                                        const BackendConfig &config) {
  BackendGradients g;
  g.params = ParamGradients::Zeros(config);
  ScoreGradients sg = ScoreBackward(t.score, d_p, params, &g.params);
  g.d_test = sg.d_q;
  g.d_enroll = AggregateBackward(t.enroll, sg.d_h, params, config, &g.params);
  return g;
}

// ---------------------------------------------------------------------------
// Parameter file: "ATNB1", D d1 d2 D2 as u32, then every tensor (declaration
// order, row-major) as f64.  All little-endian.

inline constexpr std::string_view kParamsMagic = "ATNB1";

inline void WriteParams(const AttentionBackendParams &params, const BackendConfig &config,
                        ByteWriter *w) {
  config.Validate();
  CheckParamShapes(params, config);
  w->Magic(kParamsMagic);
  w->U32(static_cast<std::uint32_t>(config.dim));
  w->U32(static_cast<std::uint32_t>(config.sdsa_heads));
  w->U32(static_cast<std::uint32_t>(config.ffsa_heads));
  w->U32(static_cast<std::uint32_t>(config.ffsa_hidden));
  params.ForEachTensor([w](std::span<const double> s) { w->F64s(s); });
}

struct ParamsWithConfig {
  BackendConfig config;
  AttentionBackendParams params;
};

inline ParamsWithConfig ReadParams(ByteReader *r) {
  r->ExpectMagic(kParamsMagic, "attention parameters");
  ParamsWithConfig out;
  const std::size_t header_at = r->offset();
  out.config.dim = static_cast<int>(r->U32("D"));
  out.config.sdsa_heads = static_cast<int>(r->U32("d1"));
  out.config.ffsa_heads = static_cast<int>(r->U32("d2"));
  out.config.ffsa_hidden = static_cast<int>(r->U32("D2"));
  try {
    out.config.Validate();
  } catch (const Error &e) {
    throw FormatError(detail::Concat("invalid config header at byte offset ", header_at, ": ",
                                     e.what()),
                      header_at);
  }
  out.params = AttentionBackendParams::Zeros(out.config);
  out.params.ForEachTensor([r](std::span<double> s) { r->F64s(s, "parameter tensor"); });
  return out;
}

inline void SaveParams(const AttentionBackendParams &params, const BackendConfig &config,
                       const std::filesystem::path &path) {
  ByteWriter w;
  WriteParams(params, config, &w);
  WriteFileAtomic(path, w.str());
}

inline ParamsWithConfig LoadParams(const std::filesystem::path &path) {
  const std::string bytes = ReadFileBytes(path);
  ByteReader r(bytes);
  return ReadParams(&r);
}

}  // namespace attnback
