// attnback/lda.hpp

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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/embeddings.hpp"
#include "attnback/error.hpp"
#include "attnback/numerics.hpp"

namespace attnback {

struct LdaProjection {
  Matrix w;            // d_in x d_out; columns by descending eigenvalue
  Vector mean;         // d_in
  Vector eigenvalues;  // d_out, descending
  double ridge = 0.0;  // added to the within-class covariance, 0 if none

  int input_dim() const { return static_cast<int>(w.rows()); }
  int output_dim() const { return static_cast<int>(w.cols()); }
};

/// Within- and between-class covariances (both normalized by the number of
/// utterances) over speakers that have at least two utterances.
struct ClassScatter {
  Vector mean;
  Matrix within;
  Matrix between;
  int num_speakers = 0;
  std::size_t num_utts = 0;
};

inline ClassScatter ComputeClassScatter(const EmbeddingSet &pool) {
  const int d = pool.dim();
  ClassScatter sc;
  sc.mean = Vector::Zero(d);
  std::vector<const std::vector<std::size_t> *> groups;
  for (const auto &[spk, idx] : pool.speakers())
    if (idx.size() >= 2) groups.push_back(&idx);
  ATTNBACK_CHECK(groups.size() >= 2, "need at least 2 speakers with >= 2 utterances, have ",
                 groups.size());
  for (const auto *g : groups)
    for (std::size_t i : *g) sc.mean += pool[i].vector;
  for (const auto *g : groups) sc.num_utts += g->size();
  sc.mean /= static_cast<double>(sc.num_utts);
  sc.within = Matrix::Zero(d, d);
  sc.between = Matrix::Zero(d, d);
  for (const auto *g : groups) {
    Vector m = Vector::Zero(d);
    for (std::size_t i : *g) m += pool[i].vector;
    m /= static_cast<double>(g->size());
    for (std::size_t i : *g) {
      Vector x = pool[i].vector - m;
      sc.within.noalias() += x * x.transpose();
    }
    Vector dm = m - sc.mean;
    sc.between.noalias() += static_cast<double>(g->size()) * dm * dm.transpose();
  }
  sc.within /= static_cast<double>(sc.num_utts);
  sc.between /= static_cast<double>(sc.num_utts);
  sc.num_speakers = static_cast<int>(groups.size());
  return sc;
}

/**
   Generalized eigenproblem between * w = lambda * within * w, solved by
   whitening the within-class covariance (Cholesky factor L), then a
   symmetric eigendecomposition of L^-1 between L^-T.  The projection
   satisfies W^T within W = I.
*/
inline LdaProjection LdaFit(const EmbeddingSet &pool, int d_out) {
  ClassScatter sc = ComputeClassScatter(pool);
  const int d = pool.dim();
  ATTNBACK_CHECK(d_out >= 1 && d_out <= d && d_out <= sc.num_speakers - 1, "LDA output dim ",
                 d_out, " must be in [1, min(", d, ", ", sc.num_speakers - 1, ")]");
  LdaProjection proj;
  proj.mean = sc.mean;
  Eigen::SelfAdjointEigenSolver<Matrix> within_eig(sc.within, Eigen::EigenvaluesOnly);
  if (within_eig.eigenvalues()[0] <= 1e-10 * within_eig.eigenvalues()[d - 1]) {
    proj.ridge = 1e-6 * sc.within.trace() / d;
    if (proj.ridge <= 0.0) proj.ridge = 1e-6;
    sc.within += proj.ridge * Matrix::Identity(d, d);
  }
  Eigen::LLT<Matrix> llt(sc.within);
  ATTNBACK_CHECK(llt.info() == Eigen::Success, "LDA: within-class covariance is not positive definite");
  const Matrix L = llt.matrixL();
  Matrix tmp = L.triangularView<Eigen::Lower>().solve(sc.between);
  Matrix c = L.triangularView<Eigen::Lower>().solve(Matrix(tmp.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Symmetrize(c));
  ATTNBACK_CHECK(eig.info() == Eigen::Success, "LDA: eigendecomposition failed");
  Matrix u(d, d_out);
  proj.eigenvalues.resize(d_out);
  for (int k = 0; k < d_out; ++k) {
    u.col(k) = eig.eigenvectors().col(d - 1 - k);
    proj.eigenvalues[k] = eig.eigenvalues()[d - 1 - k];
  }
  proj.w = L.transpose().triangularView<Eigen::Upper>().solve(u);
  return proj;
}

inline Vector LdaApply(const LdaProjection &proj, const Vector &x) {
  ATTNBACK_CHECK(x.size() == proj.mean.size(), "LDA input has dim ", x.size(), ", expected ",
                 proj.mean.size());
  return proj.w.transpose() * (x - proj.mean);
}

inline EmbeddingSet LdaApply(const LdaProjection &proj, const EmbeddingSet &set) {
  EmbeddingSet out(proj.output_dim());
  for (const EmbeddingRecord &r : set.records()) out.Add(r.speaker, r.utterance, LdaApply(proj, r.vector));
  return out;
}

// LDA01: "LDA01", u32 d_in, u32 d_out, f64 ridge, then W (row-major), mean,
// eigenvalues as f64.

inline constexpr std::string_view kLdaMagic = "LDA01";

inline void WriteLda(const LdaProjection &proj, ByteWriter *w) {
  w->Magic(kLdaMagic);
  w->U32(static_cast<std::uint32_t>(proj.input_dim()));
  w->U32(static_cast<std::uint32_t>(proj.output_dim()));
  w->F64(proj.ridge);
  w->F64s({proj.w.data(), static_cast<std::size_t>(proj.w.size())});
  w->F64s({proj.mean.data(), static_cast<std::size_t>(proj.mean.size())});
  w->F64s({proj.eigenvalues.data(), static_cast<std::size_t>(proj.eigenvalues.size())});
}

inline LdaProjection ReadLda(ByteReader *r) {
  r->ExpectMagic(kLdaMagic, "LDA projection");
  const std::size_t at = r->offset();
  const std::uint32_t d_in = r->U32("LDA input dim");
  const std::uint32_t d_out = r->U32("LDA output dim");
  if (d_in == 0 || d_out == 0 || d_out > d_in || d_in > (1u << 16))
    throw FormatError(detail::Concat("invalid LDA dims ", d_in, "x", d_out, " at byte offset ", at), at);
  LdaProjection p;
  p.ridge = r->F64("LDA ridge");
  p.w.resize(d_in, d_out);
  p.mean.resize(d_in);
  p.eigenvalues.resize(d_out);
  r->F64s({p.w.data(), static_cast<std::size_t>(p.w.size())}, "LDA matrix");
  r->F64s({p.mean.data(), static_cast<std::size_t>(p.mean.size())}, "LDA mean");
  r->F64s({p.eigenvalues.data(), static_cast<std::size_t>(p.eigenvalues.size())}, "LDA eigenvalues");
  return p;
}

inline void SaveLda(const LdaProjection &proj, const std::filesystem::path &path) {
  ByteWriter w;
  WriteLda(proj, &w);
  WriteFileAtomic(path, w.str());
}

inline LdaProjection LoadLda(const std::filesystem::path &path) {
  const std::string bytes = ReadFileBytes(path);
  ByteReader r(bytes);
  LdaProjection p = ReadLda(&r);
  if (!r.AtEnd())
    throw FormatError(detail::Concat("trailing bytes at byte offset ", r.offset()), r.offset());
  return p;
}

}  // namespace attnback
