// attnback/plda.hpp

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
   Gaussian PLDA.

   Generative model: e = mu + F h + eps, h ~ N(0, I_r), eps ~ N(0, Sigma).
   With Sigma_tot = F F^T + Sigma and Sigma_ac = F F^T, a pair is scored as

      s(e_i, e_j) = e_i^T Q e_i + e_j^T Q e_j + 2 e_i^T P e_j,
      P = Sigma_tot^-1 Sigma_ac B^-1,
      Q = Sigma_tot^-1 - B^-1,
      B = Sigma_tot - Sigma_ac Sigma_tot^-1 Sigma_ac,

   after centering by mu.  s equals twice the same/different-speaker
   log-likelihood ratio plus a constant that does not depend on the pair.

   F and Sigma are estimated by EM with mu fixed to the pooled mean.  For a
   speaker with n centered utterances summing to y:
      posterior precision  L = I + n F^T Sigma^-1 F
      posterior mean       m = L^-1 F^T Sigma^-1 y
   and the M-step is
      F     = (sum_s y_s m_s^T) (sum_s n_s (L_s^-1 + m_s m_s^T))^-1
      Sigma = (S - F sum_s m_s y_s^T) / N,
   where S is the total scatter of the centered data.
*/

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/embeddings.hpp"
#include "attnback/error.hpp"
#include "attnback/lda.hpp"
#include "attnback/numerics.hpp"

namespace attnback {

struct PldaModel {
  Vector mean;
  Matrix sigma_tot;
  Matrix sigma_ac;
  Matrix p;  // derived
  Matrix q;  // derived
  int latent_dim = 0;
  /// Applied to raw embeddings before everything else, in this order.
  bool length_norm = false;
  std::optional<LdaProjection> lda;

  int dim() const { return static_cast<int>(mean.size()); }
  int input_dim() const { return lda ? lda->input_dim() : dim(); }

  /// Recomputes P and Q from the two covariances.
  void ComputeScoringMatrices() {
    const int d = dim();
    ATTNBACK_CHECK(sigma_tot.rows() == d && sigma_tot.cols() == d && sigma_ac.rows() == d &&
                       sigma_ac.cols() == d,
                   "PLDA covariances do not match mean dim ", d);
    Eigen::LLT<Matrix> tot(sigma_tot);
    ATTNBACK_CHECK(tot.info() == Eigen::Success, "PLDA: total covariance is not positive definite");
    const Matrix tot_inv_ac = tot.solve(sigma_ac);
    const Matrix b = Symmetrize(sigma_tot - sigma_ac * tot_inv_ac);
    Eigen::LLT<Matrix> b_llt(b);
    ATTNBACK_CHECK(b_llt.info() == Eigen::Success,
                   "PLDA: within-class covariance is not positive definite");
    const Matrix eye = Matrix::Identity(d, d);
    const Matrix b_inv = Symmetrize(b_llt.solve(eye));
    p = Symmetrize(tot_inv_ac * b_inv);
    q = Symmetrize(tot.solve(eye) - b_inv);
  }

  /// Length norm (optional) then LDA (optional).
  Vector Prepare(const Vector &raw) const {
    ATTNBACK_CHECK(raw.size() == input_dim(), "PLDA input has dim ", raw.size(), ", model expects ",
                   input_dim());
    Vector x = raw;
    if (length_norm) {
      const double n = x.norm();
      ATTNBACK_CHECK(n > 0.0, "cannot length-normalize a zero vector");
      x *= std::sqrt(static_cast<double>(x.size())) / n;
    }
    if (lda) x = LdaApply(*lda, x);
    return x;
  }
};

inline PldaModel MakePldaModel(Vector mean, Matrix sigma_tot, Matrix sigma_ac, int latent_dim) {
  PldaModel m;
  m.mean = std::move(mean);
  m.sigma_tot = Symmetrize(sigma_tot);
  m.sigma_ac = Symmetrize(sigma_ac);
  m.latent_dim = latent_dim;
  m.ComputeScoringMatrices();
  return m;
}

inline double PldaScore(const PldaModel &model, const Vector &e_i, const Vector &e_j) {
  const Vector x = model.Prepare(e_i) - model.mean;
  const Vector y = model.Prepare(e_j) - model.mean;
  return x.dot(model.q * x) + y.dot(model.q * y) + 2.0 * x.dot(model.p * y);
}

enum class PldaEnrollMode {
  kMean,
  /// Length-normalize each enrollment embedding, then average.
  kConcatEmbeddings,
};

inline double PldaScoreMulti(const PldaModel &model, std::span<const Vector> enroll,
                             const Vector &test, PldaEnrollMode mode) {
  ATTNBACK_CHECK(!enroll.empty(), "empty enrollment list");
  if (enroll.size() == 1 && mode == PldaEnrollMode::kMean)
    return PldaScore(model, enroll.front(), test);
  Vector sum = Vector::Zero(enroll.front().size());
  for (const Vector &e : enroll) {
    ATTNBACK_CHECK(e.size() == sum.size(), "enrollment dims differ");
    if (mode == PldaEnrollMode::kConcatEmbeddings) {
      const double n = e.norm();
      ATTNBACK_CHECK(n > 0.0, "zero-norm enrollment embedding");
      sum += e / n;
    } else {
      sum += e;
    }
  }
  return PldaScore(model, sum / static_cast<double>(enroll.size()), test);
}

// ---------------------------------------------------------------------------
// EM estimation.

class PldaEstimator {
 public:
  /// Sufficient statistics of the centered pool; every speaker is used.
  PldaEstimator(const EmbeddingSet &pool, int latent_dim) : latent_dim_(latent_dim) {
    const int d = pool.dim();
    ATTNBACK_CHECK(latent_dim >= 1 && latent_dim <= d, "PLDA latent dim ", latent_dim,
                   " must be in [1, ", d, "]");
    int multi = 0;
    for (const auto &[spk, idx] : pool.speakers())
      if (idx.size() >= 2) ++multi;
    ATTNBACK_CHECK(multi >= 2, "PLDA needs at least 2 speakers with >= 2 utterances, have ", multi);
    mean_ = Vector::Zero(d);
    for (const EmbeddingRecord &r : pool.records()) mean_ += r.vector;
    num_utts_ = pool.size();
    mean_ /= static_cast<double>(num_utts_);
    scatter_ = Matrix::Zero(d, d);
    for (const auto &[spk, idx] : pool.speakers()) {
      Vector sum = Vector::Zero(d);
      for (std::size_t i : idx) {
        Vector x = pool[i].vector - mean_;
        scatter_.noalias() += x * x.transpose();
        sum += x;
      }
      counts_.push_back(static_cast<int>(idx.size()));
      sums_.push_back(std::move(sum));
    }
    InitFromData();
  }

  /// Sigma from the within-class covariance; F from the leading eigenvectors
  /// of the covariance of speaker means.
  void InitFromData() {
    const int d = dim();
    Matrix within = scatter_;
    Matrix between = Matrix::Zero(d, d);
    for (std::size_t s = 0; s < sums_.size(); ++s) {
      const Vector m = sums_[s] / counts_[s];
      within.noalias() -= counts_[s] * m * m.transpose();
      between.noalias() += m * m.transpose();
    }
    within /= static_cast<double>(num_utts_);
    between /= static_cast<double>(sums_.size());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Symmetrize(between));
    Matrix f(d, latent_dim_);
    for (int k = 0; k < latent_dim_; ++k) {
      const double lambda = std::max(eig.eigenvalues()[d - 1 - k], 1e-6 * between.trace() / d + 1e-12);
      f.col(k) = eig.eigenvectors().col(d - 1 - k) * std::sqrt(lambda);
    }
    SetParameters(f, Symmetrize(within));
  }

  void SetParameters(const Matrix &loading, const Matrix &residual) {
    ATTNBACK_CHECK(loading.rows() == dim() && loading.cols() == latent_dim_ &&
                       residual.rows() == dim() && residual.cols() == dim(),
                   "PLDA parameter shapes do not match (d=", dim(), ", r=", latent_dim_, ")");
    loading_ = loading;
    residual_ = Symmetrize(residual);
    Condition();
  }

  /// Total log-likelihood of the data under the current parameters.
  double LogLikelihood() const {
    const int d = dim();
    Eigen::LLT<Matrix> res(residual_);
    const double logdet_res = 2.0 * res.matrixLLT().diagonal().array().log().sum();
    const Matrix res_inv_f = res.solve(loading_);               // Sigma^-1 F
    const Matrix ftf = loading_.transpose() * res_inv_f;        // F^T Sigma^-1 F
    const double trace_term = res.solve(scatter_).trace();      // tr(Sigma^-1 S)
    const double n = static_cast<double>(num_utts_);
    double ll = -0.5 * (n * d * std::log(2.0 * std::numbers::pi) + n * logdet_res + trace_term);
    std::map<int, Eigen::LLT<Matrix>> post;
    for (std::size_t s = 0; s < sums_.size(); ++s) {
      const Eigen::LLT<Matrix> &llt = PosteriorFactor(&post, counts_[s], ftf);
      const Vector u = res_inv_f.transpose() * sums_[s];
      const double logdet_l = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      ll -= 0.5 * (logdet_l - u.dot(llt.solve(u)));
    }
    return ll;
  }

  void EmStep() {
    const int d = dim(), r = latent_dim_;
    Eigen::LLT<Matrix> res(residual_);
    const Matrix res_inv_f = res.solve(loading_);
    const Matrix ftf = loading_.transpose() * res_inv_f;
    Matrix cross = Matrix::Zero(d, r);   // sum_s y_s m_s^T
    Matrix second = Matrix::Zero(r, r);  // sum_s n_s E[h h^T]
    std::map<int, Eigen::LLT<Matrix>> post;
    std::map<int, Matrix> post_cov;
    const Matrix eye = Matrix::Identity(r, r);
    for (std::size_t s = 0; s < sums_.size(); ++s) {
      const Eigen::LLT<Matrix> &llt = PosteriorFactor(&post, counts_[s], ftf);
      auto it = post_cov.find(counts_[s]);
      if (it == post_cov.end()) it = post_cov.emplace(counts_[s], llt.solve(eye)).first;
      const Vector m = llt.solve(Vector(res_inv_f.transpose() * sums_[s]));
      cross.noalias() += sums_[s] * m.transpose();
      second.noalias() += counts_[s] * (it->second + m * m.transpose());
    }
    loading_ = Symmetrize(second).llt().solve(Matrix(cross.transpose())).transpose();
    residual_ = Symmetrize(scatter_ - loading_ * cross.transpose()) / static_cast<double>(num_utts_);
    Condition();
  }

  /// Runs `iters` EM iterations, checking that the log-likelihood never
  /// drops by more than 1e-8 per utterance.
  std::vector<double> Run(int iters) {
    std::vector<double> trace{LogLikelihood()};
    for (int it = 0; it < iters; ++it) {
      EmStep();
      trace.push_back(LogLikelihood());
      const double change = (trace.back() - trace[trace.size() - 2]) / static_cast<double>(num_utts_);
      ATTNBACK_CHECK(change >= -1e-8, "PLDA EM: log-likelihood decreased by ", -change,
                     " per utterance at iteration ", it + 1);
    }
    return trace;
  }

  PldaModel Model() const {
    const Matrix ac = loading_ * loading_.transpose();
    return MakePldaModel(mean_, ac + residual_, ac, latent_dim_);
  }

  int dim() const { return static_cast<int>(mean_.size()); }
  const Matrix &loading() const { return loading_; }
  const Matrix &residual() const { return residual_; }
  const Vector &mean() const { return mean_; }
  std::size_t num_utts() const { return num_utts_; }
  double ridge_added() const { return ridge_added_; }

 private:
  const Eigen::LLT<Matrix> &PosteriorFactor(std::map<int, Eigen::LLT<Matrix>> *cache, int n,
                                            const Matrix &ftf) const {
    auto it = cache->find(n);
    if (it == cache->end()) {
      Matrix l = Matrix::Identity(latent_dim_, latent_dim_) + n * ftf;
      it = cache->emplace(n, Eigen::LLT<Matrix>(Symmetrize(l))).first;
    }
    return it->second;
  }

  /// Adds a 1e-8 * trace/d ridge to Sigma until it factors.
  void Condition() {
    const int d = dim();
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::LLT<Matrix> llt(residual_);
      if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) return;
      double ridge = 1e-8 * std::max(residual_.trace() / d, 1e-12) * std::pow(10.0, attempt);
      residual_ += ridge * Matrix::Identity(d, d);
      ridge_added_ += ridge;
    }
    throw Error("PLDA: residual covariance could not be conditioned");
  }

  int latent_dim_;
  Vector mean_;
  Matrix scatter_;
  std::vector<int> counts_;
  std::vector<Vector> sums_;
  std::size_t num_utts_ = 0;
  Matrix loading_, residual_;
  double ridge_added_ = 0.0;
};

struct PldaFitResult {
  PldaModel model;
  std::vector<double> log_likelihood;  // initial, then after each iteration
};

inline PldaFitResult PldaFit(const EmbeddingSet &pool, int latent_dim, int iters) {
  ATTNBACK_CHECK(iters >= 0, "PLDA iterations must be >= 0");
  PldaEstimator est(pool, latent_dim);
  PldaFitResult out;
  out.log_likelihood = est.Run(iters);
  out.model = est.Model();
  return out;
}

// ---------------------------------------------------------------------------
// PLDA1: "PLDA1", u32 d, u32 latent_dim, u32 length_norm, u32 has_lda,
// [LDA01 block], then mean, Sigma_tot, Sigma_ac as f64 (row-major).

inline constexpr std::string_view kPldaMagic = "PLDA1";

inline std::string EncodePlda(const PldaModel &m) {
  ByteWriter w;
  w.Magic(kPldaMagic);
  w.U32(static_cast<std::uint32_t>(m.dim()));
  w.U32(static_cast<std::uint32_t>(m.latent_dim));
  w.U32(m.length_norm ? 1u : 0u);
  w.U32(m.lda ? 1u : 0u);
  if (m.lda) WriteLda(*m.lda, &w);
  w.F64s({m.mean.data(), static_cast<std::size_t>(m.mean.size())});
  w.F64s({m.sigma_tot.data(), static_cast<std::size_t>(m.sigma_tot.size())});
  w.F64s({m.sigma_ac.data(), static_cast<std::size_t>(m.sigma_ac.size())});
  return w.Release();
}

inline PldaModel DecodePlda(std::string_view bytes) {
  ByteReader r(bytes);
  r.ExpectMagic(kPldaMagic, "PLDA model");
  const std::size_t at = r.offset();
  const std::uint32_t d = r.U32("PLDA dim");
  const std::uint32_t latent = r.U32("PLDA latent dim");
  const std::uint32_t length_norm = r.U32("length-norm flag");
  const std::uint32_t has_lda = r.U32("LDA flag");
  if (d == 0 || d > (1u << 16) || latent > d || length_norm > 1 || has_lda > 1)
    throw FormatError(detail::Concat("invalid PLDA header at byte offset ", at), at);
  PldaModel m;
  m.latent_dim = static_cast<int>(latent);
  m.length_norm = length_norm == 1;
  if (has_lda) {
    const std::size_t lda_at = r.offset();
    m.lda = ReadLda(&r);
    if (m.lda->output_dim() != static_cast<int>(d))
      throw FormatError(detail::Concat("LDA output dim does not match PLDA dim at byte offset ",
                                       lda_at),
                        lda_at);
  }
  m.mean.resize(d);
  m.sigma_tot.resize(d, d);
  m.sigma_ac.resize(d, d);
  r.F64s({m.mean.data(), static_cast<std::size_t>(m.mean.size())}, "PLDA mean");
  r.F64s({m.sigma_tot.data(), static_cast<std::size_t>(m.sigma_tot.size())}, "total covariance");
  r.F64s({m.sigma_ac.data(), static_cast<std::size_t>(m.sigma_ac.size())}, "across-class covariance");
  if (!r.AtEnd())
    throw FormatError(detail::Concat("trailing bytes at byte offset ", r.offset()), r.offset());
  m.ComputeScoringMatrices();
  return m;
}

inline void SavePlda(const PldaModel &m, const std::filesystem::path &path) {
  WriteFileAtomic(path, EncodePlda(m));
}

inline PldaModel LoadPlda(const std::filesystem::path &path) {
  return DecodePlda(ReadFileBytes(path));
}

}  // namespace attnback
