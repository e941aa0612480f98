// attnback/embeddings.hpp

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
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/error.hpp"
#include "attnback/numerics.hpp"

namespace attnback {

struct EmbeddingRecord {
  std::string speaker;
  std::string utterance;
  Vector vector;

  bool operator==(const EmbeddingRecord &o) const {
    return speaker == o.speaker && utterance == o.utterance && vector == o.vector;
  }
};

/// Labeled embeddings keyed by (speaker-id, utterance-id).  Records keep
/// insertion order; speakers() is sorted by id.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(int dim = 0) : dim_(dim) {
    ATTNBACK_CHECK(dim >= 0, "embedding dim must be non-negative");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EmbeddingRecord> &records() const { return records_; }
  const EmbeddingRecord &operator[](std::size_t i) const { return records_[i]; }

  void Add(std::string speaker, std::string utterance, Vector vector) {
    ATTNBACK_CHECK(vector.size() == dim_, "embedding ", speaker, "/", utterance, " has dim ",
                   vector.size(), ", set dim is ", dim_);
    ATTNBACK_CHECK(vector.allFinite(), "embedding ", speaker, "/", utterance,
                   " has non-finite values");
    auto key = std::make_pair(speaker, utterance);
    ATTNBACK_CHECK(!by_key_.count(key), "duplicate embedding key ", speaker, "/", utterance);
    const std::size_t idx = records_.size();
    by_key_.emplace(std::move(key), idx);
    by_utt_[utterance].push_back(idx);
    by_speaker_[speaker].push_back(idx);
    records_.push_back({std::move(speaker), std::move(utterance), std::move(vector)});
  }

  std::optional<std::size_t> Find(const std::string &speaker, const std::string &utterance) const {
    auto it = by_key_.find({speaker, utterance});
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  /// Lookup by utterance id alone; nullopt if absent, error if ambiguous.
  std::optional<std::size_t> FindUtterance(const std::string &utterance) const {
    auto it = by_utt_.find(utterance);
    if (it == by_utt_.end()) return std::nullopt;
    ATTNBACK_CHECK(it->second.size() == 1, "utterance id ", utterance,
                   " is shared by several speakers");
    return it->second.front();
  }

  const std::map<std::string, std::vector<std::size_t>> &speakers() const { return by_speaker_; }

  bool operator==(const EmbeddingSet &o) const {
    return dim_ == o.dim_ && records_ == o.records_;
  }

 private:
  int dim_;
  std::vector<EmbeddingRecord> records_;
  std::map<std::pair<std::string, std::string>, std::size_t> by_key_;
  std::map<std::string, std::vector<std::size_t>> by_utt_;
  std::map<std::string, std::vector<std::size_t>> by_speaker_;
};

// ---------------------------------------------------------------------------
// EMBV1: "EMBV1", u32 dim, u32 count, then per record u16 len + speaker bytes,
// u16 len + utterance bytes, dim x f32.  Little-endian throughout.  Values
// are stored as 32-bit floats; in memory they are doubles.

inline constexpr std::string_view kEmbeddingMagic = "EMBV1";

inline std::string EncodeEmbeddings(const EmbeddingSet &set) {
  ByteWriter w;
  w.Magic(kEmbeddingMagic);
  w.U32(static_cast<std::uint32_t>(set.dim()));
  w.U32(static_cast<std::uint32_t>(set.size()));
  for (const EmbeddingRecord &rec : set.records()) {
    for (const std::string *id : {&rec.speaker, &rec.utterance}) {
      ATTNBACK_CHECK(id->size() <= std::numeric_limits<std::uint16_t>::max(),
                     "id too long for EMBV1: ", id->substr(0, 32), "...");
      w.U16(static_cast<std::uint16_t>(id->size()));
      w.Bytes(*id);
    }
    for (Eigen::Index i = 0; i < rec.vector.size(); ++i) {
      const float f = static_cast<float>(rec.vector[i]);
      ATTNBACK_CHECK(std::isfinite(f), "embedding ", rec.speaker, "/", rec.utterance,
                     " overflows 32-bit float");
      w.F32(f);
    }
  }
  return w.Release();
}

inline EmbeddingSet DecodeEmbeddings(std::string_view bytes) {
  ByteReader r(bytes);
  r.ExpectMagic(kEmbeddingMagic, "embedding file");
  const std::uint32_t dim = r.U32("dim");
  const std::uint32_t count = r.U32("record count");
  ATTNBACK_CHECK(dim <= (1u << 24), "implausible embedding dim ", dim);
  EmbeddingSet set(static_cast<int>(dim));
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::size_t rec_at = r.offset();
    std::string speaker(r.Take(r.U16("speaker-id length"), "speaker-id"));
    std::string utterance(r.Take(r.U16("utterance-id length"), "utterance-id"));
    Vector v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      const std::size_t at = r.offset();
      const float f = r.F32("embedding value");
      if (!std::isfinite(f))
        throw FormatError(detail::Concat("non-finite embedding value at byte offset ", at), at);
      v[i] = f;
    }
    try {
      set.Add(std::move(speaker), std::move(utterance), std::move(v));
    } catch (const Error &e) {
      throw FormatError(detail::Concat(e.what(), " (record at byte offset ", rec_at, ")"), rec_at);
    }
  }
  if (!r.AtEnd())
    throw FormatError(detail::Concat("trailing bytes after last record at byte offset ",
                                     r.offset()),
                      r.offset());
  return set;
}

inline void WriteEmbeddings(const EmbeddingSet &set, const std::filesystem::path &path) {
  WriteFileAtomic(path, EncodeEmbeddings(set));
}

inline EmbeddingSet ReadEmbeddings(const std::filesystem::path &path) {
  return DecodeEmbeddings(ReadFileBytes(path));
}

}  // namespace attnback
