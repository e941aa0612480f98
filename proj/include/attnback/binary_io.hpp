// attnback/binary_io.hpp

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

// Little-endian byte packing and whole-file helpers shared by every on-disk
// format in the library.

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>

#include "attnback/error.hpp"

namespace attnback {

class ByteWriter {
 public:
  void Magic(std::string_view magic) { buf_.append(magic); }

  void U16(std::uint16_t v) { PutLe(v, 2); }
  void U32(std::uint32_t v) { PutLe(v, 4); }
  void U64(std::uint64_t v) { PutLe(v, 8); }
  void F32(float v) { PutLe(std::bit_cast<std::uint32_t>(v), 4); }
  void F64(double v) { PutLe(std::bit_cast<std::uint64_t>(v), 8); }

  void F64s(std::span<const double> values) {
    for (double v : values) F64(v);
  }

  void Bytes(std::string_view bytes) { buf_.append(bytes); }

  const std::string &str() const { return buf_; }
  std::string Release() { return std::move(buf_); }

 private:
  void PutLe(std::uint64_t v, int nbytes) {
    for (int i = 0; i < nbytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

/// Reads from a byte buffer; every failure reports the offset at which the
/// requested field would have started.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  void ExpectMagic(std::string_view magic, std::string_view what) {
    const std::size_t at = pos_;
    std::string_view got = Take(magic.size(), what);
    if (got != magic)
      throw FormatError(detail::Concat("bad magic for ", what, ": expected \"", magic,
                                       "\" at byte offset ", at),
                        at);
  }

  std::uint16_t U16(std::string_view what) { return static_cast<std::uint16_t>(GetLe(2, what)); }
  std::uint32_t U32(std::string_view what) { return static_cast<std::uint32_t>(GetLe(4, what)); }
  std::uint64_t U64(std::string_view what) { return GetLe(8, what); }
  float F32(std::string_view what) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(GetLe(4, what)));
  }
  double F64(std::string_view what) { return std::bit_cast<double>(GetLe(8, what)); }

  void F64s(std::span<double> out, std::string_view what) {
    for (double &v : out) v = F64(what);
  }

  std::string_view Take(std::size_t n, std::string_view what) {
    if (data_.size() - pos_ < n)
      throw FormatError(detail::Concat("truncated input while reading ", what,
                                       " at byte offset ", pos_),
                        pos_);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const { return pos_; }
  bool AtEnd() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t GetLe(int nbytes, std::string_view what) {
    std::string_view raw = Take(static_cast<std::size_t>(nbytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  ATTNBACK_CHECK(in.good(), "cannot open ", path.string(), " for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to "<path>.tmp" and renames over `path`, so readers never see a
/// partial file.
inline void WriteFileAtomic(const std::filesystem::path &path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    ATTNBACK_CHECK(out.good(), "cannot open ", tmp.string(), " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out.good()) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(detail::Concat("write failed for ", tmp.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(detail::Concat("cannot rename ", tmp.string(), " to ", path.string()));
  }
}

}  // namespace attnback
