// attnback/trials.hpp

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

// Trial lists, one trial per line:
//   enroll-spk <TAB> utt1,utt2,... <TAB> test-utt [<TAB> target|nontarget]

#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "attnback/binary_io.hpp"
#include "attnback/error.hpp"

namespace attnback {

enum class TrialLabel { kTarget, kNontarget };

inline std::string_view LabelName(TrialLabel label) {
  return label == TrialLabel::kTarget ? "target" : "nontarget";
}

inline std::optional<TrialLabel> ParseLabel(std::string_view text) {
  if (text == "target") return TrialLabel::kTarget;
  if (text == "nontarget") return TrialLabel::kNontarget;
  return std::nullopt;
}

struct Trial {
  std::string enroll_speaker;
  std::vector<std::string> enroll_utterances;
  std::string test_utterance;
  std::optional<TrialLabel> label;

  /// Identifier used in score files.
  std::string Id() const { return enroll_speaker + ":" + test_utterance; }

  bool operator==(const Trial &) const = default;
};

using TrialList = std::vector<Trial>;

inline std::vector<std::string> SplitString(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string EncodeTrials(const TrialList &trials) {
  std::string out;
  for (const Trial &t : trials) {
    out += t.enroll_speaker;
    out += '\t';
    for (std::size_t i = 0; i < t.enroll_utterances.size(); ++i) {
      if (i) out += ',';
      out += t.enroll_utterances[i];
    }
    out += '\t';
    out += t.test_utterance;
    if (t.label) {
      out += '\t';
      out += LabelName(*t.label);
    }
    out += '\n';
  }
  return out;
}

inline TrialList DecodeTrials(std::string_view text) {
  TrialList trials;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fail = [line_no](const std::string &why) {
      throw FormatError(detail::Concat("trial list line ", line_no, ": ", why), line_no);
    };
    std::vector<std::string> fields = SplitString(line, '\t');
    if (fields.size() != 3 && fields.size() != 4)
      fail(detail::Concat("expected 3 or 4 tab-separated fields, got ", fields.size()));
    Trial t;
    t.enroll_speaker = fields[0];
    t.enroll_utterances = SplitString(fields[1], ',');
    t.test_utterance = fields[2];
    if (t.enroll_speaker.empty()) fail("empty enrollment speaker id");
    if (t.test_utterance.empty()) fail("empty test utterance id");
    for (const std::string &u : t.enroll_utterances)
      if (u.empty()) fail("empty enrollment utterance id");
    if (fields.size() == 4) {
      t.label = ParseLabel(fields[3]);
      if (!t.label) fail("label must be 'target' or 'nontarget', got '" + fields[3] + "'");
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

inline void WriteTrials(const TrialList &trials, const std::filesystem::path &path) {
  WriteFileAtomic(path, EncodeTrials(trials));
}

inline TrialList ReadTrials(const std::filesystem::path &path) {
  return DecodeTrials(ReadFileBytes(path));
}

}  // namespace attnback
