// Copyright (c) 2026 The HTCL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace htcl {

struct TextDocument {
  std::string title;
  std::vector<std::string> artists;
  std::string lyrics;
};

/// "title: {title} | artists: {a1, a2} | lyrics: {lyrics}"
std::string serialize_metadata(const TextDocument& doc);

bool is_valid_utf8(std::string_view s);

/// Text store record: one "field: value" line per field, artists joined by
/// "; ". Throws DataError on a malformed record or invalid UTF-8.
std::string format_text_record(const TextDocument& doc);
TextDocument parse_text_record(const std::string& record);

void write_text_document(const std::filesystem::path& path, const TextDocument& doc);
TextDocument read_text_document(const std::filesystem::path& path);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kBegin = 2;
  static constexpr int kReserved = 3;

  Vocabulary();
  /// Tokens in id order, reserved tokens first.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id_of(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Line-delimited "token<TAB>id".
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Keeps the vocab_size - 3 most frequent whitespace tokens; ties go to the
/// lexicographically smaller token.
Vocabulary build_vocab(std::span<const std::string> texts, int vocab_size);

std::vector<std::string> split_whitespace(std::string_view text);

struct TokenSequence {
  std::vector<int> token_ids;
  /// Number of real tokens; ids past it are padding.
  int length = 0;
};

/// Begin token then token ids, unknown id for out-of-vocabulary words,
/// truncated to max_text_len.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_text_len);

}  // namespace htcl
