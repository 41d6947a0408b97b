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

#include "htcl/text_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "htcl/error.hpp"

namespace htcl {

namespace {

constexpr const char* kReservedTokens[] = {"<pad>", "<unk>", "<bos>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string serialize_metadata(const TextDocument& doc) {
  std::string out = "title: " + doc.title + " | artists: ";
  for (std::size_t i = 0; i < doc.artists.size(); ++i) {
    if (i > 0) out += ", ";
    out += doc.artists[i];
  }
  out += " | lyrics: " + doc.lyrics;
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    if (c < 0x80) {
      extra = 0;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      extra = 3;
    } else {
      return false;
    }
    if (extra > 0 && i + static_cast<std::size_t>(extra) >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0xC0) != 0x80) return false;
    }
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

std::string format_text_record(const TextDocument& doc) {
  std::string out = "title: " + doc.title + "\nartists: ";
  for (std::size_t i = 0; i < doc.artists.size(); ++i) {
    if (i > 0) out += "; ";
    out += doc.artists[i];
  }
  out += "\nlyrics: " + doc.lyrics + "\n";
  return out;
}

TextDocument parse_text_record(const std::string& record) {
  if (!is_valid_utf8(record)) throw DataError("text record is not valid UTF-8");
  std::map<std::string, std::string> fields;
  std::istringstream in(record);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    std::string key = colon == std::string::npos ? line : line.substr(0, colon);
    if (colon == std::string::npos) {
      // "lyrics:" with an empty value.
      if (!key.empty() && key.back() == ':') key.pop_back();
      fields[key] = "";
    } else {
      fields[key] = line.substr(colon + 2);
    }
  }
  for (const char* required : {"title", "artists", "lyrics"}) {
    if (!fields.count(required)) throw DataError(std::string("text record missing field: ") + required);
  }
  TextDocument doc;
  doc.title = fields["title"];
  doc.lyrics = fields["lyrics"];
  const std::string& artists = fields["artists"];
  std::size_t start = 0;
  while (!artists.empty() && start <= artists.size()) {
    const auto sep = artists.find("; ", start);
    doc.artists.push_back(artists.substr(start, sep == std::string::npos ? std::string::npos : sep - start));
    if (sep == std::string::npos) break;
    start = sep + 2;
  }
  return doc;
}

void write_text_document(const std::filesystem::path& path, const TextDocument& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write text file: " + path.string());
  out << format_text_record(doc);
}

TextDocument read_text_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open text file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text_record(buf.str());
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty()) tokens.assign(std::begin(kReservedTokens), std::end(kReservedTokens));
  if (tokens.size() < kReserved) throw ConfigError("vocabulary must contain the reserved tokens");
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary: " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("vocabulary line without tab: " + line);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(tokens.size())) throw DataError("vocabulary ids must be dense and ordered");
    tokens.push_back(line.substr(0, tab));
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::string> texts, int vocab_size) {
  if (vocab_size < Vocabulary::kReserved) {
    throw ConfigError("text.vocab_size must be >= 3 (got " + std::to_string(vocab_size) + ")");
  }
  std::map<std::string, long> counts;
  for (const std::string& t : texts) {
    for (std::string& tok : split_whitespace(t)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // counts is key-ordered, so a stable sort by count keeps the lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(std::begin(kReservedTokens), std::end(kReservedTokens));
  for (auto& [tok, n] : ranked) {
    if (static_cast<int>(tokens.size()) >= vocab_size) break;
    if (std::find(std::begin(kReservedTokens), std::end(kReservedTokens), tok) != std::end(kReservedTokens)) {
      continue;
    }
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_text_len) {
  TokenSequence seq;
  if (max_text_len < 1) return seq;
  seq.token_ids.push_back(Vocabulary::kBegin);
  for (const std::string& tok : split_whitespace(text)) {
    if (static_cast<int>(seq.token_ids.size()) >= max_text_len) break;
    seq.token_ids.push_back(vocab.id_of(tok));
  }
  seq.length = static_cast<int>(seq.token_ids.size());
  return seq;
}

}  // namespace htcl
