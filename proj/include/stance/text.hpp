#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "stance/error.hpp"

namespace stance::text {

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Maps the typographic apostrophe U+2019 onto '\''.
inline std::string normalize_apostrophes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        static_cast<unsigned char>(s[i + 2]) == 0x99) {
      out.push_back('\'');
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) tokens.push_back(s.substr(start, i - start));
  }
  return tokens;
}

inline std::string_view strip_punctuation(std::string_view token) {
  auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (!token.empty() && punct(token.front())) token.remove_prefix(1);
  while (!token.empty() && punct(token.back())) token.remove_suffix(1);
  return token;
}

// Tokens for lexicon lookups (embeddings, negation, swear words): lowercased,
// whitespace-split, edge punctuation stripped, empties dropped.
inline std::vector<std::string> lexicon_tokens(std::string_view raw) {
  const std::string lowered = to_lower_ascii(normalize_apostrophes(raw));
  std::vector<std::string> out;
  for (auto tok : split_whitespace(lowered)) {
    auto stripped = strip_punctuation(tok);
    if (!stripped.empty()) out.emplace_back(stripped);
  }
  return out;
}

// Tokens for bag-of-words counts: lowercased and whitespace-split only.
inline std::vector<std::string> bag_tokens(std::string_view raw) {
  const std::string lowered = to_lower_ascii(raw);
  std::vector<std::string> out;
  for (auto tok : split_whitespace(lowered)) out.emplace_back(tok);
  return out;
}

// Number of UTF-8 code points (continuation bytes are not counted).
inline std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

inline constexpr std::array<std::string_view, 19> kNegationWords = {
    "not",    "no",     "nobody", "nothing", "none",   "never",    "neither",  "nor",      "nowhere", "hardly",
    "scarcely", "barely", "don't", "isn't",  "wasn't", "shouldn't", "wouldn't", "couldn't", "doesn't"};

inline std::size_t negation_count(std::string_view raw) {
  std::size_t n = 0;
  for (const auto& tok : lexicon_tokens(raw)) {
    if (std::find(kNegationWords.begin(), kNegationWords.end(), tok) != kNegationWords.end()) ++n;
  }
  return n;
}

// Word list loaded from a resource file: one lowercase word per line; blank
// lines and lines starting with '#' are skipped.
class WordList {
 public:
  WordList() = default;
  explicit WordList(std::vector<std::string> words) {
    for (auto& w : words) words_.insert(to_lower_ascii(w));
  }

  static WordList load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingResource, "word list not found: " + path.string());
    WordList list;
    std::string line;
    while (std::getline(in, line)) {
      auto toks = split_whitespace(line);
      if (toks.empty() || toks.front().front() == '#') continue;
      list.words_.insert(to_lower_ascii(toks.front()));
    }
    return list;
  }

  bool contains(const std::string& word) const { return words_.count(word) != 0; }
  std::size_t size() const noexcept { return words_.size(); }

  std::size_t count_in(std::string_view raw) const {
    std::size_t n = 0;
    for (const auto& tok : lexicon_tokens(raw)) n += contains(tok) ? 1 : 0;
    return n;
  }

 private:
  std::unordered_set<std::string> words_;
};

inline std::size_t swear_count(std::string_view raw, const WordList* swear_words) {
  if (swear_words == nullptr) throw Error(ErrorCode::MissingResource, "swear word list not loaded");
  return swear_words->count_in(raw);
}

}  // namespace stance::text
