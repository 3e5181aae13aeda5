#include "comve/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "comve/error.hpp"

namespace comve {
namespace {

constexpr const char* kModule = "tokenizer";
constexpr std::string_view kContinuation = "##";

// Length of the UTF-8 sequence starting with byte c (1 for invalid leads).
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xE) return 3;
  if ((c >> 3) == 0x1E) return 4;
  return 1;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t len = std::min(utf8_length(static_cast<unsigned char>(word[i])),
                                     word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> vocabulary, SpecialTokens specials, bool lower_case)
    : vocab_(std::move(vocabulary)), specials_(std::move(specials)), lower_case_(lower_case) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<int>(i)).second) {
      throw ConfigError(kModule, "duplicate vocabulary entry '" + vocab_[i] + "'");
    }
  }
  auto require_special = [this](const std::string& tok) {
    const int i = id(tok);
    if (i < 0) throw ConfigError(kModule, "vocabulary lacks special token " + tok);
    return i;
  };
  pad_id_ = require_special(specials_.pad);
  unk_id_ = require_special(specials_.unk);
  cls_id_ = require_special(specials_.cls);
  sep_id_ = require_special(specials_.sep);
  mask_id_ = require_special(specials_.mask);
}

bool Tokenizer::is_special(int token_id) const {
  return token_id == pad_id_ || token_id == unk_id_ || token_id == cls_id_ ||
         token_id == sep_id_ || token_id == mask_id_;
}

int Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

std::string_view Tokenizer::surface(std::string_view piece) {
  if (piece.substr(0, kContinuation.size()) == kContinuation) {
    return piece.substr(kContinuation.size());
  }
  return piece;
}

std::vector<std::string> Tokenizer::pre_tokenize(std::string_view text) const {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      words.emplace_back(1, raw);
    } else {
      current.push_back(lower_case_ && c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush();
  return words;
}

std::vector<TokenPiece> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenPiece> pieces;
  const auto words = pre_tokenize(text);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::string& word = words[w];
    if (const int whole = id(word); whole >= 0) {
      pieces.push_back({whole, word, static_cast<int>(w)});
      continue;
    }
    // Greedy longest match over UTF-8 character boundaries.
    const auto chars = utf8_chars(word);
    std::vector<TokenPiece> word_pieces;
    std::size_t start = 0;
    bool unknown = false;
    while (start < chars.size()) {
      std::size_t end = chars.size();
      int found = -1;
      std::string candidate;
      for (; end > start; --end) {
        candidate = start == 0 ? std::string() : std::string(kContinuation);
        for (std::size_t k = start; k < end; ++k) candidate += chars[k];
        found = id(candidate);
        if (found >= 0) break;
      }
      if (found < 0) {
        unknown = true;
        break;
      }
      word_pieces.push_back({found, candidate, static_cast<int>(w)});
      start = end;
    }
    if (unknown) {
      pieces.push_back({unk_id_, specials_.unk, static_cast<int>(w)});
    } else {
      pieces.insert(pieces.end(), word_pieces.begin(), word_pieces.end());
    }
  }
  return pieces;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts, const VocabOptions& options,
                           SpecialTokens specials) {
  // A throwaway tokenizer supplies pre-tokenization only.
  const Tokenizer splitter(specials.all(), specials, options.lower_case);
  std::map<std::string, std::size_t> counts;
  std::set<std::string> chars;
  for (const auto& text : texts) {
    for (auto& word : splitter.pre_tokenize(text)) {
      for (auto& ch : utf8_chars(word)) chars.insert(ch);
      ++counts[word];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> vocab = specials.all();
  std::set<std::string> present(vocab.begin(), vocab.end());
  auto add = [&](const std::string& tok) {
    if (present.insert(tok).second) vocab.push_back(tok);
  };
  std::size_t words = 0;
  for (const auto& [word, count] : ranked) {
    if (count < options.min_count || words >= options.max_words) break;
    add(word);
    ++words;
  }
  for (const auto& ch : chars) add(ch);
  for (const auto& ch : chars) add(std::string(kContinuation) + ch);
  return Tokenizer(std::move(vocab), std::move(specials), options.lower_case);
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_file, SpecialTokens specials,
                          bool lower_case) {
  std::ifstream in(vocab_file);
  if (!in) throw IoError(kModule, "cannot open vocabulary " + vocab_file.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return Tokenizer(std::move(vocab), std::move(specials), lower_case);
}

void Tokenizer::save(const std::filesystem::path& vocab_file) const {
  std::ofstream out(vocab_file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write vocabulary " + vocab_file.string());
  for (const auto& tok : vocab_) out << tok << '\n';
}

}  // namespace comve
