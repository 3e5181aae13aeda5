#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace comve {

struct SpecialTokens {
  std::string pad = "[PAD]";
  std::string unk = "[UNK]";
  std::string cls = "[CLS]";
  std::string sep = "[SEP]";
  std::string mask = "[MASK]";

  std::vector<std::string> all() const { return {pad, unk, cls, sep, mask}; }
  friend bool operator==(const SpecialTokens&, const SpecialTokens&) = default;
};

struct TokenPiece {
  int id = 0;
  std::string text;    // vocabulary spelling, continuation pieces carry "##"
  int word_index = 0;  // index of the pre-tokenized word this piece belongs to
};

struct VocabOptions {
  std::size_t max_words = 8000;
  std::size_t min_count = 1;
  bool lower_case = true;
};

// Word-piece tokenizer: whitespace/punctuation pre-tokenization followed by
// greedy longest-match over a vocabulary whose continuation pieces start
// with "##". Building a vocabulary always adds every observed character in
// both word-initial and continuation form, so seen text never maps to UNK.
class Tokenizer {
 public:
  Tokenizer(std::vector<std::string> vocabulary, SpecialTokens specials, bool lower_case);

  static Tokenizer build(std::span<const std::string> texts, const VocabOptions& options,
                         SpecialTokens specials = {});
  static Tokenizer load(const std::filesystem::path& vocab_file, SpecialTokens specials,
                        bool lower_case);
  void save(const std::filesystem::path& vocab_file) const;

  std::vector<std::string> pre_tokenize(std::string_view text) const;
  std::vector<TokenPiece> tokenize(std::string_view text) const;

  int id(std::string_view token) const;  // -1 when absent
  const std::string& token(int id) const { return vocab_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(vocab_.size()); }
  bool lower_case() const { return lower_case_; }

  const SpecialTokens& specials() const { return specials_; }
  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }
  int mask_id() const { return mask_id_; }
  bool is_special(int id) const;

  // Surface form of a piece for display ("##" stripped).
  static std::string_view surface(std::string_view piece);

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  SpecialTokens specials_;
  bool lower_case_;
  int pad_id_, unk_id_, cls_id_, sep_id_, mask_id_;
};

}  // namespace comve
