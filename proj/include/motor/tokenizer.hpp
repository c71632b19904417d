#pragma once

#include "motor/autograd.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace motor {

enum class TokenMode { encode_cls, encode_match, decode };

/// Word-level vocabulary with fixed special ids.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kEncode = 2;
  static constexpr int kBos = 3;
  static constexpr int kEos = 4;
  static constexpr int kUnk = 5;
  static constexpr int kSep = 6;
  static constexpr int kNumSpecials = 7;

  /// Builds a vocabulary from the specials followed by the distinct words in order.
  Tokenizer(const std::vector<std::string>& words, int max_text_len);

  /// One word per line; special tokens are implied and must not be listed.
  static Tokenizer load(const std::string& path, int max_text_len);
  void save(const std::string& path) const;

  int vocab_size() const { return static_cast<int>(words_.size()); }
  int max_text_len() const { return max_len_; }
  bool contains(std::string_view word) const;
  int id(std::string_view word) const;
  const std::string& word(int id) const;

  /// Padded to max_text_len with [PAD]; over-long text is truncated.
  std::vector<int> encode(std::string_view text, TokenMode mode) const;
  std::vector<int> ids_of(std::span<const std::string> words) const;
  /// Drops [PAD]/[CLS]/[Encode]/[BOS] and stops at [EOS].
  std::string decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int max_len_;
};

/// A padded batch of token sequences stacked row-wise as batch*len ids.
struct TokenBatch {
  int batch = 0;
  int len = 0;
  std::vector<int> ids;
  Matrix valid;  // batch x len, 1 for non-pad

  /// Pads to the longest sequence; trailing all-pad columns are dropped.
  static TokenBatch from(const std::vector<std::vector<int>>& seqs);
  std::span<const int> row(int b) const { return {ids.data() + static_cast<std::size_t>(b) * len, static_cast<std::size_t>(len)}; }
};

}  // namespace motor
