#include "motor/tokenizer.hpp"

#include "motor/text.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace motor {

namespace {
constexpr std::array<const char*, Tokenizer::kNumSpecials> kSpecialNames = {
    "[PAD]", "[CLS]", "[Encode]", "[BOS]", "[EOS]", "[UNK]", ";"};
}

Tokenizer::Tokenizer(const std::vector<std::string>& words, int max_text_len) : max_len_(max_text_len) {
  if (max_text_len < 3) throw std::invalid_argument("max_text_len must be at least 3");
  for (const char* s : kSpecialNames) {
    index_.emplace(s, static_cast<int>(words_.size()));
    words_.emplace_back(s);
  }
  for (const auto& w : words) {
    if (w.empty() || index_.contains(w)) continue;
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

Tokenizer Tokenizer::load(const std::string& path, int max_text_len) {
  std::vector<std::string> words;
  for (auto& line : split(read_file(path), '\n')) {
    auto w = trim(line);
    if (!w.empty()) words.push_back(std::move(w));
  }
  return Tokenizer(words, max_text_len);
}

void Tokenizer::save(const std::string& path) const {
  std::string out;
  for (std::size_t i = kNumSpecials; i < words_.size(); ++i) out += words_[i] + "\n";
  write_file(path, out);
}

bool Tokenizer::contains(std::string_view word) const { return index_.contains(std::string(word)); }

int Tokenizer::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::word(int id) const {
  if (id < 0 || id >= vocab_size()) throw std::out_of_range("token id out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Tokenizer::ids_of(std::span<const std::string> words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<int> Tokenizer::encode(std::string_view text, TokenMode mode) const {
  const auto words = normalize_words(text, /*keep_semicolon=*/true);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(max_len_));
  switch (mode) {
    case TokenMode::encode_cls: out.push_back(kCls); break;
    case TokenMode::encode_match: out.push_back(kEncode); break;
    case TokenMode::decode: out.push_back(kBos); break;
  }
  const std::size_t room = static_cast<std::size_t>(max_len_) - out.size() - (mode == TokenMode::decode ? 1 : 0);
  for (std::size_t i = 0; i < words.size() && i < room; ++i) out.push_back(id(words[i]));
  if (mode == TokenMode::decode) out.push_back(kEos);
  out.resize(static_cast<std::size_t>(max_len_), kPad);
  return out;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int t : ids) {
    if (t == kEos) break;
    if (t == kPad || t == kCls || t == kEncode || t == kBos) continue;
    words.push_back(word(t));
  }
  return join_words(words);
}

TokenBatch TokenBatch::from(const std::vector<std::vector<int>>& seqs) {
  TokenBatch tb;
  tb.batch = static_cast<int>(seqs.size());
  if (seqs.empty()) throw std::invalid_argument("empty token batch");
  std::size_t len = 1;
  for (const auto& s : seqs) {
    std::size_t n = s.size();
    while (n > 0 && s[n - 1] == Tokenizer::kPad) --n;
    len = std::max(len, n);
  }
  tb.len = static_cast<int>(len);
  tb.ids.assign(seqs.size() * len, Tokenizer::kPad);
  tb.valid = Matrix::Zero(tb.batch, tb.len);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t i = 0; i < len && i < seqs[b].size(); ++i) {
      tb.ids[b * len + i] = seqs[b][i];
      tb.valid(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = seqs[b][i] == Tokenizer::kPad ? 0.0 : 1.0;
    }
  }
  return tb;
}

}  // namespace motor
