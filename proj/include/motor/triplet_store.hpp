#pragma once

// Specific knowledge: <head, relation, tail> records looked up by clinical
// entities recognized in report text.

#include "motor/tokenizer.hpp"

#include <compare>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace motor {

struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;

  auto operator<=>(const Triplet&) const = default;
  std::string to_string() const { return head + " " + relation + " " + tail; }
};

/// Lowercases and collapses whitespace; throws if any field ends up empty.
Triplet make_triplet(std::string_view head, std::string_view relation, std::string_view tail);

class TripletStore {
 public:
  TripletStore() = default;
  explicit TripletStore(std::vector<Triplet> triplets);

  /// `head<TAB>relation<TAB>tail` per line, '#' comments.
  static TripletStore parse(std::string_view text);
  static TripletStore load(const std::string& path);
  std::string to_tsv() const;

  const std::vector<Triplet>& triplets() const { return triplets_; }
  /// Store positions of triplets whose head is `entity`, ascending.
  const std::vector<std::size_t>& positions(std::string_view entity) const;

 private:
  std::vector<Triplet> triplets_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> head_index_;
};

class EntityLexicon {
 public:
  explicit EntityLexicon(const std::vector<std::string>& entries);

  /// One entity per line, '#' comments.
  static EntityLexicon parse(std::string_view text);
  static EntityLexicon load(const std::string& path);

  bool contains(std::string_view phrase) const { return entries_.find(phrase) != entries_.end(); }
  std::size_t max_words() const { return max_words_; }
  const std::set<std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::set<std::string, std::less<>> entries_;
  std::size_t max_words_ = 0;
};

/// Longest-match left-to-right scan; entities in first-occurrence order.
std::vector<std::string> extract_entities(std::string_view text, const EntityLexicon& lexicon);

/// Head-indexed triplets of each entity in order, deduplicated, truncated to cap.
std::vector<Triplet> query_triplets(const TripletStore& store, const std::vector<std::string>& entities, std::size_t cap);

/// [CLS] head relation tail ; head relation tail ... cut to max_len tokens.
std::vector<int> linearize(const std::vector<Triplet>& triplets, const Tokenizer& tokenizer, std::size_t max_len = 90);

}  // namespace motor
