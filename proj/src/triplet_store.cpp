#include "motor/triplet_store.hpp"

#include "motor/graph_knowledge.hpp"
#include "motor/text.hpp"

#include <algorithm>

namespace motor {

namespace {

std::string normalize_field(std::string_view s) {
  std::vector<std::string> words;
  for (auto& w : split(to_lower(trim(s)), ' ')) {
    auto t = trim(w);
    if (!t.empty()) words.push_back(std::move(t));
  }
  return join_words(words);
}

std::vector<std::string> content_lines(std::string_view text) {
  std::vector<std::string> out;
  for (auto line : split(text, '\n')) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (!trim(line).empty()) out.push_back(std::move(line));
  }
  return out;
}

}  // namespace

Triplet make_triplet(std::string_view head, std::string_view relation, std::string_view tail) {
  Triplet t{normalize_field(head), normalize_field(relation), normalize_field(tail)};
  if (t.head.empty() || t.relation.empty() || t.tail.empty()) throw ParseError("triplet with empty field");
  return t;
}

TripletStore::TripletStore(std::vector<Triplet> triplets) : triplets_(std::move(triplets)) {
  for (std::size_t i = 0; i < triplets_.size(); ++i) {
    auto& t = triplets_[i];
    t = make_triplet(t.head, t.relation, t.tail);
    head_index_[t.head].push_back(i);
  }
}

TripletStore TripletStore::parse(std::string_view text) {
  std::vector<Triplet> out;
  for (const auto& line : content_lines(text)) {
    auto f = split(line, '\t');
    if (f.size() != 3) throw ParseError("triplet line needs 3 tab-separated fields: '" + line + "'");
    out.push_back(make_triplet(f[0], f[1], f[2]));
  }
  return TripletStore(std::move(out));
}

TripletStore TripletStore::load(const std::string& path) { return parse(read_file(path)); }

std::string TripletStore::to_tsv() const {
  std::string out;
  for (const auto& t : triplets_) out += t.head + "\t" + t.relation + "\t" + t.tail + "\n";
  return out;
}

const std::vector<std::size_t>& TripletStore::positions(std::string_view entity) const {
  static const std::vector<std::size_t> kNone;
  auto it = head_index_.find(entity);
  return it == head_index_.end() ? kNone : it->second;
}

EntityLexicon::EntityLexicon(const std::vector<std::string>& entries) {
  for (const auto& e : entries) {
    auto words = normalize_words(e);
    if (words.empty()) continue;
    max_words_ = std::max(max_words_, words.size());
    entries_.insert(join_words(words));
  }
  if (entries_.empty()) throw SchemaError("entity lexicon is empty");
}

EntityLexicon EntityLexicon::parse(std::string_view text) { return EntityLexicon(content_lines(text)); }

EntityLexicon EntityLexicon::load(const std::string& path) { return parse(read_file(path)); }

std::vector<std::string> extract_entities(std::string_view text, const EntityLexicon& lexicon) {
  const auto words = normalize_words(text);
  std::vector<std::string> out;
  std::set<std::string, std::less<>> seen;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(lexicon.max_words(), words.size() - i); len >= 1; --len) {
      std::vector<std::string> span(words.begin() + static_cast<std::ptrdiff_t>(i),
                                    words.begin() + static_cast<std::ptrdiff_t>(i + len));
      auto phrase = join_words(span);
      if (lexicon.contains(phrase)) {
        if (seen.insert(phrase).second) out.push_back(std::move(phrase));
        matched = len;
        break;
      }
    }
    i += matched ? matched : 1;
  }
  return out;
}

std::vector<Triplet> query_triplets(const TripletStore& store, const std::vector<std::string>& entities, std::size_t cap) {
  std::vector<Triplet> out;
  std::set<Triplet> seen;
  for (const auto& e : entities) {
    for (std::size_t pos : store.positions(e)) {
      if (out.size() >= cap) return out;
      const Triplet& t = store.triplets()[pos];
      if (seen.insert(t).second) out.push_back(t);
    }
  }
  return out;
}

std::vector<int> linearize(const std::vector<Triplet>& triplets, const Tokenizer& tokenizer, std::size_t max_len) {
  std::vector<int> out{Tokenizer::kCls};
  for (std::size_t i = 0; i < triplets.size() && out.size() < max_len; ++i) {
    if (i > 0) out.push_back(Tokenizer::kSep);
    for (const auto* field : {&triplets[i].head, &triplets[i].relation, &triplets[i].tail}) {
      for (const auto& w : normalize_words(*field)) out.push_back(tokenizer.id(w));
    }
  }
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

}  // namespace motor
