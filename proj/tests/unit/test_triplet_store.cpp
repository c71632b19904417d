#include "fixtures.hpp"

#include <gtest/gtest.h>

namespace motor {
namespace {

const Triplet kConsolidation{"consolidation", "suggestive of", "pneumothorax"};
const Triplet kEffusion{"effusion", "located at", "pleural"};

TEST(ExtractEntities, LongestMatchLeftToRight) {
  const EntityLexicon lex({"pleural effusion", "effusion", "consolidation"});
  EXPECT_EQ(extract_entities("small left pleural effusion with consolidation", lex),
            (std::vector<std::string>{"pleural effusion", "consolidation"}));
}

TEST(ExtractEntities, EmptyAndDuplicates) {
  const EntityLexicon lex({"effusion"});
  EXPECT_TRUE(extract_entities("the heart is normal", lex).empty());
  EXPECT_EQ(extract_entities("effusion. effusion,", lex), std::vector<std::string>{"effusion"});
  EXPECT_EQ(extract_entities("EFFUSION!", lex), std::vector<std::string>{"effusion"});
}

TEST(ExtractEntities, FirstOccurrenceOrder) {
  const EntityLexicon lex({"edema", "mass", "nodule"});
  EXPECT_EQ(extract_entities("nodule then edema then nodule then mass", lex), (std::vector<std::string>{"nodule", "edema", "mass"}));
}

TEST(Lexicon, RejectsEmptyAndLowercases) {
  EXPECT_THROW(EntityLexicon::parse("# nothing\n"), SchemaError);
  const EntityLexicon lex = EntityLexicon::parse("Pleural  Effusion\n");
  EXPECT_TRUE(lex.contains("pleural effusion"));
  EXPECT_EQ(lex.max_words(), 2u);
}

TEST(TripletStoreFile, ParseAndRoundTrip) {
  const TripletStore s = TripletStore::parse("# comment\nconsolidation\tsuggestive of\tpneumothorax\neffusion\tlocated at\tpleural\n");
  ASSERT_EQ(s.triplets().size(), 2u);
  EXPECT_EQ(s.triplets()[0], kConsolidation);
  EXPECT_EQ(TripletStore::parse(s.to_tsv()).triplets(), s.triplets());
  EXPECT_THROW(TripletStore::parse("a\tb\n"), ParseError);
  EXPECT_THROW(make_triplet("a", "  ", "c"), ParseError);
  EXPECT_EQ(make_triplet(" Effusion ", "Located   At", "PLEURAL"), kEffusion);
}

TEST(TripletStoreFile, HeadIndexIsIncreasing) {
  const TripletStore s({kEffusion, kConsolidation, {"effusion", "suggestive of", "atelectasis"}});
  EXPECT_EQ(s.positions("effusion"), (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(s.positions("hernia").empty());
}

TEST(QueryTriplets, WorkedExamples) {
  const TripletStore s({kEffusion, kConsolidation});
  EXPECT_EQ(query_triplets(s, {"consolidation"}, 32), std::vector<Triplet>{kConsolidation});
  EXPECT_EQ(query_triplets(s, {"effusion"}, 32), std::vector<Triplet>{kEffusion});
  EXPECT_EQ(query_triplets(s, {"effusion", "effusion"}, 32), query_triplets(s, {"effusion"}, 32));
  EXPECT_EQ(query_triplets(s, {"consolidation", "effusion"}, 32), (std::vector<Triplet>{kConsolidation, kEffusion}));
  EXPECT_EQ(query_triplets(s, {"consolidation", "effusion"}, 1), std::vector<Triplet>{kConsolidation});
  EXPECT_TRUE(query_triplets(s, {"effusion"}, 0).empty());
}

TEST(QueryTriplets, DuplicateStoreRowsDeduplicated) {
  const TripletStore s({kEffusion, kEffusion, kConsolidation});
  EXPECT_EQ(query_triplets(s, {"effusion"}, 32), std::vector<Triplet>{kEffusion});
}

TEST(QueryTriplets, SoundnessOnGeneratedStore) {
  const TripletStore s = TripletStore::parse(corpus_triplets_tsv(true));
  const EntityLexicon lex = EntityLexicon::parse(corpus_lexicon_txt());
  const std::vector<std::string> ents = extract_entities("effusion and mass with cardiomegaly and a nodule", lex);
  for (const Triplet& t : query_triplets(s, ents, 32))
    EXPECT_NE(std::find(ents.begin(), ents.end(), t.head), ents.end()) << t.to_string();
}

TEST(Linearize, ReferenceSentence) {
  const Tokenizer& tok = testing::corpus_tokenizer();
  const std::vector<int> ids = linearize({kConsolidation, kEffusion}, tok, 90);
  std::vector<std::string> words;
  for (int id : ids) words.push_back(tok.word(id));
  std::string joined;
  for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
  EXPECT_EQ(joined, "[CLS] consolidation suggestive of pneumothorax ; effusion located at pleural");
  EXPECT_LE(ids.size(), 90u);
}

TEST(Linearize, EmptyIsClsOnly) { EXPECT_EQ(linearize({}, testing::corpus_tokenizer(), 90), std::vector<int>{Tokenizer::kCls}); }

TEST(Linearize, TruncatesToExactly90) {
  // 40 triplets of 5 words: 1 + 40*5 + 39 separators = 240 tokens before truncation.
  std::vector<Triplet> many(40, Triplet{"pleural", "located at", "right lung"});
  EXPECT_EQ(linearize(many, testing::corpus_tokenizer(), 90).size(), 90u);
}

TEST(Linearize, MonotoneTruncationIsPrefix) {
  const Tokenizer& tok = testing::corpus_tokenizer();
  const std::vector<Triplet> ks{kConsolidation, kEffusion, {"mass", "suggestive of", "nodule"}};
  const std::vector<int> full = linearize(ks, tok, 90);
  for (std::size_t m = 1; m < full.size(); ++m) {
    const std::vector<int> part = linearize(ks, tok, m);
    EXPECT_EQ(part, std::vector<int>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(m)));
  }
}

TEST(Linearize, UnknownWordsBecomeUnk) {
  const std::vector<int> ids = linearize({{"zzz", "located at", "pleural"}}, testing::corpus_tokenizer(), 90);
  EXPECT_EQ(ids[1], Tokenizer::kUnk);
}

TEST(TripletPipeline, DeterministicAcrossCalls) {
  const TripletStore s = TripletStore::parse(corpus_triplets_tsv(true));
  const EntityLexicon lex = EntityLexicon::parse(corpus_lexicon_txt());
  const std::string text = "there is a mass . small effusion on the left";
  EXPECT_EQ(query_triplets(s, extract_entities(text, lex), 32), query_triplets(s, extract_entities(text, lex), 32));
}

}  // namespace
}  // namespace motor
