#include "fixtures.hpp"

#include "motor/text.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

namespace motor {
namespace {

class SmallCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    GenConfig cfg;
    cfg.n_records = 60;
    dir_a = testing::temp_dir("corpus_a");
    dir_b = testing::temp_dir("corpus_b");
    records = new std::vector<CorpusRecord>(gen_corpus(cfg, dir_a));
    gen_corpus(cfg, dir_b);
  }
  static void TearDownTestSuite() {
    delete records;
    records = nullptr;
  }
  static std::string dir_a, dir_b;
  static std::vector<CorpusRecord>* records;
};
std::string SmallCorpus::dir_a, SmallCorpus::dir_b;
std::vector<CorpusRecord>* SmallCorpus::records = nullptr;

TEST_F(SmallCorpus, SameSeedGivesIdenticalFiles) {
  for (const char* f : {"corpus.jsonl", "vqa.jsonl", "triplets.tsv", "lexicon.txt", "vocab.txt", "graph.tsv", "images/000000.pgm",
                        "images/000059.pgm"})
    EXPECT_EQ(read_file(dir_a + "/" + f), read_file(dir_b + "/" + f)) << f;
}

TEST_F(SmallCorpus, DifferentSeedDiffers) {
  GenConfig cfg;
  cfg.n_records = 60;
  cfg.seed = 8;
  const std::string dir = testing::temp_dir("corpus_c");
  gen_corpus(cfg, dir);
  EXPECT_NE(read_file(dir + "/corpus.jsonl"), read_file(dir_a + "/corpus.jsonl"));
}

TEST_F(SmallCorpus, SplitSizes) {
  int counts[3] = {0, 0, 0};
  for (const auto& r : *records) ++counts[static_cast<int>(r.split)];
  EXPECT_EQ(counts[0], 48);
  EXPECT_EQ(counts[1], 6);
  EXPECT_EQ(counts[2], 6);
}

TEST_F(SmallCorpus, DatasetLoadsImagesAndRecords) {
  const Dataset d = load_dataset(dir_a + "/corpus.jsonl");
  ASSERT_EQ(d.records.size(), 60u);
  EXPECT_EQ(d.images.rows(), 60);
  EXPECT_EQ(d.images.cols(), 64 * 64);
  EXPECT_GE(d.images.minCoeff(), 0.0);
  EXPECT_LE(d.images.maxCoeff(), 1.0);
  EXPECT_EQ(d.find(17)->report, (*records)[17].report);
  EXPECT_EQ(d.find(1000), nullptr);
  EXPECT_EQ(d.indices(Split::test).size(), 6u);
}

TEST_F(SmallCorpus, VqaRecordsPointAtSources) {
  const Dataset v = load_dataset(dir_a + "/vqa.jsonl");
  std::map<std::int64_t, int> yes, no;
  for (const auto& r : v.records) {
    ASSERT_TRUE(r.source_id.has_value());
    const CorpusRecord& src = (*records)[static_cast<std::size_t>(*r.source_id)];
    EXPECT_EQ(r.split, src.split);
    if (r.qtype == "closed") {
      ASSERT_TRUE(r.answer == "yes" || r.answer == "no");
      ++(r.answer == "yes" ? yes : no)[src.id];
      // The asked finding is named in the source report exactly when the answer is yes.
      const std::string target = r.question.substr(9, r.question.size() - 11);
      EXPECT_EQ(src.report.find(target) != std::string::npos, r.answer == "yes") << r.question << " | " << src.report;
    } else {
      EXPECT_EQ(r.qtype, "open");
    }
  }
  // Balanced per record: one "no" per "yes", and at least one question each.
  for (const auto& src : *records) EXPECT_EQ(no[src.id], std::max(1, yes[src.id])) << src.id;
}

TEST(Scene, EffusionSetsItsLabelAndIsReported) {
  SyntheticScene s;
  s.organs = {"lung", "pleural"};
  s.findings.push_back({"effusion", "pleural", "left", 1});
  const LabelVector y = labels_of(s);
  EXPECT_EQ(label_index_of_finding("effusion"), 2);
  EXPECT_EQ(y[2], 1);
  int total = 0;
  for (int v : y) total += v;
  EXPECT_EQ(total, 1);
  const std::string report = write_report(s, 3);
  EXPECT_NE(report.find("effusion"), std::string::npos);
  EXPECT_NE(report.find("moderate"), std::string::npos);
}

TEST(Scene, FindingsWithoutLabelsAreIgnored) {
  EXPECT_EQ(label_index_of_finding("fracture"), -1);
  SyntheticScene s;
  s.findings.push_back({"fracture", "bone", "right", 0});
  for (int v : labels_of(s)) EXPECT_EQ(v, 0);
}

TEST(Scene, ReportsMentionExactlyTheSceneFindings) {
  // Co-finding rules shape the scenes, but a report never names a finding
  // that is not in its own scene.
  const EntityLexicon lex = EntityLexicon::parse(corpus_lexicon_txt());
  GenConfig cfg;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const SyntheticScene s = sample_scene(cfg, seed);
    EXPECT_LE(s.findings.size(), 3u);
    std::set<std::string> names;
    for (const auto& f : s.findings) names.insert(f.name);
    const auto ents = extract_entities(write_report(s, seed + 1), lex);
    EXPECT_EQ(std::set<std::string>(ents.begin(), ents.end()), names) << seed;
  }
}

TEST(Scene, CooccurrenceLivesInTheStoreOnly) {
  const TripletStore with = TripletStore::parse(corpus_triplets_tsv(true));
  const TripletStore without = TripletStore::parse(corpus_triplets_tsv(false));
  EXPECT_EQ(with.triplets().size(), without.triplets().size() + 5);
  EXPECT_NE(std::find(with.triplets().begin(), with.triplets().end(), Triplet{"effusion", "suggestive of", "atelectasis"}),
            with.triplets().end());
  for (const Triplet& t : without.triplets()) EXPECT_EQ(t.relation, "located at");
  for (const auto& w : corpus_vocabulary()) EXPECT_NE(w, "");
}

TEST(Scene, CooccurrenceRaisesJointFrequency) {
  GenConfig on, off;
  off.cooccurrence = false;
  auto joint = [](const GenConfig& cfg) {
    int both = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      const SyntheticScene s = sample_scene(cfg, seed);
      bool a = false, b = false;
      for (const auto& f : s.findings) {
        a |= f.name == "effusion";
        b |= f.name == "atelectasis";
      }
      both += a && b;
    }
    return both;
  };
  EXPECT_GT(joint(on), 2 * joint(off));
}

TEST(Render, NearestCentroidSeparatesALabel) {
  // A finding leaves a visible mark: classify "effusion present" by the
  // nearer of the two class means.
  GenConfig cfg;
  std::vector<Matrix> imgs;
  std::vector<int> y;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const SyntheticScene s = sample_scene(cfg, seed);
    imgs.push_back(SceneRenderer::render(s, seed, cfg.noise));
    y.push_back(labels_of(s)[2]);
  }
  Matrix mean[2] = {Matrix::Zero(64, 64), Matrix::Zero(64, 64)};
  int n[2] = {0, 0};
  for (std::size_t i = 0; i < 300; ++i) {
    mean[y[i]] += imgs[i];
    ++n[y[i]];
  }
  ASSERT_GT(n[1], 5);
  for (int c = 0; c < 2; ++c) mean[c] /= n[c];
  int correct = 0;
  for (std::size_t i = 300; i < 400; ++i) {
    const int pred = (imgs[i] - mean[1]).squaredNorm() < (imgs[i] - mean[0]).squaredNorm();
    correct += pred == y[i];
  }
  EXPECT_GE(correct, 70);
}

TEST(Render, ValuesInUnitRangeAndDeterministic) {
  GenConfig cfg;
  const SyntheticScene s = sample_scene(cfg, 5);
  const Matrix a = SceneRenderer::render(s, 9, 0.05), b = SceneRenderer::render(s, 9, 0.05);
  EXPECT_EQ(a, b);
  EXPECT_GE(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1.0);
  EXPECT_THROW(SceneRenderer::cell_of("zzz", "left"), std::invalid_argument);
}

TEST(Pgm, RoundTripWithinQuantization) {
  const std::string dir = testing::temp_dir("pgm");
  const Matrix img = testing::random_matrix(64, 64, 3, 0, 1);
  write_pgm(dir + "/x.pgm", img);
  const Matrix back = read_pgm(dir + "/x.pgm");
  EXPECT_LE((back - img).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);
}

TEST(Json, RecordRoundTrip) {
  CorpusRecord r;
  r.id = 12;
  r.image_path = "images/000012.pgm";
  r.report = "there is \"quoted\" text .";
  r.labels[4] = 1;
  r.split = Split::val;
  r.source_id = 3;
  r.question = "is there mass ?";
  r.answer = "yes";
  r.qtype = "closed";
  const CorpusRecord b = record_from_json(record_to_json(r));
  EXPECT_EQ(b.id, r.id);
  EXPECT_EQ(b.report, r.report);
  EXPECT_EQ(b.labels, r.labels);
  EXPECT_EQ(b.split, r.split);
  EXPECT_EQ(b.source_id, r.source_id);
  EXPECT_EQ(b.answer, r.answer);
  EXPECT_EQ(b.qtype, r.qtype);
}

TEST(GenConfig, Validation) {
  GenConfig cfg;
  cfg.cooccurrence_prob = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(parse_split("dev"), ParseError);
  EXPECT_EQ(parse_split("test"), Split::test);
}

}  // namespace
}  // namespace motor
