#include "fixtures.hpp"

#include "motor/objectives.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

namespace motor {
namespace {

using testing::corpus_tokenizer;
using testing::random_matrix;
using testing::random_unit_rows;
using testing::tiny_config;

class Injection : public ::testing::Test {
 protected:
  EntityLexicon lexicon = EntityLexicon::parse(corpus_lexicon_txt());
  TripletStore store = TripletStore::parse(corpus_triplets_tsv(true));
  std::map<std::int64_t, std::string> reports{
      {100, "there is a mass in the left lung"},
      {101, "small effusion on the right"},
      {102, "the heart is normal"},
      {103, "cardiomegaly with edema"},
  };
  MotorModel model{tiny_config(), corpus_tokenizer().vocab_size(), 21};
  Matrix images = random_matrix(2, 256, 3, 0, 1);

  KnowledgeBase kb(const TripletStore* s = nullptr) {
    KnowledgeBase k;
    k.graph = &testing::default_graph();
    k.tokenizer = &corpus_tokenizer();
    k.lexicon = &lexicon;
    k.store = s ? s : &store;
    k.report_text = [this](std::int64_t id) -> const std::string* {
      auto it = reports.find(id);
      return it == reports.end() ? nullptr : &it->second;
    };
    return k;
  }
};

TEST_F(Injection, AttentionRowsSumToOne) {
  Tape t(false);
  InjectionOptions opt;
  opt.capture_attention = true;
  const std::vector<std::vector<Triplet>> pinned{{{"mass", "located at", "lung"}}, {}};
  const InjectionOutput out = run_injection(t, model, kb(), images, {}, nullptr, opt, &pinned);
  ASSERT_EQ(out.attn_gk.size(), 2u);
  ASSERT_EQ(out.attn_sk.size(), 2u);
  for (const Matrix& a : out.attn_gk) {
    EXPECT_EQ(a.rows(), 5);
    EXPECT_EQ(a.cols(), 28);
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  }
  for (const Matrix& a : out.attn_sk)
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  // The second example only has [CLS]: padded columns get no weight.
  EXPECT_NEAR(out.attn_sk[1].col(0).sum(), 5.0, 1e-12);
}

TEST_F(Injection, RetrievalUsesGeneralKnowledgeProjection) {
  InjectionOptions opt;
  opt.k = 1;
  opt.exclude_paired = false;
  Tape t(false);
  const InjectionOutput probe = run_injection(t, model, kb(), images.topRows(1), {}, nullptr, opt);
  const Matrix plain = model.project(t, ad::rows(probe.f_v, 0, 1), Head::image).value();
  const Matrix enhanced = probe.gk_proj.value();
  ASSERT_LT(plain.row(0).dot(enhanced.row(0)), 1.0 - 1e-6);
  // id 100 sits exactly on the plain query, id 103 on the enhanced one.
  FeatureQueue q(4, 6);
  Matrix rows(2, 6);
  rows << plain, enhanced;
  q.enqueue(rows, std::vector<std::int64_t>{100, 103});
  Tape t2(false);
  const InjectionOutput out = run_injection(t2, model, kb(), images.topRows(1), {}, &q, opt);
  EXPECT_EQ(out.specific[0].retrieved_ids, std::vector<std::int64_t>{103});
}

TEST_F(Injection, RetrieveSpecificHandTrace) {
  FeatureQueue q(8, 3);
  Matrix rows(4, 3);
  rows << 1, 0, 0,  //
      0.8, 0.6, 0,  //
      0, 1, 0,      //
      0, 0, 1;
  q.enqueue(rows, std::vector<std::int64_t>{100, 101, 102, 103});
  const Vector query = Vector::Unit(3, 0);
  // Similarities 1, 0.8, 0, 0. Excluding 100 leaves 101 then one of the zeros
  // (older entry first: 102).
  const SpecificKnowledge sk = retrieve_specific(query, q, kb(), 2, 32, 100);
  EXPECT_EQ(sk.retrieved_ids, (std::vector<std::int64_t>{101, 102}));
  // 101 mentions effusion, 102 no entity.
  EXPECT_EQ(sk.triplets, query_triplets(store, {"effusion"}, 32));
  EXPECT_FALSE(sk.triplets.empty());

  const SpecificKnowledge with_mass = retrieve_specific(query, q, kb(), 2, 32);
  EXPECT_EQ(with_mass.retrieved_ids, (std::vector<std::int64_t>{100, 101}));
  EXPECT_EQ(with_mass.triplets, query_triplets(store, {"mass", "effusion"}, 32));
}

TEST_F(Injection, RetrieveSpecificSkipsDuplicateIds) {
  FeatureQueue q(8, 2);
  Matrix rows(3, 2);
  rows << 1, 0, 1, 0, 0, 1;
  q.enqueue(rows, std::vector<std::int64_t>{101, 101, 103});
  const SpecificKnowledge sk = retrieve_specific(Vector::Unit(2, 0), q, kb(), 2, 32);
  EXPECT_EQ(sk.retrieved_ids, (std::vector<std::int64_t>{101, 103}));
}

TEST_F(Injection, EmptyKnowledgeEqualsPinnedEmptyLists) {
  InjectionOptions opt;
  opt.retrieve = false;
  Tape t(false);
  const InjectionOutput a = run_injection(t, model, kb(), images, {}, nullptr, opt);
  const std::vector<std::vector<Triplet>> empty(2);
  const InjectionOutput b = run_injection(t, model, kb(), images, {}, nullptr, opt, &empty);
  EXPECT_EQ(a.f_v_gk_sk.value(), b.f_v_gk_sk.value());
  EXPECT_TRUE(a.specific[0].triplets.empty());
  EXPECT_TRUE(a.f_v_gk_sk.value().allFinite());
}

TEST_F(Injection, DuplicateStoreRowsDoNotChangeFeatures) {
  std::vector<Triplet> doubled = store.triplets();
  for (const Triplet& x : store.triplets()) doubled.push_back(x);
  const TripletStore dup(doubled);
  FeatureQueue q(4, 6);
  q.enqueue(random_unit_rows(4, 6, 5), std::vector<std::int64_t>{100, 101, 102, 103});
  InjectionOptions opt;
  opt.exclude_paired = false;
  Tape t(false);
  const InjectionOutput a = run_injection(t, model, kb(), images, {}, &q, opt);
  const InjectionOutput b = run_injection(t, model, kb(&dup), images, {}, &q, opt);
  EXPECT_EQ(a.f_v_gk_sk.value(), b.f_v_gk_sk.value());
}

TEST_F(Injection, DisabledKnowledgeIsIdentity) {
  InjectionOptions opt;
  opt.use_knowledge = false;
  Tape t(false);
  const InjectionOutput out = run_injection(t, model, kb(), images, {}, nullptr, opt);
  EXPECT_EQ(out.f_v_gk_sk.value(), out.f_v.value());
  EXPECT_FALSE(out.gk_proj.valid());
}

TEST(Mlc, ForwardIsDotProducts) {
  const Matrix img = random_unit_rows(3, 4, 1), lab = random_unit_rows(14, 4, 2);
  Tape t(false);
  const Matrix p = mlc_forward(t.constant(img), t.constant(lab)).value();
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 14; ++c) EXPECT_NEAR(p(i, c), img.row(i).dot(lab.row(c)), 1e-15);
}

TEST(Mlc, ZeroLogitsGiveLnTwo) {
  Tape t(false);
  Matrix labels = Matrix::Zero(4, 14);
  labels(0, 3) = labels(2, 7) = 1;
  const double l = mlc_loss(t.constant(Matrix::Zero(4, 14)), labels, t.constant(Matrix::Constant(1, 1, 0.07))).scalar();
  EXPECT_NEAR(l, std::log(2.0), 1e-12);
}

TEST(Mlc, LossMatchesLoopOracle) {
  const Matrix p = random_matrix(3, 14, 4);
  Matrix y = Matrix::Zero(3, 14);
  for (int i = 0; i < 3; ++i) y(i, (5 * i) % 14) = 1;
  const double tau = 0.3;
  double oracle = 0;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 14; ++c) {
      const double s = 1.0 / (1.0 + std::exp(-p(i, c) / tau));
      oracle -= y(i, c) * std::log(s) + (1 - y(i, c)) * std::log(1 - s);
    }
  oracle /= 42;
  Tape t(false);
  EXPECT_NEAR(mlc_loss(t.constant(p), y, t.constant(Matrix::Constant(1, 1, tau))).scalar(), oracle, 1e-12);
}

TEST(Mlc, LabelSetValidation) {
  EXPECT_NO_THROW(LabelSet::chest14().validate());
  LabelSet short_set{{"effusion"}};
  EXPECT_THROW(short_set.validate(), SchemaError);
  LabelSet dup = LabelSet::chest14();
  dup.names[1] = dup.names[0];
  EXPECT_THROW(dup.validate(), SchemaError);
}

TEST_F(Injection, LabelFeaturesAreUnitRows) {
  Tape t(false);
  const Matrix l = encode_labels(t, model, LabelSet::chest14(), corpus_tokenizer()).value();
  ASSERT_EQ(l.rows(), 14);
  for (int i = 0; i < 14; ++i) EXPECT_NEAR(l.row(i).norm(), 1.0, 1e-9);
}

double grad_norm(const ParamStore& s, const std::string& prefix) {
  double n = 0;
  for (const Parameter* p : s.all())
    if (p->name.starts_with(prefix) && p->grad.size() > 0) n += p->grad.squaredNorm();
  return std::sqrt(n);
}

TEST_F(Injection, MlcGradientReachesGeneralInjectionOnly) {
  model.params().zero_grad();
  Tape t;
  InjectionOptions opt;
  opt.retrieve = false;
  const InjectionOutput out = run_injection(t, model, kb(), images, {}, nullptr, opt);
  Var labels = encode_labels(t, model, LabelSet::chest14(), corpus_tokenizer());
  Matrix y = Matrix::Zero(2, 14);
  y(0, 2) = 1;
  t.backward(mlc_loss(mlc_forward(out.gk_proj, labels), y, model.mlc_temperature(t)));
  EXPECT_GT(grad_norm(model.params(), "gk_inject."), 0.0);
  EXPECT_GT(grad_norm(model.params(), "gk.enc."), 0.0);
  EXPECT_GT(grad_norm(model.params(), "mlc_temp"), 0.0);
  EXPECT_EQ(grad_norm(model.params(), "sk_inject."), 0.0);
  EXPECT_EQ(grad_norm(model.params(), "decoder."), 0.0);
}

TEST_F(Injection, LmGradientSkipsLabelPath) {
  model.params().zero_grad();
  Tape t;
  InjectionOptions opt;
  opt.retrieve = false;
  const InjectionOutput out = run_injection(t, model, kb(), images, {}, nullptr, opt);
  const LmBatch lm = make_lm_batch({corpus_tokenizer().encode("left effusion", TokenMode::decode),
                                    corpus_tokenizer().encode("the heart is normal", TokenMode::decode)});
  t.backward(lm_loss(t, model, out.f_v_gk_sk, lm, 0.1));
  EXPECT_GT(grad_norm(model.params(), "sk_inject."), 0.0);
  EXPECT_GT(grad_norm(model.params(), "gk_inject."), 0.0);
  EXPECT_EQ(grad_norm(model.params(), "mlc_temp"), 0.0);
  EXPECT_EQ(grad_norm(model.params(), "proj."), 0.0);
  EXPECT_EQ(grad_norm(model.params(), "text.enc."), 0.0);
}

}  // namespace
}  // namespace motor
