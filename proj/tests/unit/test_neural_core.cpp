#include "fixtures.hpp"

#include "motor/decoding.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace motor {
namespace {

using testing::corpus_tokenizer;
using testing::random_matrix;
using testing::tiny_config;

TEST(Tokenizer, ModesAndPadding) {
  const Tokenizer& tok = corpus_tokenizer();
  const auto cls = tok.encode("left effusion", TokenMode::encode_cls);
  const auto match = tok.encode("left effusion", TokenMode::encode_match);
  const auto dec = tok.encode("left effusion", TokenMode::decode);
  ASSERT_EQ(cls.size(), 16u);
  EXPECT_EQ(cls[0], Tokenizer::kCls);
  EXPECT_EQ(match[0], Tokenizer::kEncode);
  EXPECT_EQ(dec[0], Tokenizer::kBos);
  EXPECT_EQ(dec[3], Tokenizer::kEos);
  EXPECT_EQ(cls[3], Tokenizer::kPad);
  EXPECT_EQ(tok.decode(dec), "left effusion");
  EXPECT_EQ(tok.encode("zzz", TokenMode::encode_cls)[1], Tokenizer::kUnk);
}

TEST(Tokenizer, TruncationKeepsEos) {
  const Tokenizer tok({"a"}, 5);
  const auto dec = tok.encode("a a a a a a a a", TokenMode::decode);
  EXPECT_EQ(dec, (std::vector<int>{Tokenizer::kBos, 7, 7, 7, Tokenizer::kEos}));
}

TEST(Tokenizer, SaveLoadRoundTrip) {
  const std::string dir = testing::temp_dir("tokenizer");
  corpus_tokenizer().save(dir + "/vocab.txt");
  const Tokenizer back = Tokenizer::load(dir + "/vocab.txt", 16);
  ASSERT_EQ(back.vocab_size(), corpus_tokenizer().vocab_size());
  for (int i = 0; i < back.vocab_size(); ++i) EXPECT_EQ(back.word(i), corpus_tokenizer().word(i));
}

TEST(TokenBatch, DropsTrailingPadColumns) {
  const TokenBatch b = TokenBatch::from({{1, 8, 9, 0, 0}, {1, 8, 0, 0, 0}});
  EXPECT_EQ(b.len, 3);
  Matrix valid(2, 3);
  valid << 1, 1, 1, 1, 1, 0;
  EXPECT_EQ(b.valid, valid);
}

TEST(MaskedSoftmax, RowsSumToOneAndMaskedAreZero) {
  const Matrix s = random_matrix(4, 5, 1, -3, 3);
  Matrix allowed = Matrix::Ones(4, 5);
  allowed(0, 1) = allowed(2, 4) = allowed(3, 0) = 0;
  const Matrix p = masked_softmax(s, &allowed);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(2, 4), 0.0);
  EXPECT_EQ(p(3, 0), 0.0);
}

TEST(Autograd, LinearLayerGradient) {
  ParamStore store;
  Parameter& w = store.add("w", random_matrix(3, 2, 4), true);
  Tape t;
  const Matrix x = random_matrix(5, 3, 5);
  Var y = ad::sum(ad::matmul(t.constant(x), t.param(w)));
  t.backward(y);
  // d/dW sum(XW) = X^T 1.
  EXPECT_TRUE(w.grad.isApprox(x.transpose() * Matrix::Ones(5, 2), 1e-14));
}

TEST(Patchify, RowMajorPatches) {
  ModelConfig c = tiny_config();
  Matrix img(1, 256);
  for (int i = 0; i < 256; ++i) img(0, i) = i;
  const Matrix p = patchify(img, c);
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 64);
  EXPECT_EQ(p(0, 0), 0);
  EXPECT_EQ(p(1, 0), 8);        // second patch starts at column 8
  EXPECT_EQ(p(2, 0), 8 * 16);   // third patch starts at row 8
  EXPECT_EQ(p(0, 8), 16);       // second pixel row of the first patch
}

TEST(EncodeImage, SixtyFourByEightGives65Rows) {
  ModelConfig c = tiny_config();
  c.image_size = 64;
  c.patch_size = 8;
  const MotorModel m(c, corpus_tokenizer().vocab_size(), 1);
  Tape t(false);
  const Var out = m.encode_image(t, random_matrix(2, 64 * 64, 3, 0, 1));
  EXPECT_EQ(out.rows(), 2 * 65);
  EXPECT_EQ(out.cols(), c.d_model);
}

TEST(EncodeImage, PatchPermutationWithoutPositionsPermutesRows) {
  MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 2);
  m.params().get("image.pos").value.setZero();
  const Matrix img = random_matrix(1, 256, 4, 0, 1);
  // Swap patch 0 (top-left) and patch 3 (bottom-right).
  Matrix swapped = img;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) std::swap(swapped(0, y * 16 + x), swapped(0, (y + 8) * 16 + x + 8));
  Tape t(false);
  const Matrix a = m.encode_image(t, img).value();
  const Matrix b = m.encode_image(t, swapped).value();
  EXPECT_TRUE(a.row(0).isApprox(b.row(0), 1e-12));
  EXPECT_TRUE(a.row(1).isApprox(b.row(4), 1e-12));
  EXPECT_TRUE(a.row(4).isApprox(b.row(1), 1e-12));
  EXPECT_TRUE(a.row(2).isApprox(b.row(2), 1e-12));
}

class TextEncoder : public ::testing::Test {
 protected:
  MotorModel model{tiny_config(), corpus_tokenizer().vocab_size(), 3};
  Matrix encode(const TokenBatch& b, const Matrix* visible = nullptr) {
    Tape t(false);
    return model.encode_text(t, b, visible).value();
  }
  TokenBatch batch(const std::string& text) { return TokenBatch::from({corpus_tokenizer().encode(text, TokenMode::encode_cls)}); }
};

TEST_F(TextEncoder, AllOnesMaskEqualsNoMask) {
  const TokenBatch b = batch("small left effusion");
  const Matrix ones = Matrix::Ones(b.len, b.len);
  EXPECT_EQ(encode(b, &ones), encode(b));
}

TEST_F(TextEncoder, IdentityMaskIsolatesTokens) {
  const TokenBatch a = batch("small left effusion");
  TokenBatch c = a;
  c.ids[3] = corpus_tokenizer().id("mass");
  const Matrix eye = Matrix::Identity(a.len, a.len);
  const Matrix ea = encode(a, &eye), ec = encode(c, &eye);
  for (int i = 0; i < a.len; ++i) {
    if (i == 3) EXPECT_FALSE(ea.row(i).isApprox(ec.row(i)));
    else EXPECT_EQ(ea.row(i), ec.row(i));
  }
}

TEST_F(TextEncoder, PaddingDoesNotChangeRealRows) {
  const auto ids = corpus_tokenizer().encode("left effusion", TokenMode::encode_cls);
  const TokenBatch alone = TokenBatch::from({ids});
  // A longer partner forces extra pad columns on the short sequence.
  const TokenBatch padded = TokenBatch::from({ids, corpus_tokenizer().encode("large right pleural effusion with mass", TokenMode::encode_cls)});
  const Matrix a = encode(alone), p = encode(padded);
  for (int i = 0; i < alone.len; ++i) EXPECT_TRUE(a.row(i).isApprox(p.row(i), 1e-12)) << i;
}

TEST_F(TextEncoder, MaskShapeChecked) {
  const TokenBatch b = batch("effusion");
  const Matrix wrong = Matrix::Ones(b.len + 1, b.len + 1);
  Tape t(false);
  EXPECT_THROW(model.encode_text(t, b, &wrong), ShapeError);
}

TEST(CrossEncode, DuplicatedKeysLeaveOutputUnchanged) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 4);
  const Matrix q = random_matrix(3, 8, 1);
  const Matrix kv = random_matrix(4, 8, 2);
  Matrix kv2(8, 8);
  kv2 << kv, kv;
  Tape t(false);
  const Matrix a = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 3, nullptr, false, t.constant(kv), 4, false, nullptr).value();
  const Matrix b = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 3, nullptr, false, t.constant(kv2), 8, false, nullptr).value();
  EXPECT_TRUE(a.isApprox(b, 1e-12));
}

TEST(CrossEncode, OutputDependsOnKeys) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 4);
  const Matrix q = random_matrix(3, 8, 1);
  Tape t(false);
  const Matrix a = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 3, nullptr, false, t.constant(random_matrix(4, 8, 2)), 4,
                                  false, nullptr).value();
  const Matrix b = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 3, nullptr, false, t.constant(random_matrix(4, 8, 9)), 4,
                                  false, nullptr).value();
  EXPECT_GT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CrossEncode, InvalidKeysAreIgnored) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 4);
  const Matrix q = random_matrix(2, 8, 1);
  Matrix kv = random_matrix(4, 8, 2);
  Matrix valid(1, 4);
  valid << 1, 1, 0, 0;
  Tape t(false);
  const Matrix a = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 2, nullptr, false, t.constant(kv), 4, false, &valid).value();
  kv.bottomRows(2) = random_matrix(2, 8, 77);
  const Matrix b = m.cross_encode(t, m.match_stack(), t.constant(q), 1, 2, nullptr, false, t.constant(kv), 4, false, &valid).value();
  EXPECT_EQ(a, b);
}

TEST(Decoder, CausalPrefixIndependence) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 6);
  const Matrix img = random_matrix(5, 8, 3);
  std::vector<int> seq = corpus_tokenizer().encode("small left effusion with mass", TokenMode::decode);
  const TokenBatch a = TokenBatch::from({seq});
  Tape t(false);
  const Matrix la = m.decode_logits(t, a, t.constant(img)).value();
  for (int j = 1; j < a.len; ++j) {
    TokenBatch b = a;
    b.ids[static_cast<std::size_t>(j)] = corpus_tokenizer().id("nodule");
    const Matrix lb = m.decode_logits(t, b, t.constant(img)).value();
    for (int i = 0; i < j; ++i) EXPECT_LE((la.row(i) - lb.row(i)).cwiseAbs().maxCoeff(), 1e-9) << i << " " << j;
  }
}

TEST(Decoder, BeamOfOneEqualsGreedy) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 6);
  const Matrix img = random_matrix(10, 8, 3);
  GenerateOptions greedy{8, 1};
  const auto g = generate(m, img, greedy);
  ASSERT_EQ(g.size(), 2u);
  // Greedy oracle: argmax of the next-token distribution at each step.
  for (int b = 0; b < 2; ++b) {
    std::vector<int> prefix{Tokenizer::kBos};
    std::vector<int> oracle;
    for (int step = 0; step < 8; ++step) {
      const Vector p = decode_report(m, img.middleRows(b * 5, 5), prefix);
      Eigen::Index best;
      p.maxCoeff(&best);
      if (best == Tokenizer::kEos) break;
      oracle.push_back(static_cast<int>(best));
      prefix.push_back(static_cast<int>(best));
    }
    EXPECT_EQ(g[static_cast<std::size_t>(b)], oracle);
  }
}

TEST(DecodeReport, IsAProbabilityVector) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 6);
  const Vector p = decode_report(m, random_matrix(5, 8, 3), {Tokenizer::kBos});
  EXPECT_EQ(p.size(), corpus_tokenizer().vocab_size());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Projection, UnitNorm) {
  const MotorModel m(tiny_config(), corpus_tokenizer().vocab_size(), 7);
  Tape t(false);
  const Matrix p = m.project(t, t.constant(random_matrix(6, 8, 1)), Head::image).value();
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(p.row(i).norm(), 1.0, 1e-9);  // eps guard inside the norm
}

TEST(Projection, BiasFreeIsScaleInvariant) {
  ModelConfig c = tiny_config();
  c.projection_bias = false;
  const MotorModel m(c, corpus_tokenizer().vocab_size(), 7);
  const Matrix x = random_matrix(3, 8, 1);
  Tape t(false);
  const Matrix a = m.project(t, t.constant(x), Head::text).value();
  const Matrix b = m.project(t, t.constant(3.5 * x), Head::text).value();
  EXPECT_TRUE(a.isApprox(b, 1e-9));
}

TEST(Projection, ZeroRowStaysFinite) {
  ModelConfig c = tiny_config();
  c.projection_bias = false;
  const MotorModel m(c, corpus_tokenizer().vocab_size(), 7);
  Tape t(false);
  const Matrix p = m.project(t, t.constant(Matrix::Zero(2, 8)), Head::image).value();
  EXPECT_TRUE(p.allFinite());
  EXPECT_EQ(p, Matrix::Zero(2, 6));
}

TEST(Model, SameSeedSameWeights) {
  const MotorModel a(tiny_config(), corpus_tokenizer().vocab_size(), 9);
  const MotorModel b(tiny_config(), corpus_tokenizer().vocab_size(), 9);
  const auto pa = a.params().all(), pb = b.params().all();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
}

TEST(Model, TruncatedNormalWithinTwoSigma) {
  std::mt19937_64 rng(1);
  const Matrix m = truncated_normal(50, 50, 0.02, rng);
  EXPECT_LE(m.cwiseAbs().maxCoeff(), 0.04);
}

}  // namespace
}  // namespace motor
