#include "motor/objectives.hpp"

#include <cmath>
#include <sstream>

namespace motor {

void LossWeights::validate() const {
  for (double w : {itm, lm, mlc}) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
}

ItcLogits itc_similarities(Var image_proj, Var text_proj, const ItcCandidates& c, Var tau) {
  Tape& t = *image_proj.tape;
  const Eigen::Index B = image_proj.rows();
  if (text_proj.rows() != B || c.image_momentum.rows() != B || c.text_momentum.rows() != B) {
    throw ShapeError("itc: batch size mismatch");
  }
  if (c.image_queue.rows() != c.text_queue.rows()) throw ShapeError("itc: queue size mismatch");
  Matrix text_all(B + c.text_queue.rows(), c.text_momentum.cols());
  text_all << c.text_momentum, c.text_queue;
  Matrix image_all(B + c.image_queue.rows(), c.image_momentum.cols());
  image_all << c.image_momentum, c.image_queue;
  Var i2t = ad::div_scalar(ad::matmul_nt(image_proj, t.constant(std::move(text_all))), tau);
  Var t2i = ad::div_scalar(ad::matmul_nt(text_proj, t.constant(std::move(image_all))), tau);
  return {i2t, t2i};
}

Matrix softmax_rows(const Matrix& logits) { return masked_softmax(logits, nullptr); }

Matrix itc_targets(int batch, int candidates) {
  if (candidates < batch) throw ShapeError("itc_targets: fewer candidates than batch rows");
  Matrix g = Matrix::Zero(batch, candidates);
  for (int i = 0; i < batch; ++i) g(i, i) = 1.0;
  return g;
}

Var itc_loss(const ItcLogits& logits, const Matrix& g_i2t, const Matrix& g_t2i) {
  Var a = ad::softmax_cross_entropy(logits.i2t, g_i2t, nullptr, 1e-12);
  Var b = ad::softmax_cross_entropy(logits.t2i, g_t2i, nullptr, 1e-12);
  return ad::scale(ad::add(a, b), 0.5);
}

ItmNegatives sample_itm_negatives(const Matrix& i2t, const Matrix& t2i, std::mt19937_64& rng) {
  const Eigen::Index B = i2t.rows();
  if (B < 2) throw std::invalid_argument("ITM needs a batch of at least 2 to form in-batch negatives");
  if (i2t.cols() < B || t2i.rows() != B || t2i.cols() < B) throw ShapeError("sample_itm_negatives: shape");
  auto draw = [&](const Matrix& logits, Eigen::Index row) {
    Matrix p = softmax_rows(logits.block(row, 0, 1, B));
    std::vector<double> w(static_cast<std::size_t>(B));
    for (Eigen::Index j = 0; j < B; ++j) w[static_cast<std::size_t>(j)] = j == row ? 0.0 : p(0, j) + 1e-4;
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return dist(rng);
  };
  ItmNegatives n;
  for (Eigen::Index i = 0; i < B; ++i) n.text_for_image.push_back(draw(i2t, i));
  for (Eigen::Index i = 0; i < B; ++i) n.image_for_text.push_back(draw(t2i, i));
  return n;
}

Var itm_loss(Tape& t, const MotorModel& model, Var image_feats, const std::vector<std::vector<int>>& match_tokens,
             const ItmNegatives& negatives) {
  const int B = static_cast<int>(match_tokens.size());
  if (B < 2) throw std::invalid_argument("ITM needs a batch of at least 2 to form in-batch negatives");
  if (negatives.text_for_image.size() != match_tokens.size() || negatives.image_for_text.size() != match_tokens.size()) {
    throw ShapeError("itm_loss: negatives do not match batch");
  }
  const int Lv = model.config().image_tokens();
  if (image_feats.rows() != static_cast<Eigen::Index>(B) * Lv) throw ShapeError("itm_loss: image feature rows");
  std::vector<std::vector<int>> seqs;
  std::vector<int> image_of_pair;
  for (int i = 0; i < B; ++i) {
    seqs.push_back(match_tokens[static_cast<std::size_t>(i)]);
    image_of_pair.push_back(i);
  }
  for (int i = 0; i < B; ++i) {
    seqs.push_back(match_tokens[static_cast<std::size_t>(negatives.text_for_image[static_cast<std::size_t>(i)])]);
    image_of_pair.push_back(i);
  }
  for (int i = 0; i < B; ++i) {
    seqs.push_back(match_tokens[static_cast<std::size_t>(i)]);
    image_of_pair.push_back(negatives.image_for_text[static_cast<std::size_t>(i)]);
  }
  std::vector<int> kv_rows;
  kv_rows.reserve(image_of_pair.size() * static_cast<std::size_t>(Lv));
  for (int img : image_of_pair)
    for (int r = 0; r < Lv; ++r) kv_rows.push_back(img * Lv + r);
  TokenBatch tokens = TokenBatch::from(seqs);
  Var kv = ad::select_rows(image_feats, kv_rows);
  Var fused = model.match_encode(t, tokens, kv);
  Var logits = model.itm_logits(t, ad::select_rows(fused, first_rows(tokens.batch, tokens.len)));
  Matrix targets = Matrix::Zero(3 * B, 2);
  for (int r = 0; r < 3 * B; ++r) targets(r, r < B ? kItmMatch : 1 - kItmMatch) = 1.0;
  return ad::softmax_cross_entropy(logits, targets);
}

LmBatch make_lm_batch(const std::vector<std::vector<int>>& decode_tokens) {
  if (decode_tokens.empty()) throw std::invalid_argument("make_lm_batch: empty batch");
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
  for (const auto& s : decode_tokens) {
    if (s.size() < 2 || s[0] != Tokenizer::kBos) throw std::invalid_argument("decode tokens must start with [BOS]");
    inputs.emplace_back(s.begin(), s.end() - 1);
    targets.emplace_back(s.begin() + 1, s.end());
  }
  LmBatch out;
  out.inputs = TokenBatch::from(inputs);
  const int B = out.inputs.batch, L = out.inputs.len;
  out.targets.assign(static_cast<std::size_t>(B) * L, Tokenizer::kPad);
  out.weights = Vector::Zero(static_cast<Eigen::Index>(B) * L);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < L && i < static_cast<int>(targets[static_cast<std::size_t>(b)].size()); ++i) {
      const int tok = targets[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
      out.targets[static_cast<std::size_t>(b) * L + i] = tok;
      out.weights(b * L + i) = tok == Tokenizer::kPad ? 0.0 : 1.0;
    }
  }
  return out;
}

Var lm_loss(Tape& t, const MotorModel& model, Var image_feats, const LmBatch& batch, double label_smoothing) {
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw std::invalid_argument("label smoothing must lie in [0, 1)");
  Var logits = model.decode_logits(t, batch.inputs, image_feats);
  const int V = model.vocab_size();
  Matrix targets = Matrix::Zero(logits.rows(), V);
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    if (batch.weights(r) == 0.0) continue;
    if (label_smoothing > 0.0) targets.row(r).setConstant(label_smoothing / V);
    targets(r, batch.targets[static_cast<std::size_t>(r)]) += 1.0 - label_smoothing;
  }
  return ad::softmax_cross_entropy(logits, targets, &batch.weights);
}

Var total_loss(Var itc, Var itm, Var lm, Var mlc, const LossWeights& w) {
  w.validate();
  const double parts[] = {itc.scalar(), itm.scalar(), lm.scalar(), mlc.scalar()};
  const char* names[] = {"itc", "itm", "lm", "mlc"};
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(parts[i])) {
      std::ostringstream msg;
      msg << "non-finite loss component " << names[i] << " (itc=" << parts[0] << " itm=" << parts[1] << " lm=" << parts[2]
          << " mlc=" << parts[3] << ")";
      throw NumericError(msg.str());
    }
  }
  Var total = ad::add(itc, ad::scale(itm, w.itm));
  total = ad::add(total, ad::scale(lm, w.lm));
  return ad::add(total, ad::scale(mlc, w.mlc));
}

}  // namespace motor
