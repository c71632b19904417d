#include "motor/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motor {
namespace {

// Log-probabilities at the last position of each prefix; rows of image_rows
// are Lv-blocks aligned with prefixes.
Matrix last_log_probs(const MotorModel& model, const Matrix& image_rows, const std::vector<std::vector<int>>& prefixes) {
  Tape t(false);
  TokenBatch tokens = TokenBatch::from(prefixes);
  Var logits = model.decode_logits(t, tokens, t.constant(image_rows));
  const Matrix& z = logits.value();
  Matrix out(static_cast<Eigen::Index>(prefixes.size()), z.cols());
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const Eigen::Index r = static_cast<Eigen::Index>(b) * tokens.len + static_cast<Eigen::Index>(prefixes[b].size()) - 1;
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    out.row(static_cast<Eigen::Index>(b)) = z.row(r).array() - lse;
  }
  return out;
}

Matrix gather_images(const Matrix& image_feats, int Lv, const std::vector<int>& which) {
  Matrix out(static_cast<Eigen::Index>(which.size()) * Lv, image_feats.cols());
  for (std::size_t i = 0; i < which.size(); ++i) out.middleRows(static_cast<Eigen::Index>(i) * Lv, Lv) = image_feats.middleRows(which[i] * Lv, Lv);
  return out;
}

int argmax(const Matrix& logp, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < logp.cols(); ++j)
    if (logp(row, j) > logp(row, best)) best = j;
  return static_cast<int>(best);
}

struct Beam {
  std::vector<int> tokens;  // starts with [BOS]
  double score = 0.0;
};

std::vector<int> beam_search(const MotorModel& model, const Matrix& image, const GenerateOptions& opt) {
  const int Lv = model.config().image_tokens();
  std::vector<Beam> live{{{Tokenizer::kBos}, 0.0}};
  std::vector<Beam> done;
  for (int step = 0; step < opt.max_len && !live.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const Beam& b : live) prefixes.push_back(b.tokens);
    const Matrix logp = last_log_probs(model, gather_images(image, Lv, std::vector<int>(live.size(), 0)), prefixes);
    struct Cand {
      double score;
      std::size_t beam;
      int token;
    };
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < live.size(); ++b)
      for (Eigen::Index v = 0; v < logp.cols(); ++v)
        cands.push_back({live[b].score + logp(static_cast<Eigen::Index>(b), v), b, static_cast<int>(v)});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) { return a.score > c.score; });
    std::vector<Beam> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size() + done.size()) >= opt.beam_width) break;
      Beam nb{live[c.beam].tokens, c.score};
      nb.tokens.push_back(c.token);
      if (c.token == Tokenizer::kEos || step + 1 == opt.max_len) {
        done.push_back(std::move(nb));
      } else {
        next.push_back(std::move(nb));
      }
    }
    live = std::move(next);
  }
  for (Beam& b : live) done.push_back(std::move(b));
  auto best = std::max_element(done.begin(), done.end(), [](const Beam& a, const Beam& b) { return a.score < b.score; });
  std::vector<int> out;
  for (std::size_t i = 1; i < best->tokens.size(); ++i) {
    if (best->tokens[i] == Tokenizer::kEos) break;
    out.push_back(best->tokens[i]);
  }
  return out;
}

}  // namespace

Vector decode_report(const MotorModel& model, const Matrix& image_feats, const std::vector<int>& prefix) {
  if (prefix.empty() || prefix.front() != Tokenizer::kBos) throw std::invalid_argument("decode prefix must start with [BOS]");
  if (image_feats.rows() != model.config().image_tokens()) throw ShapeError("decode_report: expects one image");
  return last_log_probs(model, image_feats, {prefix}).row(0).array().exp().transpose();
}

std::vector<std::vector<int>> generate(const MotorModel& model, const Matrix& image_feats, const GenerateOptions& opt) {
  const int Lv = model.config().image_tokens();
  if (opt.beam_width < 1) throw std::invalid_argument("beam width must be at least 1");
  if (opt.max_len < 1 || opt.max_len >= model.config().max_text_len) {
    throw std::invalid_argument("generation length must lie in [1, max_text_len)");
  }
  if (image_feats.rows() % Lv != 0) throw ShapeError("generate: image feature rows");
  const int B = static_cast<int>(image_feats.rows() / Lv);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(B));
  if (opt.beam_width > 1) {
    for (int b = 0; b < B; ++b) out[static_cast<std::size_t>(b)] = beam_search(model, image_feats.middleRows(b * Lv, Lv), opt);
    return out;
  }
  // Greedy, batched over unfinished examples.
  std::vector<std::vector<int>> prefixes(static_cast<std::size_t>(B), std::vector<int>{Tokenizer::kBos});
  std::vector<int> active(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) active[static_cast<std::size_t>(b)] = b;
  for (int step = 0; step < opt.max_len && !active.empty(); ++step) {
    std::vector<std::vector<int>> batch;
    for (int b : active) batch.push_back(prefixes[static_cast<std::size_t>(b)]);
    const Matrix logp = last_log_probs(model, gather_images(image_feats, Lv, active), batch);
    std::vector<int> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const int b = active[i];
      const int tok = argmax(logp, static_cast<Eigen::Index>(i));
      if (tok == Tokenizer::kEos) continue;
      prefixes[static_cast<std::size_t>(b)].push_back(tok);
      out[static_cast<std::size_t>(b)].push_back(tok);
      still.push_back(b);
    }
    active = std::move(still);
  }
  return out;
}

}  // namespace motor
