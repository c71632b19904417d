#pragma once

// Pretraining losses: image-text contrastive with momentum queues,
// image-text matching, autoregressive language modeling, and their weighted
// sum with the multi-label classification loss.

#include "motor/model.hpp"

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace motor {

struct LossWeights {
  double itm = 1.0;
  double lm = 1.0;
  double mlc = 1.0;
  void validate() const;
};

/// Momentum-side candidates for ITC. Batch rows come first, then the queue.
struct ItcCandidates {
  Matrix image_momentum;  // B x p
  Matrix text_momentum;   // B x p
  Matrix image_queue;     // M x p (snapshot)
  Matrix text_queue;      // M x p (snapshot)
};

struct ItcLogits {
  Var i2t;  // B x (B + M), similarity / tau
  Var t2i;
};

ItcLogits itc_similarities(Var image_proj, Var text_proj, const ItcCandidates& candidates, Var tau);

Matrix softmax_rows(const Matrix& logits);

/// One-hot targets at column i for row i.
Matrix itc_targets(int batch, int candidates);

/// 1/2 * (CE(i2t, g_i2t) + CE(t2i, g_t2i)), batch-averaged, probabilities floored at 1e-12.
Var itc_loss(const ItcLogits& logits, const Matrix& g_i2t, const Matrix& g_t2i);

struct ItmNegatives {
  std::vector<int> text_for_image;  // hard negative report index per image
  std::vector<int> image_for_text;  // hard negative image index per report
};

/// Draws in-batch negatives with probability proportional to softmax
/// similarity, never the positive. Needs batch >= 2.
ItmNegatives sample_itm_negatives(const Matrix& i2t_logits_batch, const Matrix& t2i_logits_batch, std::mt19937_64& rng);

/// Column of the match class in ITM logits.
inline constexpr int kItmMatch = 1;

/// Mean two-class cross-entropy over B positives and 2B negatives.
/// image_feats: B*Lv x d; match_tokens: B sequences starting with [Encode].
Var itm_loss(Tape& t, const MotorModel& model, Var image_feats, const std::vector<std::vector<int>>& match_tokens,
             const ItmNegatives& negatives);

/// Teacher-forced decode inputs (all but the last token) and targets.
struct LmBatch {
  TokenBatch inputs;
  std::vector<int> targets;  // batch*len, kPad where ignored
  Vector weights;            // 1 for real targets
};
LmBatch make_lm_batch(const std::vector<std::vector<int>>& decode_tokens);

/// Mean token cross-entropy over non-pad targets, optionally label-smoothed.
Var lm_loss(Tape& t, const MotorModel& model, Var image_feats, const LmBatch& batch, double label_smoothing = 0.0);

/// L = itc + w.itm * itm + w.lm * lm + w.mlc * mlc. Throws NumericError when
/// any component is not finite.
Var total_loss(Var itc, Var itm, Var lm, Var mlc, const LossWeights& weights);

}  // namespace motor
