#pragma once

// Autoregressive report decoding on top of the causal decoder.

#include "motor/model.hpp"

#include <vector>

namespace motor {

/// Next-token probabilities after `prefix` (which must start with [BOS]).
/// image_feats: Lv x d for a single image.
Vector decode_report(const MotorModel& model, const Matrix& image_feats, const std::vector<int>& prefix);

struct GenerateOptions {
  int max_len = 48;     // generated tokens, excluding [BOS]
  int beam_width = 1;   // 1 = greedy
};

/// Generated token ids without [BOS] and [EOS]. image_feats is B*Lv x d.
std::vector<std::vector<int>> generate(const MotorModel& model, const Matrix& image_feats, const GenerateOptions& options);

}  // namespace motor
