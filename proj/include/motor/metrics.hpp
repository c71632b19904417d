#pragma once

// Evaluation metrics: recall@K, corpus BLEU-4, ROUGE-L, CIDEr-D, AUROC and
// the F1 family.

#include "motor/autograd.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace motor {

/// Lowercase, punctuation stripped, whitespace split.
std::vector<std::string> metric_tokens(const std::string& text);

/// Fraction of queries whose ground-truth id is within the first k entries.
double recall_at_k(const std::vector<std::vector<std::int64_t>>& rankings, const std::vector<std::int64_t>& gt, int k);

using Ngrams = std::map<std::vector<std::string>, int>;
Ngrams count_ngrams(const std::vector<std::string>& tokens, int n);

/// Corpus-level BLEU-4: clipped n-gram precisions pooled over the corpus,
/// uniform weights, brevity penalty against the closest reference length.
/// No smoothing; any zero precision gives 0.
double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

/// Mean over candidates of the LCS F-measure (beta^2 = 1.2), best over references.
double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

/// CIDEr-D with document frequencies over the reference sets, n = 1..4,
/// gaussian length penalty sigma, clipped candidate counts, scaled by 10.
double cider_d(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
               double sigma = 6.0);

struct AurocResult {
  std::vector<double> per_class;  // NaN for classes with a single label value
  double mean = 0.0;              // over defined classes; NaN when none
  int skipped = 0;
};

/// Column-wise AUROC; ties between a positive and a negative score count 1/2.
AurocResult auroc(const Matrix& scores, const Matrix& labels);

struct F1Result {
  std::vector<double> per_class;
  double macro = 0.0;
  double micro = 0.0;
  double example = 0.0;
};

/// Predictions are probabilities >= threshold. 0/0 counts as 0.
F1Result f1_suite(const Matrix& probabilities, const Matrix& labels, double threshold = 0.5);

}  // namespace motor
