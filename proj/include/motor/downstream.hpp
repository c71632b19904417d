#pragma once

// Task adaptation of a pretrained session: image-report retrieval, report
// generation, 14-label classification and visual question answering.

#include "motor/metrics.hpp"
#include "motor/session.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace motor {

/// No-grad encodings of a set of records.
struct EncodedImages {
  Matrix feats;      // B*Lv x d, knowledge-enhanced when the session uses knowledge
  Matrix plain;      // B*Lv x d, image encoder output
  Matrix proj;       // B x p, unit rows from feats row 0
  std::vector<std::vector<Triplet>> triplets;
};

/// paired_ids are excluded from knowledge retrieval when the session says so.
EncodedImages encode_images(Session& s, const Matrix& images, const std::vector<std::int64_t>& paired_ids, bool use_knowledge,
                            int chunk = 64);
/// Unit text projections, one row per report.
Matrix encode_reports(const Session& s, const std::vector<std::string>& reports, int chunk = 64);

struct RetrievalIndex {
  Matrix image;  // unit rows
  Matrix text;   // unit rows
  std::vector<std::int64_t> ids;
  void validate() const;
};

enum class Direction { i2t, t2i };

/// Match probabilities for one query against gallery positions.
using MatchScorer = std::function<std::vector<double>(int query_pos, const std::vector<int>& gallery_pos)>;

/// Gallery ids sorted by cosine similarity (stable on ties); the first
/// rerank_top_m are then stably re-sorted by the scorer's match probability.
std::vector<std::int64_t> rank_gallery(const Vector& query, const RetrievalIndex& index, Direction dir, int rerank_top_m = 0,
                                       const MatchScorer* scorer = nullptr, int query_pos = 0);

struct RetrievalReport {
  double i2t[3] = {0, 0, 0};  // R@1, R@5, R@10 with images as queries (report retrieval)
  double t2i[3] = {0, 0, 0};  // reports as queries (image retrieval)
  int gallery = 0;
  std::vector<std::vector<std::int64_t>> i2t_rankings, t2i_rankings;
  std::vector<std::int64_t> ids;
};

RetrievalIndex build_index(Session& s, Split split, EncodedImages* images = nullptr);
/// rerank_top = 0 gives pure contrastive ranking (zero-shot protocol).
RetrievalReport evaluate_retrieval(Session& s, Split split, int rerank_top);

/// ITM match probability for each (image row block, report) pair.
std::vector<double> match_probabilities(const Session& s, const Matrix& image_feats, const std::vector<std::string>& reports);

// Finetuning. Each installs a task optimizer with the task's step size and
// trainable parameter prefixes, then runs `steps` updates.
std::vector<StepLog> finetune_retrieval(Session& s, int steps);
std::vector<StepLog> finetune_generation(Session& s, int steps);

std::vector<std::string> retrieval_trainable();
std::vector<std::string> generation_trainable();

/// Generated reports for record indices of the session's dataset.
std::vector<std::string> generate_reports(Session& s, const std::vector<int>& idx);

struct GenerationReport {
  double bleu4 = 0, rouge_l = 0, cider_d = 0;
  double empty_cider_d = 0;
  std::vector<std::int64_t> ids;
  std::vector<std::string> outputs;
};
GenerationReport evaluate_generation(Session& s, Split split);

// Classification heads sit on row 0 of the image encoder output (or of the
// knowledge-enhanced features with finetune.cls_on_knowledge).
void ensure_classifier(Session& s);
Matrix classify(Session& s, const Matrix& images, const std::vector<std::int64_t>& paired_ids);
std::vector<double> finetune_classification(Session& s, int steps);

struct ClassificationReport {
  AurocResult auroc;
  F1Result f1;
  std::vector<std::int64_t> ids;
  Matrix probabilities;
};
ClassificationReport evaluate_classification(Session& s, Split split);

/// Final-block cross-attention of the knowledge injection, head-averaged.
struct AttentionMaps {
  std::int64_t id = 0;
  Matrix gk;  // Lv x graph nodes
  Matrix sk;  // Lv x linearized triplet tokens
  std::vector<std::string> sk_tokens;
  std::vector<Triplet> triplets;
};
/// One example at a time so that no map carries padding columns.
std::vector<AttentionMaps> attention_maps(Session& s, const std::vector<int>& idx);

// Visual question answering.
struct VqaVocab {
  std::vector<std::string> closed;
  std::vector<std::string> open;
  void validate() const;
};
VqaVocab build_vqa_vocab(const Dataset& vqa);
void ensure_vqa(Session& s, const VqaVocab& vocab);
VqaVocab vqa_vocab_of(const Session& s);

struct VqaPrediction {
  double p_open = 0;
  std::string qtype;
  std::string answer;
};
/// force_type routes around the type classifier ("open" / "closed").
std::vector<VqaPrediction> vqa_answer(Session& s, const Dataset& vqa, const std::vector<int>& idx,
                                      const std::optional<std::string>& force_type = std::nullopt);
std::vector<double> finetune_vqa(Session& s, const Dataset& vqa, int steps);

struct VqaReport {
  double closed_acc = 0, open_acc = 0, overall_acc = 0, type_acc = 0;
  int n_closed = 0, n_open = 0;
  std::vector<std::int64_t> ids;
  std::vector<VqaPrediction> predictions;
};
VqaReport evaluate_vqa(Session& s, const Dataset& vqa, Split split);

}  // namespace motor
