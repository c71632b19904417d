#pragma once

// Knowledge injection: general knowledge into image features, text-based
// multi-label classification on the result, then retrieval and injection of
// specific knowledge.

#include "motor/feature_queue.hpp"
#include "motor/graph_knowledge.hpp"
#include "motor/model.hpp"
#include "motor/triplet_store.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace motor {

/// Disease labels represented as text. Order is fixed for a run.
struct LabelSet {
  std::vector<std::string> names;

  static constexpr std::size_t kSize = 14;
  /// atelectasis, cardiomegaly, effusion, infiltration, mass, nodule,
  /// pneumonia, pneumothorax, consolidation, edema, emphysema, fibrosis,
  /// pleural thickening, hernia.
  static LabelSet chest14();
  void validate() const;
  TokenBatch tokens(const Tokenizer& tokenizer) const;
};

/// Read-only resources shared by every injection pass.
struct KnowledgeBase {
  const KnowledgeGraph* graph = nullptr;
  const Tokenizer* tokenizer = nullptr;
  const EntityLexicon* lexicon = nullptr;
  const TripletStore* store = nullptr;
  /// Report text by corpus id; nullptr when unknown.
  std::function<const std::string*(std::int64_t)> report_text;
};

struct SpecificKnowledge {
  std::vector<std::int64_t> retrieved_ids;
  std::vector<Triplet> triplets;
};

/// Top-k distinct reports for `query` (unit-norm), skipping exclude_id, then
/// entity extraction per report in rank order and a single triplet query over
/// the concatenated entity lists.
SpecificKnowledge retrieve_specific(const Vector& query, const FeatureQueue& queue, const KnowledgeBase& kb, std::size_t k,
                                    std::size_t cap, std::optional<std::int64_t> exclude_id = std::nullopt);

Var inject_gk(Tape& t, const MotorModel& model, Var f_v, int batch, Var f_gk, std::vector<Matrix>* attn = nullptr);

/// Linearizes each example's triplets, encodes them with E_sk and lets the
/// image features attend to them. Empty triplet lists leave only [CLS].
Var inject_sk(Tape& t, const MotorModel& model, const Tokenizer& tokenizer, Var f_v_gk, int batch,
              const std::vector<std::vector<Triplet>>& triplets, std::vector<Matrix>* attn = nullptr);

/// Unit-norm label features (n_labels x p) from the report encoder's [CLS] row.
Var encode_labels(Tape& t, const MotorModel& model, const LabelSet& labels, const Tokenizer& tokenizer);

/// p_C = image_proj . label_proj^T, one row per image.
Var mlc_forward(Var image_proj, Var label_proj);

/// Mean binary cross-entropy of sigmoid(p_C / tau) against 0/1 labels.
Var mlc_loss(Var p_c, const Matrix& labels, Var tau);

struct InjectionOptions {
  bool use_knowledge = true;
  std::size_t k = 3;
  std::size_t triplet_cap = 32;
  bool exclude_paired = true;
  /// When false the SK branch runs with empty triplet lists (cold start).
  bool retrieve = true;
  bool capture_attention = false;
};

struct InjectionOutput {
  Var f_v;
  Var f_v_gk;
  Var f_v_gk_sk;  // equals f_v when knowledge is disabled
  Var gk_proj;    // projected [CLS] row of f_v_gk; invalid when knowledge is disabled
  std::vector<SpecificKnowledge> specific;
  std::vector<Matrix> attn_gk;
  std::vector<Matrix> attn_sk;
};

/// Runs GK injection, SK retrieval (from f_v_gk, never f_v) and SK injection
/// for a batch. `pinned` replaces retrieval with fixed triplet lists.
InjectionOutput run_injection(Tape& t, const MotorModel& model, const KnowledgeBase& kb, const Matrix& images,
                              std::span<const std::int64_t> paired_ids, const FeatureQueue* report_queue,
                              const InjectionOptions& options, const std::vector<std::vector<Triplet>>* pinned = nullptr);

}  // namespace motor
