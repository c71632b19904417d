#include "motor/injection.hpp"

#include <set>
#include <stdexcept>

namespace motor {

LabelSet LabelSet::chest14() {
  return LabelSet{{"atelectasis", "cardiomegaly", "effusion", "infiltration", "mass", "nodule", "pneumonia", "pneumothorax",
                   "consolidation", "edema", "emphysema", "fibrosis", "pleural thickening", "hernia"}};
}

void LabelSet::validate() const {
  if (names.size() != kSize) throw SchemaError("label set must have 14 entries, got " + std::to_string(names.size()));
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) throw SchemaError("label set has duplicate names");
}

TokenBatch LabelSet::tokens(const Tokenizer& tokenizer) const {
  std::vector<std::vector<int>> seqs;
  for (const auto& n : names) seqs.push_back(tokenizer.encode(n, TokenMode::encode_cls));
  return TokenBatch::from(seqs);
}

SpecificKnowledge retrieve_specific(const Vector& query, const FeatureQueue& queue, const KnowledgeBase& kb, std::size_t k,
                                    std::size_t cap, std::optional<std::int64_t> exclude_id) {
  SpecificKnowledge out;
  if (queue.count() == 0 || k == 0) return out;
  std::set<std::int64_t> taken;
  for (const QueueHit& hit : queue.top_k(query, queue.count())) {
    if (out.retrieved_ids.size() >= k) break;
    if (exclude_id && hit.id == *exclude_id) continue;
    if (!taken.insert(hit.id).second) continue;
    out.retrieved_ids.push_back(hit.id);
  }
  std::vector<std::string> entities;
  for (std::int64_t id : out.retrieved_ids) {
    const std::string* text = kb.report_text ? kb.report_text(id) : nullptr;
    if (!text) continue;
    for (auto& e : extract_entities(*text, *kb.lexicon)) entities.push_back(std::move(e));
  }
  out.triplets = query_triplets(*kb.store, entities, cap);
  return out;
}

Var inject_gk(Tape& t, const MotorModel& model, Var f_v, int batch, Var f_gk, std::vector<Matrix>* attn) {
  return model.inject_general(t, f_v, batch, f_gk, attn);
}

Var inject_sk(Tape& t, const MotorModel& model, const Tokenizer& tokenizer, Var f_v_gk, int batch,
              const std::vector<std::vector<Triplet>>& triplets, std::vector<Matrix>* attn) {
  if (static_cast<int>(triplets.size()) != batch) throw ShapeError("inject_sk: one triplet list per example required");
  std::vector<std::vector<int>> seqs;
  seqs.reserve(triplets.size());
  for (const auto& k : triplets) seqs.push_back(linearize(k, tokenizer, static_cast<std::size_t>(model.config().sk_max_len)));
  TokenBatch tokens = TokenBatch::from(seqs);
  Var f_sk = model.encode_specific(t, tokens);
  return model.inject_specific(t, f_v_gk, batch, f_sk, tokens, attn);
}

Var encode_labels(Tape& t, const MotorModel& model, const LabelSet& labels, const Tokenizer& tokenizer) {
  TokenBatch tokens = labels.tokens(tokenizer);
  Var feats = model.encode_text(t, tokens);
  const auto rows0 = first_rows(tokens.batch, tokens.len);
  return model.project(t, ad::select_rows(feats, rows0), Head::text);
}

Var mlc_forward(Var image_proj, Var label_proj) { return ad::matmul_nt(image_proj, label_proj); }

Var mlc_loss(Var p_c, const Matrix& labels, Var tau) { return ad::bce_with_logits(ad::div_scalar(p_c, tau), labels); }

InjectionOutput run_injection(Tape& t, const MotorModel& model, const KnowledgeBase& kb, const Matrix& images,
                              std::span<const std::int64_t> paired_ids, const FeatureQueue* report_queue,
                              const InjectionOptions& options, const std::vector<std::vector<Triplet>>* pinned) {
  const int B = static_cast<int>(images.rows());
  if (!paired_ids.empty() && paired_ids.size() != static_cast<std::size_t>(B)) throw ShapeError("run_injection: paired id count");
  InjectionOutput out;
  out.f_v = model.encode_image(t, images);
  if (!options.use_knowledge) {
    out.f_v_gk = out.f_v;
    out.f_v_gk_sk = out.f_v;
    return out;
  }
  const int Lv = model.config().image_tokens();
  Var f_gk = model.encode_graph(t, model.embed_graph_nodes(t, *kb.graph, *kb.tokenizer), kb.graph->adjacency());
  out.f_v_gk = inject_gk(t, model, out.f_v, B, f_gk, options.capture_attention ? &out.attn_gk : nullptr);
  out.gk_proj = model.project(t, ad::select_rows(out.f_v_gk, first_rows(B, Lv)), Head::image);

  out.specific.resize(static_cast<std::size_t>(B));
  if (pinned) {
    if (pinned->size() != static_cast<std::size_t>(B)) throw ShapeError("run_injection: pinned triplet count");
    for (int b = 0; b < B; ++b) out.specific[static_cast<std::size_t>(b)].triplets = (*pinned)[static_cast<std::size_t>(b)];
  } else if (options.retrieve && report_queue && report_queue->count() >= options.k) {
    const Matrix& q = out.gk_proj.value();
    for (int b = 0; b < B; ++b) {
      std::optional<std::int64_t> exclude;
      if (options.exclude_paired && !paired_ids.empty()) exclude = paired_ids[static_cast<std::size_t>(b)];
      out.specific[static_cast<std::size_t>(b)] = retrieve_specific(q.row(b).transpose(), *report_queue, kb, options.k,
                                                                    options.triplet_cap, exclude);
    }
  }
  std::vector<std::vector<Triplet>> k_i;
  k_i.reserve(static_cast<std::size_t>(B));
  for (const auto& s : out.specific) k_i.push_back(s.triplets);
  out.f_v_gk_sk = inject_sk(t, model, *kb.tokenizer, out.f_v_gk, B, k_i, options.capture_attention ? &out.attn_sk : nullptr);
  return out;
}

}  // namespace motor
