#include "motor/downstream.hpp"

#include "motor/decoding.hpp"
#include "motor/text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace motor {
namespace {

std::vector<std::int64_t> ids_of(const Dataset& d, const std::vector<int>& idx) {
  std::vector<std::int64_t> out;
  for (int i : idx) out.push_back(d.records[static_cast<std::size_t>(i)].id);
  return out;
}

// Id used to exclude a record's own report from knowledge retrieval.
std::vector<std::int64_t> paired_ids_of(const Dataset& d, const std::vector<int>& idx) {
  std::vector<std::int64_t> out;
  for (int i : idx) {
    const CorpusRecord& r = d.records[static_cast<std::size_t>(i)];
    out.push_back(r.source_id ? *r.source_id : r.id);
  }
  return out;
}

AdamWConfig task_optimizer(const Session& s, double lr) {
  AdamWConfig c;
  c.lr = lr;
  c.weight_decay = s.config().weight_decay;
  c.grad_clip = s.config().grad_clip;
  return c;
}

Matrix row_block(const Matrix& m, int start, int count) { return m.middleRows(start, count); }

void add_head(ParamStore& store, const std::string& prefix, int in, int out) {
  if (!store.contains(prefix + ".w")) store.add(prefix + ".w", Matrix::Zero(in, out), true);
  if (!store.contains(prefix + ".b")) store.add(prefix + ".b", Matrix::Zero(1, out), false);
}

Var head(Tape& t, ParamStore& store, const std::string& prefix, Var x) {
  return ad::linear(x, t.param(store.get(prefix + ".w")), t.param(store.get(prefix + ".b")));
}

std::string join_lines(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += s + "\n";
  return out;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  for (auto& l : split(s, '\n'))
    if (!l.empty()) out.push_back(l);
  return out;
}

}  // namespace

EncodedImages encode_images(Session& s, const Matrix& images, const std::vector<std::int64_t>& paired_ids, bool use_knowledge,
                            int chunk) {
  const int N = static_cast<int>(images.rows());
  const int Lv = s.config().model.image_tokens();
  const int d = s.config().model.d_model;
  EncodedImages out;
  out.feats.resize(static_cast<Eigen::Index>(N) * Lv, d);
  out.plain.resize(static_cast<Eigen::Index>(N) * Lv, d);
  out.proj.resize(N, s.config().model.proj_dim);
  const KnowledgeBase kb = s.knowledge();
  InjectionOptions opts = s.injection_options(true);
  opts.use_knowledge = opts.use_knowledge && use_knowledge;
  for (int start = 0; start < N; start += chunk) {
    const int n = std::min(chunk, N - start);
    Tape t(false);
    std::vector<std::int64_t> ids;
    if (!paired_ids.empty()) ids.assign(paired_ids.begin() + start, paired_ids.begin() + start + n);
    InjectionOutput inj = run_injection(t, s.model(), kb, row_block(images, start, n), ids, &s.report_queue(), opts);
    out.feats.middleRows(static_cast<Eigen::Index>(start) * Lv, static_cast<Eigen::Index>(n) * Lv) = inj.f_v_gk_sk.value();
    out.plain.middleRows(static_cast<Eigen::Index>(start) * Lv, static_cast<Eigen::Index>(n) * Lv) = inj.f_v.value();
    out.proj.middleRows(start, n) = s.model().project(t, ad::select_rows(inj.f_v_gk_sk, first_rows(n, Lv)), Head::image).value();
    for (auto& sk : inj.specific) out.triplets.push_back(std::move(sk.triplets));
    if (inj.specific.empty()) out.triplets.resize(out.triplets.size() + static_cast<std::size_t>(n));
  }
  return out;
}

Matrix encode_reports(const Session& s, const std::vector<std::string>& reports, int chunk) {
  const int N = static_cast<int>(reports.size());
  Matrix out(N, s.config().model.proj_dim);
  for (int start = 0; start < N; start += chunk) {
    const int n = std::min(chunk, N - start);
    std::vector<std::vector<int>> seqs;
    for (int i = start; i < start + n; ++i)
      seqs.push_back(s.resources().tokenizer.encode(reports[static_cast<std::size_t>(i)], TokenMode::encode_cls));
    Tape t(false);
    const TokenBatch tokens = TokenBatch::from(seqs);
    out.middleRows(start, n) =
        s.model().project(t, ad::select_rows(s.model().encode_text(t, tokens), first_rows(n, tokens.len)), Head::text).value();
  }
  return out;
}

void RetrievalIndex::validate() const {
  if (ids.empty()) throw std::invalid_argument("retrieval index is empty");
  if (image.rows() != static_cast<Eigen::Index>(ids.size()) || text.rows() != static_cast<Eigen::Index>(ids.size())) {
    throw ShapeError("retrieval index: row count differs from id count");
  }
  std::set<std::int64_t> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw std::invalid_argument("retrieval index ids must be unique");
}

std::vector<std::int64_t> rank_gallery(const Vector& query, const RetrievalIndex& index, Direction dir, int rerank_top_m,
                                       const MatchScorer* scorer, int query_pos) {
  index.validate();
  const Matrix& gallery = dir == Direction::i2t ? index.text : index.image;
  if (query.size() != gallery.cols()) throw ShapeError("rank_gallery: query dimension");
  const Vector sims = gallery * query;
  std::vector<int> order(static_cast<std::size_t>(gallery.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sims(a) > sims(b); });
  if (rerank_top_m > 0 && scorer) {
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(rerank_top_m), order.size());
    std::vector<int> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    const std::vector<double> p = (*scorer)(query_pos, top);
    if (p.size() != m) throw ShapeError("rank_gallery: scorer returned the wrong number of scores");
    std::vector<std::size_t> pos(m);
    std::iota(pos.begin(), pos.end(), 0);
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    for (std::size_t i = 0; i < m; ++i) order[i] = top[pos[i]];
  }
  std::vector<std::int64_t> out;
  out.reserve(order.size());
  for (int i : order) out.push_back(index.ids[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<double> match_probabilities(const Session& s, const Matrix& image_feats, const std::vector<std::string>& reports) {
  const int Lv = s.config().model.image_tokens();
  const int N = static_cast<int>(reports.size());
  if (image_feats.rows() != static_cast<Eigen::Index>(N) * Lv) throw ShapeError("match_probabilities: one image per report");
  std::vector<double> out;
  const int chunk = 64;
  for (int start = 0; start < N; start += chunk) {
    const int n = std::min(chunk, N - start);
    std::vector<std::vector<int>> seqs;
    for (int i = start; i < start + n; ++i)
      seqs.push_back(s.resources().tokenizer.encode(reports[static_cast<std::size_t>(i)], TokenMode::encode_match));
    Tape t(false);
    const TokenBatch tokens = TokenBatch::from(seqs);
    Var kv = t.constant(image_feats.middleRows(static_cast<Eigen::Index>(start) * Lv, static_cast<Eigen::Index>(n) * Lv));
    Var fused = s.model().match_encode(t, tokens, kv);
    const Matrix p = masked_softmax(s.model().itm_logits(t, ad::select_rows(fused, first_rows(n, tokens.len))).value(), nullptr);
    for (int i = 0; i < n; ++i) out.push_back(p(i, kItmMatch));
  }
  return out;
}

RetrievalIndex build_index(Session& s, Split split, EncodedImages* images) {
  const Dataset& d = s.data();
  const std::vector<int> idx = d.indices(split);
  if (idx.empty()) throw std::invalid_argument("split has no records");
  EncodedImages enc = encode_images(s, d.image_rows(idx), paired_ids_of(d, idx), true);
  std::vector<std::string> reports;
  for (int i : idx) reports.push_back(d.records[static_cast<std::size_t>(i)].report);
  RetrievalIndex index{enc.proj, encode_reports(s, reports), ids_of(d, idx)};
  if (images) *images = std::move(enc);
  return index;
}

RetrievalReport evaluate_retrieval(Session& s, Split split, int rerank_top) {
  const Dataset& d = s.data();
  const std::vector<int> idx = d.indices(split);
  EncodedImages enc;
  const RetrievalIndex index = build_index(s, split, &enc);
  const int N = static_cast<int>(idx.size());
  const int Lv = s.config().model.image_tokens();
  std::vector<std::string> reports;
  for (int i : idx) reports.push_back(d.records[static_cast<std::size_t>(i)].report);

  MatchScorer i2t_scorer = [&](int q, const std::vector<int>& gal) {
    Matrix feats(static_cast<Eigen::Index>(gal.size()) * Lv, enc.feats.cols());
    std::vector<std::string> texts;
    for (std::size_t j = 0; j < gal.size(); ++j) {
      feats.middleRows(static_cast<Eigen::Index>(j) * Lv, Lv) = enc.feats.middleRows(static_cast<Eigen::Index>(q) * Lv, Lv);
      texts.push_back(reports[static_cast<std::size_t>(gal[j])]);
    }
    return match_probabilities(s, feats, texts);
  };
  MatchScorer t2i_scorer = [&](int q, const std::vector<int>& gal) {
    Matrix feats(static_cast<Eigen::Index>(gal.size()) * Lv, enc.feats.cols());
    std::vector<std::string> texts;
    for (std::size_t j = 0; j < gal.size(); ++j) {
      feats.middleRows(static_cast<Eigen::Index>(j) * Lv, Lv) = enc.feats.middleRows(static_cast<Eigen::Index>(gal[j]) * Lv, Lv);
      texts.push_back(reports[static_cast<std::size_t>(q)]);
    }
    return match_probabilities(s, feats, texts);
  };

  RetrievalReport r;
  r.gallery = N;
  r.ids = index.ids;
  for (int q = 0; q < N; ++q) {
    r.i2t_rankings.push_back(rank_gallery(index.image.row(q).transpose(), index, Direction::i2t, rerank_top, &i2t_scorer, q));
    r.t2i_rankings.push_back(rank_gallery(index.text.row(q).transpose(), index, Direction::t2i, rerank_top, &t2i_scorer, q));
  }
  const int ks[3] = {1, 5, 10};
  for (int i = 0; i < 3; ++i) {
    r.i2t[i] = recall_at_k(r.i2t_rankings, index.ids, ks[i]);
    r.t2i[i] = recall_at_k(r.t2i_rankings, index.ids, ks[i]);
  }
  return r;
}

std::vector<std::string> retrieval_trainable() {
  return {"image.", "text.", "embed.tok", "embed.pos", "proj.", "itm_head", "match.", "temp"};
}

std::vector<std::string> generation_trainable() {
  return {"image.", "embed.", "gk.", "sk.", "gk_inject.", "sk_inject.", "decoder.", "lm_head"};
}

std::vector<StepLog> finetune_retrieval(Session& s, int steps) {
  s.set_optimizer(task_optimizer(s, s.config().lr_retrieval), retrieval_trainable());
  std::vector<StepLog> logs;
  for (int i = 0; i < steps; ++i) logs.push_back(s.train_step({true, true, false, false}, s.config().finetune_batch_size));
  return logs;
}

std::vector<StepLog> finetune_generation(Session& s, int steps) {
  s.set_optimizer(task_optimizer(s, s.config().lr_generation), generation_trainable());
  std::vector<StepLog> logs;
  for (int i = 0; i < steps; ++i) logs.push_back(s.train_step({false, false, true, false}, s.config().finetune_batch_size));
  return logs;
}

std::vector<std::string> generate_reports(Session& s, const std::vector<int>& idx) {
  const Dataset& d = s.data();
  std::vector<std::string> out;
  const int chunk = 32;
  GenerateOptions g;
  g.max_len = s.config().gen_max_len;
  g.beam_width = s.config().beam_width;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::vector<int> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + chunk)));
    const EncodedImages enc = encode_images(s, d.image_rows(part), paired_ids_of(d, part), true);
    for (const auto& toks : generate(s.model(), enc.feats, g)) out.push_back(s.resources().tokenizer.decode(toks));
  }
  return out;
}

GenerationReport evaluate_generation(Session& s, Split split) {
  const Dataset& d = s.data();
  const std::vector<int> idx = d.indices(split);
  GenerationReport r;
  r.ids = ids_of(d, idx);
  r.outputs = generate_reports(s, idx);
  std::vector<std::vector<std::string>> refs;
  for (int i : idx) refs.push_back({d.records[static_cast<std::size_t>(i)].report});
  r.bleu4 = bleu4(r.outputs, refs);
  r.rouge_l = rouge_l(r.outputs, refs);
  r.cider_d = cider_d(r.outputs, refs);
  r.empty_cider_d = cider_d(std::vector<std::string>(idx.size()), refs);
  return r;
}

void ensure_classifier(Session& s) { add_head(s.model().params(), "cls", s.config().model.d_model, kNumLabels); }

namespace {

Var classifier_logits(Tape& t, Session& s, const Matrix& images, const std::vector<std::int64_t>& paired_ids) {
  const int B = static_cast<int>(images.rows());
  const int Lv = s.config().model.image_tokens();
  Var feats;
  if (s.config().cls_on_knowledge) {
    feats = run_injection(t, s.model(), s.knowledge(), images, paired_ids, &s.report_queue(), s.injection_options(true)).f_v_gk_sk;
  } else {
    feats = s.model().encode_image(t, images);
  }
  return head(t, s.model().params(), "cls", ad::select_rows(feats, first_rows(B, Lv)));
}

}  // namespace

Matrix classify(Session& s, const Matrix& images, const std::vector<std::int64_t>& paired_ids) {
  ensure_classifier(s);
  Matrix out(images.rows(), kNumLabels);
  const int chunk = 64;
  for (Eigen::Index start = 0; start < images.rows(); start += chunk) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk, images.rows() - start);
    std::vector<std::int64_t> ids;
    if (!paired_ids.empty()) ids.assign(paired_ids.begin() + start, paired_ids.begin() + start + n);
    Tape t(false);
    const Matrix z = classifier_logits(t, s, images.middleRows(start, n), ids).value();
    out.middleRows(start, n) = (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return out;
}

std::vector<double> finetune_classification(Session& s, int steps) {
  ensure_classifier(s);
  std::vector<std::string> trainable{"image.", "cls."};
  if (s.config().cls_on_knowledge)
    for (const char* p : {"gk.", "sk.", "gk_inject.", "sk_inject.", "embed."}) trainable.emplace_back(p);
  s.set_optimizer(task_optimizer(s, s.config().lr_classification), trainable);
  std::vector<double> losses;
  for (int i = 0; i < steps; ++i) {
    const std::vector<int> idx = s.next_batch(s.config().finetune_batch_size);
    Tape t;
    Var loss = ad::bce_with_logits(classifier_logits(t, s, s.data().image_rows(idx), paired_ids_of(s.data(), idx)), s.labels_of(idx));
    if (!std::isfinite(loss.scalar())) throw NumericError("classification step " + std::to_string(i + 1) + ": non-finite loss");
    s.model().params().zero_grad();
    t.backward(loss);
    s.optimizer().step(s.model().params());
    losses.push_back(loss.scalar());
  }
  return losses;
}

ClassificationReport evaluate_classification(Session& s, Split split) {
  const Dataset& d = s.data();
  const std::vector<int> idx = d.indices(split);
  ClassificationReport r;
  r.ids = ids_of(d, idx);
  r.probabilities = classify(s, d.image_rows(idx), paired_ids_of(d, idx));
  const Matrix y = s.labels_of(idx);
  r.auroc = auroc(r.probabilities, y);
  r.f1 = f1_suite(r.probabilities, y);
  return r;
}

std::vector<AttentionMaps> attention_maps(Session& s, const std::vector<int>& idx) {
  if (!s.config().use_knowledge) throw std::invalid_argument("attention export needs a knowledge-enabled checkpoint");
  const Dataset& d = s.data();
  const KnowledgeBase kb = s.knowledge();
  InjectionOptions opts = s.injection_options(true);
  opts.capture_attention = true;
  std::vector<AttentionMaps> out;
  for (int i : idx) {
    const std::vector<int> one{i};
    Tape t(false);
    InjectionOutput inj = run_injection(t, s.model(), kb, d.image_rows(one), paired_ids_of(d, one), &s.report_queue(), opts);
    AttentionMaps m;
    m.id = d.records[static_cast<std::size_t>(i)].id;
    m.gk = inj.attn_gk.at(0);
    m.sk = inj.attn_sk.at(0);
    m.triplets = inj.specific.at(0).triplets;
    for (int tok : linearize(m.triplets, s.resources().tokenizer, static_cast<std::size_t>(s.config().model.sk_max_len)))
      m.sk_tokens.push_back(s.resources().tokenizer.word(tok));
    out.push_back(std::move(m));
  }
  return out;
}

void VqaVocab::validate() const {
  if (closed.empty() || open.empty()) throw std::invalid_argument("VQA answer vocabularies must be nonempty");
  std::set<std::string> c(closed.begin(), closed.end());
  for (const auto& a : open)
    if (c.count(a)) throw std::invalid_argument("VQA answer '" + a + "' appears in both vocabularies");
}

VqaVocab build_vqa_vocab(const Dataset& vqa) {
  std::set<std::string> closed, open;
  for (const auto& r : vqa.records) {
    if (r.split != Split::train) continue;
    (r.qtype == "open" ? open : closed).insert(r.answer);
  }
  VqaVocab v{{closed.begin(), closed.end()}, {open.begin(), open.end()}};
  v.validate();
  return v;
}

VqaVocab vqa_vocab_of(const Session& s) {
  auto c = s.metadata().find("vqa.closed_vocab");
  auto o = s.metadata().find("vqa.open_vocab");
  if (c == s.metadata().end() || o == s.metadata().end()) throw std::invalid_argument("checkpoint has no VQA heads");
  VqaVocab v{split_lines(c->second), split_lines(o->second)};
  v.validate();
  return v;
}

void ensure_vqa(Session& s, const VqaVocab& vocab) {
  vocab.validate();
  const int d = s.config().model.d_model;
  MotorModel& m = s.model();
  m.clone_match_stack("vqa.closed");
  m.clone_match_stack("vqa.open");
  add_head(m.params(), "vqa.type", d, 1);
  add_head(m.params(), "vqa.closed_head", d, static_cast<int>(vocab.closed.size()));
  add_head(m.params(), "vqa.open_head", d, static_cast<int>(vocab.open.size()));
  s.metadata()["vqa.closed_vocab"] = join_lines(vocab.closed);
  s.metadata()["vqa.open_vocab"] = join_lines(vocab.open);
}

namespace {

struct VqaForward {
  Var type_logit;    // B x 1, positive = open
  Var closed_logits;  // B x |closed|
  Var open_logits;    // B x |open|
};

VqaForward vqa_forward(Tape& t, Session& s, const Dataset& vqa, const std::vector<int>& idx) {
  MotorModel& m = s.model();
  const int B = static_cast<int>(idx.size());
  const int Lv = s.config().model.image_tokens();
  InjectionOptions opts = s.injection_options(true);
  opts.use_knowledge = opts.use_knowledge && s.config().vqa_use_knowledge;
  const InjectionOutput inj = run_injection(t, m, s.knowledge(), vqa.image_rows(idx), paired_ids_of(vqa, idx), &s.report_queue(), opts);
  (void)Lv;
  std::vector<std::vector<int>> match_seqs, cls_seqs;
  for (int i : idx) {
    const std::string& q = vqa.records[static_cast<std::size_t>(i)].question;
    match_seqs.push_back(s.resources().tokenizer.encode(q, TokenMode::encode_match));
    cls_seqs.push_back(s.resources().tokenizer.encode(q, TokenMode::encode_cls));
  }
  const TokenBatch match_tokens = TokenBatch::from(match_seqs);
  const TokenBatch cls_tokens = TokenBatch::from(cls_seqs);
  VqaForward f;
  f.type_logit = head(t, m.params(), "vqa.type", ad::select_rows(m.encode_text(t, cls_tokens), first_rows(B, cls_tokens.len)));
  const TransformerStack closed = m.bind_stack("vqa.closed", true);
  const TransformerStack open = m.bind_stack("vqa.open", true);
  const auto rows0 = first_rows(B, match_tokens.len);
  f.closed_logits = head(t, m.params(), "vqa.closed_head", ad::select_rows(m.match_encode_with(t, closed, match_tokens, inj.f_v_gk_sk), rows0));
  f.open_logits = head(t, m.params(), "vqa.open_head", ad::select_rows(m.match_encode_with(t, open, match_tokens, inj.f_v_gk_sk), rows0));
  return f;
}

int index_in(const std::vector<std::string>& v, const std::string& a) {
  auto it = std::find(v.begin(), v.end(), a);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

}  // namespace

std::vector<VqaPrediction> vqa_answer(Session& s, const Dataset& vqa, const std::vector<int>& idx,
                                      const std::optional<std::string>& force_type) {
  const VqaVocab vocab = vqa_vocab_of(s);
  if (force_type && *force_type != "open" && *force_type != "closed") throw std::invalid_argument("question type must be open or closed");
  std::vector<VqaPrediction> out;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::vector<int> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + chunk)));
    Tape t(false);
    const VqaForward f = vqa_forward(t, s, vqa, part);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      VqaPrediction p;
      p.p_open = 1.0 / (1.0 + std::exp(-f.type_logit.value()(r, 0)));
      p.qtype = force_type ? *force_type : (p.p_open >= 0.5 ? "open" : "closed");
      const Matrix& z = p.qtype == "open" ? f.open_logits.value() : f.closed_logits.value();
      const auto& words = p.qtype == "open" ? vocab.open : vocab.closed;
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < z.cols(); ++j)
        if (z(r, j) > z(r, best)) best = j;
      p.answer = words[static_cast<std::size_t>(best)];
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<double> finetune_vqa(Session& s, const Dataset& vqa, int steps) {
  VqaVocab vocab;
  if (s.metadata().count("vqa.closed_vocab")) {
    vocab = vqa_vocab_of(s);
  } else {
    vocab = build_vqa_vocab(vqa);
  }
  ensure_vqa(s, vocab);
  std::vector<std::string> trainable{"image.", "vqa."};
  if (s.config().vqa_use_knowledge && s.config().use_knowledge)
    for (const char* p : {"gk.", "sk.", "gk_inject.", "sk_inject."}) trainable.emplace_back(p);
  s.set_optimizer(task_optimizer(s, s.config().lr_vqa), trainable);

  const std::vector<int> train = vqa.indices(Split::train);
  const int B = std::min<int>(s.config().finetune_batch_size, static_cast<int>(train.size()));
  if (B < 1) throw std::invalid_argument("VQA training split is empty");
  std::vector<int> order;
  std::size_t cursor = 0;
  std::vector<double> losses;
  for (int step = 0; step < steps; ++step) {
    if (order.empty() || cursor + static_cast<std::size_t>(B) > order.size()) {
      order = train;
      std::shuffle(order.begin(), order.end(), s.rng());
      cursor = 0;
    }
    const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                               order.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(B)));
    cursor += static_cast<std::size_t>(B);

    Tape t;
    const VqaForward f = vqa_forward(t, s, vqa, idx);
    Matrix is_open(B, 1);
    Matrix closed_t = Matrix::Zero(B, static_cast<Eigen::Index>(vocab.closed.size()));
    Matrix open_t = Matrix::Zero(B, static_cast<Eigen::Index>(vocab.open.size()));
    Vector closed_w = Vector::Zero(B), open_w = Vector::Zero(B);
    for (int i = 0; i < B; ++i) {
      const CorpusRecord& r = vqa.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      const bool open = r.qtype == "open";
      is_open(i, 0) = open ? 1.0 : 0.0;
      const int a = index_in(open ? vocab.open : vocab.closed, r.answer);
      if (a < 0) continue;  // answer unseen in the vocabulary
      if (open) {
        open_t(i, a) = 1.0;
        open_w(i) = 1.0;
      } else {
        closed_t(i, a) = 1.0;
        closed_w(i) = 1.0;
      }
    }
    Var loss = ad::bce_with_logits(f.type_logit, is_open);
    if (closed_w.sum() > 0) {
      for (int i = 0; i < B; ++i)
        if (closed_w(i) == 0.0) closed_t(i, 0) = 1.0;
      loss = ad::add(loss, ad::softmax_cross_entropy(f.closed_logits, closed_t, &closed_w));
    }
    if (open_w.sum() > 0) {
      for (int i = 0; i < B; ++i)
        if (open_w(i) == 0.0) open_t(i, 0) = 1.0;
      loss = ad::add(loss, ad::softmax_cross_entropy(f.open_logits, open_t, &open_w));
    }
    if (!std::isfinite(loss.scalar())) throw NumericError("VQA step " + std::to_string(step + 1) + ": non-finite loss");
    s.model().params().zero_grad();
    t.backward(loss);
    s.optimizer().step(s.model().params());
    losses.push_back(loss.scalar());
  }
  return losses;
}

VqaReport evaluate_vqa(Session& s, const Dataset& vqa, Split split) {
  const std::vector<int> idx = vqa.indices(split);
  VqaReport r;
  r.predictions = vqa_answer(s, vqa, idx);
  int closed_ok = 0, open_ok = 0, type_ok = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const CorpusRecord& rec = vqa.records[static_cast<std::size_t>(idx[i])];
    r.ids.push_back(rec.id);
    const VqaPrediction& p = r.predictions[i];
    const bool ok = p.answer == rec.answer;
    type_ok += p.qtype == rec.qtype;
    if (rec.qtype == "open") {
      ++r.n_open;
      open_ok += ok;
    } else {
      ++r.n_closed;
      closed_ok += ok;
    }
  }
  r.closed_acc = r.n_closed ? static_cast<double>(closed_ok) / r.n_closed : 0.0;
  r.open_acc = r.n_open ? static_cast<double>(open_ok) / r.n_open : 0.0;
  r.overall_acc = idx.empty() ? 0.0 : static_cast<double>(closed_ok + open_ok) / static_cast<double>(idx.size());
  r.type_acc = idx.empty() ? 0.0 : static_cast<double>(type_ok) / static_cast<double>(idx.size());
  return r;
}

}  // namespace motor
