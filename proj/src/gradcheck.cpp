#include "motor/gradcheck.hpp"

#include "motor/corpus.hpp"
#include "motor/injection.hpp"
#include "motor/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>

namespace motor {

void GradcheckOptions::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_model % n_heads != 0) throw std::invalid_argument("gradcheck: bad model dims");
  if (batch < 2) throw std::invalid_argument("gradcheck: ITM negatives need batch >= 2");
  if (queue < 1) throw std::invalid_argument("gradcheck: queue must be positive");
  if (!(eps > 0) || !(tolerance > 0) || !(abs_floor > 0)) throw std::invalid_argument("gradcheck: eps, tolerance and floor must be positive");
  if (top_entries < 0 || random_entries < 0 || top_entries + random_entries == 0)
    throw std::invalid_argument("gradcheck: no entries to check");
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

Matrix unit_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  m.rowwise().normalize();
  return m;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  o.validate();
  std::mt19937_64 rng(o.seed);

  ModelConfig mc;
  mc.d_model = o.d_model;
  mc.n_layers = o.n_layers;
  mc.n_heads = o.n_heads;
  mc.ffn_mult = 2;
  mc.image_size = 32;
  mc.patch_size = 16;
  mc.proj_dim = o.d_model;
  mc.max_text_len = 24;
  mc.sk_max_len = 24;
  mc.validate();

  const KnowledgeGraph graph = parse_graph(default_graph_tsv());
  const Tokenizer tokenizer(corpus_vocabulary(), mc.max_text_len);
  const EntityLexicon lexicon = EntityLexicon::parse(corpus_lexicon_txt());
  const TripletStore store = TripletStore::parse(corpus_triplets_tsv(true));
  const LabelSet labels = LabelSet::chest14();
  KnowledgeBase kb{&graph, &tokenizer, &lexicon, &store, nullptr};
  MotorModel model(mc, tokenizer.vocab_size(), o.seed);

  // Fixture batch: rendered-scene reports with random pixel images.
  const int B = o.batch;
  GenConfig gen;
  gen.p_normal = 0.0;
  std::vector<std::string> reports;
  std::vector<std::vector<Triplet>> pinned;
  Matrix label_m = Matrix::Zero(B, static_cast<Eigen::Index>(kNumLabels));
  for (int b = 0; b < B; ++b) {
    const SyntheticScene scene = sample_scene(gen, o.seed + static_cast<std::uint64_t>(b));
    reports.push_back(write_report(scene, o.seed + static_cast<std::uint64_t>(b)));
    const LabelVector lv = labels_of(scene);
    for (std::size_t c = 0; c < lv.size(); ++c) label_m(b, static_cast<Eigen::Index>(c)) = lv[c];
    pinned.push_back(query_triplets(store, extract_entities(reports.back(), lexicon), 4));
  }
  std::uniform_real_distribution<double> pix(0.0, 1.0);
  Matrix images(B, mc.image_size * mc.image_size);
  for (Eigen::Index i = 0; i < images.size(); ++i) images.data()[i] = pix(rng);

  std::vector<std::vector<int>> cls_seqs, match_seqs, dec_seqs;
  for (const auto& r : reports) {
    cls_seqs.push_back(tokenizer.encode(r, TokenMode::encode_cls));
    match_seqs.push_back(tokenizer.encode(r, TokenMode::encode_match));
    dec_seqs.push_back(tokenizer.encode(r, TokenMode::decode));
  }
  const TokenBatch cls_tokens = TokenBatch::from(cls_seqs);
  const LmBatch lm_batch = make_lm_batch(dec_seqs);
  const ItcCandidates cands{unit_rows(B, mc.proj_dim, rng), unit_rows(B, mc.proj_dim, rng), unit_rows(o.queue, mc.proj_dim, rng),
                            unit_rows(o.queue, mc.proj_dim, rng)};
  const Matrix targets = itc_targets(B, B + o.queue);
  InjectionOptions opts;
  opts.use_knowledge = true;
  const int Lv = mc.image_tokens();

  ItmNegatives negatives;
  bool have_negatives = false;
  const std::vector<std::string> names{"itc", "itm", "lm", "mlc", "total"};

  // Loss `which` (index into names) with all discrete choices fixed.
  auto build = [&](Tape& t, std::size_t which) {
    InjectionOutput inj = run_injection(t, model, kb, images, {}, nullptr, opts, &pinned);
    const Var tau = model.temperature(t);
    const Var image_proj = model.project(t, ad::select_rows(inj.f_v_gk_sk, first_rows(B, Lv)), Head::image);
    const Var text_proj =
        model.project(t, ad::select_rows(model.encode_text(t, cls_tokens), first_rows(B, cls_tokens.len)), Head::text);
    const ItcLogits logits = itc_similarities(image_proj, text_proj, cands, tau);
    if (!have_negatives) {
      std::mt19937_64 neg_rng(o.seed);
      negatives = sample_itm_negatives(logits.i2t.value().leftCols(B), logits.t2i.value().leftCols(B), neg_rng);
      have_negatives = true;
    }
    const Var itc = itc_loss(logits, targets, targets);
    if (which == 0) return itc;
    const Var itm = itm_loss(t, model, inj.f_v_gk_sk, match_seqs, negatives);
    if (which == 1) return itm;
    const Var lm = lm_loss(t, model, inj.f_v_gk_sk, lm_batch, 0.1);
    if (which == 2) return lm;
    const Var mlc = mlc_loss(mlc_forward(inj.gk_proj, encode_labels(t, model, labels, tokenizer)), label_m, model.mlc_temperature(t));
    if (which == 3) return mlc;
    return total_loss(itc, itm, lm, mlc, LossWeights{});
  };
  auto value_of = [&](std::size_t which) {
    Tape t(false);
    return build(t, which).scalar();
  };

  GradcheckReport report;
  report.losses = names;
  ParamStore& store_p = model.params();
  for (std::size_t which = 0; which < names.size(); ++which) {
    Tape t;
    const Var loss = build(t, which);
    store_p.zero_grad();
    t.backward(loss);
    std::vector<std::pair<Parameter*, Matrix>> grads;
    for (Parameter* p : store_p.all()) grads.emplace_back(p, p->grad);

    std::vector<std::string> touched;
    for (auto& [p, g] : grads) {
      if (g.size() == 0) continue;
      if (g.cwiseAbs().maxCoeff() > 0.0) touched.push_back(p->name);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(g.size()));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return std::abs(g.data()[a]) > std::abs(g.data()[b]); });
      std::vector<Eigen::Index> picks(order.begin(), order.begin() + std::min<std::ptrdiff_t>(o.top_entries, g.size()));
      std::uniform_int_distribution<Eigen::Index> any(0, g.size() - 1);
      for (int r = 0; r < o.random_entries; ++r) {
        const Eigen::Index i = any(rng);
        if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
      }
      for (Eigen::Index i : picks) {
        double& x = p->value.data()[i];
        const double saved = x;
        auto central = [&](double h) {
          x = saved + h;
          const double up = value_of(which);
          x = saved - h;
          const double down = value_of(which);
          x = saved;
          return (up - down) / (2.0 * h);
        };
        // Richardson extrapolation cancels the h^2 truncation term.
        const double numeric = (4.0 * central(o.eps / 2.0) - central(o.eps)) / 3.0;
        GradcheckEntry e{names[which], p->name, i, g.data()[i], numeric, 0.0};
        e.rel_error = relative_error(e.analytic, e.numeric, o.abs_floor);
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        report.entries.push_back(std::move(e));
      }
    }
    report.touched.push_back(std::move(touched));
  }
  report.passed = report.max_rel_error <= o.tolerance;
  return report;
}

}  // namespace motor
