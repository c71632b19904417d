#include "motor/session.hpp"

#include "motor/binary_io.hpp"
#include "motor/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace motor {
namespace {

constexpr char kMagic[8] = {'M', 'O', 'T', 'O', 'R', 'C', 'K', 'P'};
constexpr std::uint64_t kVersion = 1;

void write_params(std::ostream& out, const ParamStore& store) {
  bin::write_u64(out, store.size());
  for (const Parameter* p : store.all()) {
    bin::write_string(out, p->name);
    bin::write_u64(out, p->decay ? 1 : 0);
    bin::write_matrix(out, p->value);
  }
}

void read_params(std::istream& in, ParamStore& store) {
  const auto n = bin::read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = bin::read_string(in);
    const bool decay = bin::read_u64(in) != 0;
    Matrix value = bin::read_matrix(in);
    if (store.contains(name)) {
      Parameter& p = store.get(name);
      if (p.value.rows() != value.rows() || p.value.cols() != value.cols()) {
        throw ShapeError("checkpoint parameter " + name + " has a different shape");
      }
      p.value = std::move(value);
      p.decay = decay;
    } else {
      store.add(std::move(name), std::move(value), decay);
    }
  }
}

void clamp_scalar(ParamStore& store, const char* name, double lo, double hi) {
  Parameter& p = store.get(name);
  p.value(0, 0) = std::clamp(p.value(0, 0), lo, hi);
}

}  // namespace

std::string to_csv(const StepLog& l) {
  std::ostringstream o;
  o.precision(10);
  o << l.step << ',' << l.total << ',' << l.itc << ',' << l.itm << ',' << l.lm << ',' << l.mlc << ',' << l.tau;
  return o.str();
}

Resources Resources::load(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.data_dir);
  return Resources{load_graph(cfg.graph_path), Tokenizer::load((dir / "vocab.txt").string(), cfg.model.max_text_len),
                   EntityLexicon::load((dir / "lexicon.txt").string()), TripletStore::load((dir / "triplets.tsv").string()),
                   LabelSet::chest14()};
}

std::shared_ptr<const Dataset> load_corpus(const RunConfig& cfg, const std::string& file) {
  return std::make_shared<const Dataset>(load_dataset((std::filesystem::path(cfg.data_dir) / file).string()));
}

Session::Session(RunConfig cfg, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data)
    : Session(std::move(cfg), std::move(res), std::move(data), true) {}

Session::Session(RunConfig cfg, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data, bool init)
    : cfg_(std::move(cfg)),
      res_(std::move(res)),
      data_(std::move(data)),
      image_queue_(static_cast<std::size_t>(cfg_.queue_size), cfg_.model.proj_dim),
      text_queue_(static_cast<std::size_t>(cfg_.queue_size), cfg_.model.proj_dim),
      report_queue_(static_cast<std::size_t>(cfg_.report_queue_size), cfg_.model.proj_dim),
      rng_(cfg_.seed ^ 0x6d6f746f72ull) {
  cfg_.validate();
  res_->labels.validate();
  const int vocab = res_->tokenizer.vocab_size();
  model_ = std::make_unique<MotorModel>(cfg_.model, vocab, cfg_.seed);
  momentum_ = std::make_unique<MotorModel>(cfg_.model, vocab, cfg_.seed);
  if (init) {
    model_->params().get("temp").value(0, 0) = cfg_.temp_init;
    model_->params().get("mlc_temp").value(0, 0) = cfg_.mlc_temp_init;
    momentum_->copy_values_from(*model_);
  }
  AdamWConfig oc;
  oc.lr = cfg_.lr;
  oc.weight_decay = cfg_.weight_decay;
  oc.warmup_steps = cfg_.lr_warmup_steps;
  oc.grad_clip = cfg_.grad_clip;
  opt_ = std::make_unique<AdamW>(oc);
}

KnowledgeBase Session::knowledge() const {
  KnowledgeBase kb;
  kb.graph = &res_->graph;
  kb.tokenizer = &res_->tokenizer;
  kb.lexicon = &res_->lexicon;
  kb.store = &res_->store;
  const Dataset* d = data_.get();
  kb.report_text = [d](std::int64_t id) -> const std::string* {
    const CorpusRecord* r = d ? d->find(id) : nullptr;
    return r ? &r->report : nullptr;
  };
  return kb;
}

InjectionOptions Session::injection_options(bool retrieve) const {
  InjectionOptions o;
  o.use_knowledge = cfg_.use_knowledge;
  o.k = static_cast<std::size_t>(cfg_.top_k);
  o.triplet_cap = static_cast<std::size_t>(cfg_.triplet_cap);
  o.exclude_paired = cfg_.exclude_paired;
  o.retrieve = retrieve;
  return o;
}

std::vector<int> Session::next_batch(int size) {
  const std::vector<int> train = data_->indices(Split::train);
  if (static_cast<int>(train.size()) < size) throw std::invalid_argument("training split smaller than the batch size");
  if (epoch_order_.empty() || epoch_cursor_ + static_cast<std::size_t>(size) > epoch_order_.size()) {
    epoch_order_ = train;
    std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng_);
    epoch_cursor_ = 0;
  }
  std::vector<int> out(epoch_order_.begin() + static_cast<std::ptrdiff_t>(epoch_cursor_),
                       epoch_order_.begin() + static_cast<std::ptrdiff_t>(epoch_cursor_ + static_cast<std::size_t>(size)));
  epoch_cursor_ += static_cast<std::size_t>(size);
  return out;
}

std::vector<std::vector<int>> Session::tokens_of(const std::vector<int>& idx, TokenMode mode) const {
  std::vector<std::vector<int>> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(res_->tokenizer.encode(data_->records[static_cast<std::size_t>(i)].report, mode));
  return out;
}

Matrix Session::labels_of(const std::vector<int>& idx) const {
  Matrix y(static_cast<Eigen::Index>(idx.size()), kNumLabels);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int c = 0; c < kNumLabels; ++c)
      y(static_cast<Eigen::Index>(i), c) = data_->records[static_cast<std::size_t>(idx[i])].labels[static_cast<std::size_t>(c)];
  return y;
}

StepLog Session::train_step(const Objectives& obj, int batch_size) {
  if (obj.itm && !obj.itc) throw std::invalid_argument("ITM training requires the contrastive objective");
  const int B = batch_size > 0 ? batch_size : cfg_.batch_size;
  const std::vector<int> idx = next_batch(B);
  std::vector<std::int64_t> ids;
  for (int i : idx) ids.push_back(data_->records[static_cast<std::size_t>(i)].id);
  const Matrix images = data_->image_rows(idx);
  const KnowledgeBase kb = knowledge();
  const InjectionOptions opts = injection_options(step_ >= cfg_.sk_warmup_steps);
  const int Lv = cfg_.model.image_tokens();

  Tape t;
  InjectionOutput inj = run_injection(t, *model_, kb, images, ids, &report_queue_, opts);
  Var zero = t.constant(Matrix::Zero(1, 1));
  Var itc = zero, itm = zero, lm = zero, mlc = zero;
  LossWeights w{cfg_.lambda_itm, cfg_.lambda_lm, cfg_.lambda_mlc};
  Matrix image_m, text_m;
  const Var tau = model_->temperature(t);

  if (obj.itc) {
    const Var image_proj = model_->project(t, ad::select_rows(inj.f_v_gk_sk, first_rows(B, Lv)), Head::image);
    const TokenBatch cls_tokens = TokenBatch::from(tokens_of(idx, TokenMode::encode_cls));
    const Var text_proj =
        model_->project(t, ad::select_rows(model_->encode_text(t, cls_tokens), first_rows(B, cls_tokens.len)), Head::text);
    // Momentum features reuse this step's retrieved knowledge.
    {
      Tape tm(false);
      std::vector<std::vector<Triplet>> pinned;
      for (const auto& sk : inj.specific) pinned.push_back(sk.triplets);
      InjectionOutput m = run_injection(tm, *momentum_, kb, images, ids, nullptr, opts, opts.use_knowledge ? &pinned : nullptr);
      image_m = momentum_->project(tm, ad::select_rows(m.f_v_gk_sk, first_rows(B, Lv)), Head::image).value();
      text_m = momentum_->project(tm, ad::select_rows(momentum_->encode_text(tm, cls_tokens), first_rows(B, cls_tokens.len)),
                                  Head::text)
                   .value();
    }
    ItcCandidates cands{image_m, text_m, image_queue_.snapshot(), text_queue_.snapshot()};
    const ItcLogits logits = itc_similarities(image_proj, text_proj, cands, tau);
    const int n_cand = B + static_cast<int>(cands.image_queue.rows());
    Matrix g_i2t = itc_targets(B, n_cand);
    Matrix g_t2i = g_i2t;
    if (cfg_.soft_itc_targets) {
      const auto img_ids = image_queue_.ids_in_order();
      const auto txt_ids = text_queue_.ids_in_order();
      for (int i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < img_ids.size(); ++j) {
          if (txt_ids[j] == ids[static_cast<std::size_t>(i)]) g_i2t(i, B + static_cast<Eigen::Index>(j)) = 1.0;
          if (img_ids[j] == ids[static_cast<std::size_t>(i)]) g_t2i(i, B + static_cast<Eigen::Index>(j)) = 1.0;
        }
        g_i2t.row(i) /= g_i2t.row(i).sum();
        g_t2i.row(i) /= g_t2i.row(i).sum();
      }
    }
    itc = itc_loss(logits, g_i2t, g_t2i);
    if (obj.itm) {
      const ItmNegatives neg = sample_itm_negatives(logits.i2t.value().leftCols(B), logits.t2i.value().leftCols(B), rng_);
      itm = itm_loss(t, *model_, inj.f_v_gk_sk, tokens_of(idx, TokenMode::encode_match), neg);
    }
  }
  if (!obj.itm) w.itm = 0.0;
  if (obj.lm) {
    lm = lm_loss(t, *model_, inj.f_v_gk_sk, make_lm_batch(tokens_of(idx, TokenMode::decode)), cfg_.label_smoothing);
  } else {
    w.lm = 0.0;
  }
  // The bridge objective belongs to the knowledge pipeline.
  if (obj.mlc && opts.use_knowledge) {
    const Var label_proj = encode_labels(t, *model_, res_->labels, res_->tokenizer);
    mlc = mlc_loss(mlc_forward(inj.gk_proj, label_proj), labels_of(idx), model_->mlc_temperature(t));
  } else {
    w.mlc = 0.0;
  }
  Var total;
  try {
    total = total_loss(itc, itm, lm, mlc, w);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step_ + 1) + ": " + e.what());
  }

  model_->params().zero_grad();
  t.backward(total);
  opt_->step(model_->params());
  clamp_scalar(model_->params(), "temp", 0.001, 0.5);
  clamp_scalar(model_->params(), "mlc_temp", 0.001, 0.5);
  if (obj.itc) {
    momentum_update(model_->params(), momentum_->params(), MomentumCoeff(cfg_.momentum));
    image_queue_.enqueue(image_m, ids);
    text_queue_.enqueue(text_m, ids);
    report_queue_.enqueue(text_m, ids);
  }
  ++step_;
  return {step_, total.scalar(), itc.scalar(), itm.scalar(), lm.scalar(), mlc.scalar(), tau.scalar()};
}

void Session::pretrain(std::ostream* log) {
  if (log) *log << kLossCsvHeader << "\n";
  for (int s = 0; s < cfg_.steps; ++s) {
    const StepLog l = pretrain_step();
    if (log) *log << to_csv(l) << "\n" << std::flush;
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && s + 1 < cfg_.steps) {
      std::filesystem::create_directories(cfg_.out_dir);
      save((std::filesystem::path(cfg_.out_dir) / ("checkpoint_step" + std::to_string(step_) + ".bin")).string());
    }
  }
}

void Session::set_optimizer(AdamWConfig cfg, std::vector<std::string> trainable) {
  opt_ = std::make_unique<AdamW>(cfg);
  opt_->set_trainable(std::move(trainable));
}

void Session::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  bin::write_u64(out, kVersion);
  bin::write_string(out, cfg_.to_text());
  bin::write_u64(out, static_cast<std::uint64_t>(res_->tokenizer.vocab_size()));
  write_params(out, model_->params());
  write_params(out, momentum_->params());
  image_queue_.write(out);
  text_queue_.write(out);
  report_queue_.write(out);
  const AdamWConfig& oc = opt_->config();
  for (double v : {oc.lr, oc.beta1, oc.beta2, oc.eps, oc.weight_decay, oc.grad_clip}) bin::write_f64(out, v);
  bin::write_i64(out, oc.warmup_steps);
  bin::write_u64(out, opt_->trainable().size());
  for (const auto& p : opt_->trainable()) bin::write_string(out, p);
  opt_->write(out);
  std::ostringstream rng_state;
  rng_state << rng_;
  bin::write_string(out, rng_state.str());
  bin::write_i64(out, step_);
  bin::write_u64(out, epoch_order_.size());
  for (int i : epoch_order_) bin::write_i64(out, i);
  bin::write_u64(out, epoch_cursor_);
  bin::write_u64(out, metadata_.size());
  for (const auto& [k, v] : metadata_) {
    bin::write_string(out, k);
    bin::write_string(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

namespace {

RunConfig read_header(std::istream& in, const std::string& path) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) throw ParseError(path + ": not a checkpoint");
  if (bin::read_u64(in) != kVersion) throw ParseError(path + ": unsupported checkpoint version");
  return parse_config(bin::read_string(in));
}

}  // namespace

RunConfig Session::read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return read_header(in, path);
}

Session Session::load(const std::string& path, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  RunConfig cfg = read_header(in, path);
  if (static_cast<int>(bin::read_u64(in)) != res->tokenizer.vocab_size()) {
    throw ShapeError(path + ": vocabulary size differs from the loaded vocabulary");
  }
  Session s(std::move(cfg), std::move(res), std::move(data), false);
  read_params(in, s.model_->params());
  read_params(in, s.momentum_->params());
  s.image_queue_ = FeatureQueue::read(in);
  s.text_queue_ = FeatureQueue::read(in);
  s.report_queue_ = FeatureQueue::read(in);
  AdamWConfig oc;
  oc.lr = bin::read_f64(in);
  oc.beta1 = bin::read_f64(in);
  oc.beta2 = bin::read_f64(in);
  oc.eps = bin::read_f64(in);
  oc.weight_decay = bin::read_f64(in);
  oc.grad_clip = bin::read_f64(in);
  oc.warmup_steps = static_cast<int>(bin::read_i64(in));
  std::vector<std::string> trainable(bin::read_u64(in));
  for (auto& p : trainable) p = bin::read_string(in);
  s.set_optimizer(oc, std::move(trainable));
  s.opt_->read(in);
  std::istringstream rng_state(bin::read_string(in));
  rng_state >> s.rng_;
  s.step_ = static_cast<long>(bin::read_i64(in));
  s.epoch_order_.resize(bin::read_u64(in));
  for (int& i : s.epoch_order_) i = static_cast<int>(bin::read_i64(in));
  s.epoch_cursor_ = bin::read_u64(in);
  const auto n_meta = bin::read_u64(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = bin::read_string(in);
    s.metadata_[k] = bin::read_string(in);
  }
  return s;
}

}  // namespace motor
