#include "motor/model.hpp"

#include "motor/text.hpp"

#include <stdexcept>

namespace motor {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ffn_mult <= 0) fail("dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (channels <= 0 || proj_dim <= 0) fail("channels and proj_dim must be positive");
  if (max_text_len < 3 || sk_max_len < 1) fail("text lengths too small");
}

Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    m.data()[i] = z * stddev;
  }
  return m;
}

namespace {

constexpr double kInitStd = 0.02;

LinearLayer make_linear(ParamStore& s, const std::string& name, int in, int out, bool bias, std::mt19937_64& rng) {
  LinearLayer l;
  l.w = &s.add(name + ".w", truncated_normal(in, out, kInitStd, rng), true);
  if (bias) l.b = &s.add(name + ".b", Matrix::Zero(1, out), false);
  return l;
}

LayerNormLayer make_norm(ParamStore& s, const std::string& name, int d) {
  return {&s.add(name + ".gain", Matrix::Ones(1, d), false), &s.add(name + ".bias", Matrix::Zero(1, d), false)};
}

MultiHeadAttention make_attention(ParamStore& s, const std::string& name, int d, int heads, std::mt19937_64& rng) {
  MultiHeadAttention a;
  a.q = make_linear(s, name + ".q", d, d, true, rng);
  a.k = make_linear(s, name + ".k", d, d, true, rng);
  a.v = make_linear(s, name + ".v", d, d, true, rng);
  a.o = make_linear(s, name + ".o", d, d, true, rng);
  a.heads = heads;
  return a;
}

LinearLayer bind_linear(ParamStore& s, const std::string& name) {
  LinearLayer l{&s.get(name + ".w"), nullptr};
  if (s.contains(name + ".b")) l.b = &s.get(name + ".b");
  return l;
}

LayerNormLayer bind_norm(ParamStore& s, const std::string& name) { return {&s.get(name + ".gain"), &s.get(name + ".bias")}; }

MultiHeadAttention bind_attention(ParamStore& s, const std::string& name, int heads) {
  return {bind_linear(s, name + ".q"), bind_linear(s, name + ".k"), bind_linear(s, name + ".v"), bind_linear(s, name + ".o"), heads};
}

}  // namespace

Var LinearLayer::operator()(Tape& t, Var x) const { return ad::linear(x, t.param(*w), b ? t.param(*b) : Var{}); }

Var LayerNormLayer::operator()(Tape& t, Var x) const { return ad::layer_norm(x, t.param(*gain), t.param(*bias)); }

Var MultiHeadAttention::operator()(Tape& t, Var query, Var kv, const AttentionLayout& layout, std::vector<Matrix>* capture) const {
  Var qh = q(t, query);
  Var kh = k(t, kv);
  Var vh = v(t, kv);
  return o(t, ad::attention(qh, kh, vh, heads, layout, capture));
}

Var TransformerStack::forward(Tape& t, Var x, const AttentionLayout& self_layout, Var kv, const AttentionLayout* cross_layout,
                              std::vector<Matrix>* cross_capture) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const TransformerBlock& blk = blocks[i];
    Var h = blk.ln_self(t, x);
    x = ad::add(x, blk.self(t, h, h, self_layout));
    if (blk.has_cross && cross_layout) {
      const bool last = i + 1 == blocks.size();
      Var hc = blk.ln_cross(t, x);
      x = ad::add(x, blk.cross(t, hc, kv, *cross_layout, last ? cross_capture : nullptr));
    }
    Var hf = blk.ln_ffn(t, x);
    x = ad::add(x, blk.fc2(t, ad::gelu(blk.fc1(t, hf))));
  }
  return ln_out(t, x);
}

TransformerStack make_stack(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, bool with_cross,
                            std::mt19937_64& rng) {
  TransformerStack s;
  const int d = cfg.d_model, hidden = cfg.d_model * cfg.ffn_mult;
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    TransformerBlock b;
    b.ln_self = make_norm(store, p + ".ln_self", d);
    b.self = make_attention(store, p + ".self", d, cfg.n_heads, rng);
    b.has_cross = with_cross;
    if (with_cross) {
      b.ln_cross = make_norm(store, p + ".ln_cross", d);
      b.cross = make_attention(store, p + ".cross", d, cfg.n_heads, rng);
    }
    b.ln_ffn = make_norm(store, p + ".ln_ffn", d);
    b.fc1 = make_linear(store, p + ".fc1", d, hidden, true, rng);
    b.fc2 = make_linear(store, p + ".fc2", hidden, d, true, rng);
    s.blocks.push_back(b);
  }
  s.ln_out = make_norm(store, prefix + ".ln_out", d);
  return s;
}

Matrix patchify(const Matrix& images, const ModelConfig& cfg) {
  const int S = cfg.image_size, P = cfg.patch_size, C = cfg.channels, G = cfg.grid();
  if (images.cols() != static_cast<Eigen::Index>(S) * S * C) throw ShapeError("image size does not match model config");
  const Eigen::Index B = images.rows();
  Matrix out(B * cfg.n_patches(), cfg.patch_dim());
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        const Eigen::Index row = b * cfg.n_patches() + gy * G + gx;
        int col = 0;
        for (int y = 0; y < P; ++y) {
          for (int x = 0; x < P; ++x) {
            for (int c = 0; c < C; ++c) {
              const int py = gy * P + y, px = gx * P + x;
              out(row, col++) = images(b, (static_cast<Eigen::Index>(py) * S + px) * C + c);
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<int> first_rows(int batch, int len) {
  std::vector<int> out(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) out[static_cast<std::size_t>(b)] = b * len;
  return out;
}

MotorModel::MotorModel(const ModelConfig& cfg, int vocab_size, std::uint64_t seed) : cfg_(cfg), vocab_(vocab_size), rng_(seed) {
  cfg_.validate();
  if (vocab_size <= Tokenizer::kNumSpecials) throw std::invalid_argument("vocabulary too small");
  const int d = cfg_.d_model;
  auto& s = store_;
  tok_embed_ = &s.add("embed.tok", truncated_normal(vocab_size, d, kInitStd, rng_), true);
  pos_embed_ = &s.add("embed.pos", truncated_normal(cfg_.max_positions(), d, kInitStd, rng_), true);
  structure_ = &s.add("embed.structure", truncated_normal(3, d, kInitStd, rng_), true);

  patch_ = make_linear(s, "image.patch", cfg_.patch_dim(), d, true, rng_);
  cls_ = &s.add("image.cls", truncated_normal(1, d, kInitStd, rng_), true);
  image_pos_ = &s.add("image.pos", truncated_normal(cfg_.image_tokens(), d, kInitStd, rng_), true);
  image_ = make_stack(s, "image.enc", cfg_, false, rng_);
  text_ = make_stack(s, "text.enc", cfg_, false, rng_);
  if (!cfg_.tie_knowledge_encoders) {
    gk_ = make_stack(s, "gk.enc", cfg_, false, rng_);
    sk_ = make_stack(s, "sk.enc", cfg_, false, rng_);
  }
  gk_inject_ = make_stack(s, "gk_inject", cfg_, true, rng_);
  sk_inject_ = make_stack(s, "sk_inject", cfg_, true, rng_);
  match_ = make_stack(s, "match", cfg_, true, rng_);
  decoder_ = make_stack(s, "decoder", cfg_, true, rng_);

  image_proj_ = make_linear(s, "proj.image", d, cfg_.proj_dim, cfg_.projection_bias, rng_);
  text_proj_ = make_linear(s, "proj.text", d, cfg_.proj_dim, cfg_.projection_bias, rng_);
  itm_head_ = make_linear(s, "itm_head", d, 2, true, rng_);
  lm_head_ = make_linear(s, "lm_head", d, vocab_size, true, rng_);
  temp_ = &s.add("temp", Matrix::Constant(1, 1, 0.07), false);
  mlc_temp_ = &s.add("mlc_temp", Matrix::Constant(1, 1, 0.07), false);
}

void MotorModel::copy_values_from(const MotorModel& other) {
  for (Parameter* p : store_.all()) {
    if (other.store_.contains(p->name)) {
      const Parameter& q = other.store_.get(p->name);
      if (q.value.rows() != p->value.rows() || q.value.cols() != p->value.cols()) {
        throw ShapeError("copy_values_from: shape mismatch for " + p->name);
      }
      p->value = q.value;
    }
  }
}

Var MotorModel::encode_image(Tape& t, const Matrix& images) const {
  const int B = static_cast<int>(images.rows());
  const int n = cfg_.n_patches();
  Var patches = t.constant(patchify(images, cfg_));
  Var emb = patch_(t, patches);
  Var cls = t.param(*cls_);
  std::vector<Var> parts;
  parts.reserve(static_cast<std::size_t>(2 * B));
  for (int b = 0; b < B; ++b) {
    parts.push_back(cls);
    parts.push_back(ad::rows(emb, static_cast<Eigen::Index>(b) * n, n));
  }
  Var x = ad::add_tiled(ad::concat_rows(parts), t.param(*image_pos_));
  AttentionLayout layout{B, n + 1, n + 1};
  return image_.forward(t, x, layout);
}

Var MotorModel::embed_tokens(Tape& t, const TokenBatch& tokens) const {
  if (tokens.len > cfg_.max_positions()) throw ShapeError("token sequence longer than position table");
  Var tok = ad::embed(t.param(*tok_embed_), tokens.ids);
  Var pos = ad::rows(t.param(*pos_embed_), 0, tokens.len);
  return ad::add_tiled(tok, pos);
}

Var MotorModel::encode_text(Tape& t, const TokenBatch& tokens, const Matrix* visible) const {
  if (visible && (visible->rows() != tokens.len || visible->cols() != tokens.len)) throw ShapeError("visible mask does not match token length");
  AttentionLayout layout{tokens.batch, tokens.len, tokens.len};
  layout.key_valid = &tokens.valid;
  layout.visible = visible;
  return text_.forward(t, embed_tokens(t, tokens), layout);
}

Var MotorModel::encode_specific(Tape& t, const TokenBatch& tokens) const {
  AttentionLayout layout{tokens.batch, tokens.len, tokens.len};
  layout.key_valid = &tokens.valid;
  return specific_stack().forward(t, embed_tokens(t, tokens), layout);
}

Var MotorModel::embed_graph_nodes(Tape& t, const KnowledgeGraph& graph, const Tokenizer& tokenizer) const {
  std::vector<std::vector<int>> groups;
  std::vector<int> kinds;
  for (const auto& n : graph.nodes()) {
    std::vector<int> g;
    for (const auto& w : normalize_words(n.name)) {
      if (!tokenizer.contains(w)) throw std::invalid_argument("no word embedding for graph node word '" + w + "'");
      g.push_back(tokenizer.id(w));
    }
    groups.push_back(std::move(g));
    kinds.push_back(static_cast<int>(n.kind));
  }
  return ad::add(ad::embed_mean(t.param(*tok_embed_), groups), ad::embed(t.param(*structure_), kinds));
}

Var MotorModel::encode_graph(Tape& t, Var node_embeddings, const Matrix& adjacency) const {
  const auto n = node_embeddings.rows();
  if (adjacency.rows() != n || adjacency.cols() != n) throw ShapeError("adjacency does not match node count");
  AttentionLayout layout{1, static_cast<int>(n), static_cast<int>(n)};
  layout.visible = &adjacency;
  return graph_stack().forward(t, node_embeddings, layout);
}

Var MotorModel::cross_encode(Tape& t, const TransformerStack& stack, Var query, int batch, int q_len, const Matrix* q_valid,
                             bool causal, Var kv, int k_len, bool kv_shared, const Matrix* kv_valid,
                             std::vector<Matrix>* capture) const {
  if (query.cols() != cfg_.d_model || kv.cols() != cfg_.d_model) throw ShapeError("cross_encode: feature width");
  AttentionLayout self{batch, q_len, q_len};
  self.key_valid = q_valid;
  self.causal = causal;
  AttentionLayout cross{batch, q_len, k_len};
  cross.kv_shared = kv_shared;
  cross.key_valid = kv_valid;
  return stack.forward(t, query, self, kv, &cross, capture);
}

Var MotorModel::inject_general(Tape& t, Var image_feats, int batch, Var graph_feats, std::vector<Matrix>* capture) const {
  const int Lv = cfg_.image_tokens();
  return cross_encode(t, gk_inject_, image_feats, batch, Lv, nullptr, false, graph_feats, static_cast<int>(graph_feats.rows()),
                      true, nullptr, capture);
}

Var MotorModel::inject_specific(Tape& t, Var image_feats, int batch, Var sk_feats, const TokenBatch& sk_tokens,
                                std::vector<Matrix>* capture) const {
  if (sk_tokens.batch != batch) throw ShapeError("inject_specific: batch mismatch");
  const int Lv = cfg_.image_tokens();
  return cross_encode(t, sk_inject_, image_feats, batch, Lv, nullptr, false, sk_feats, sk_tokens.len, false, &sk_tokens.valid,
                      capture);
}

Var MotorModel::match_encode(Tape& t, const TokenBatch& tokens, Var image_feats) const {
  return match_encode_with(t, match_, tokens, image_feats);
}

Var MotorModel::match_encode_with(Tape& t, const TransformerStack& stack, const TokenBatch& tokens, Var image_feats) const {
  const int Lv = cfg_.image_tokens();
  if (image_feats.rows() != static_cast<Eigen::Index>(tokens.batch) * Lv) throw ShapeError("match_encode: image batch mismatch");
  return cross_encode(t, stack, embed_tokens(t, tokens), tokens.batch, tokens.len, &tokens.valid, false, image_feats, Lv, false,
                      nullptr);
}

Var MotorModel::decode_logits(Tape& t, const TokenBatch& tokens, Var image_feats) const {
  const int Lv = cfg_.image_tokens();
  if (image_feats.rows() != static_cast<Eigen::Index>(tokens.batch) * Lv) throw ShapeError("decode: image batch mismatch");
  Var h = cross_encode(t, decoder_, embed_tokens(t, tokens), tokens.batch, tokens.len, &tokens.valid, true, image_feats, Lv, false,
                       nullptr);
  return lm_head_(t, h);
}

Var MotorModel::project(Tape& t, Var rows, Head head) const {
  return ad::l2_normalize_rows((head == Head::image ? image_proj_ : text_proj_)(t, rows), 1e-12);
}

Var MotorModel::itm_logits(Tape& t, Var pooled) const { return itm_head_(t, pooled); }

TransformerStack MotorModel::clone_match_stack(const std::string& prefix) {
  if (!store_.contains(prefix + ".ln_out.gain")) {
    make_stack(store_, prefix, cfg_, true, rng_);
    for (Parameter* p : store_.all()) {
      if (p->name.starts_with("match.")) store_.get(prefix + p->name.substr(5)).value = p->value;
    }
  }
  return bind_stack(prefix, true);
}

TransformerStack MotorModel::bind_stack(const std::string& prefix, bool with_cross) {
  TransformerStack s;
  for (int i = 0; store_.contains(prefix + "." + std::to_string(i) + ".fc1.w"); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    TransformerBlock b;
    b.ln_self = bind_norm(store_, p + ".ln_self");
    b.self = bind_attention(store_, p + ".self", cfg_.n_heads);
    b.has_cross = with_cross;
    if (with_cross) {
      b.ln_cross = bind_norm(store_, p + ".ln_cross");
      b.cross = bind_attention(store_, p + ".cross", cfg_.n_heads);
    }
    b.ln_ffn = bind_norm(store_, p + ".ln_ffn");
    b.fc1 = bind_linear(store_, p + ".fc1");
    b.fc2 = bind_linear(store_, p + ".fc2");
    s.blocks.push_back(b);
  }
  if (s.blocks.empty()) throw std::out_of_range("no stack under prefix " + prefix);
  s.ln_out = bind_norm(store_, prefix + ".ln_out");
  return s;
}

}  // namespace motor
