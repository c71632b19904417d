#pragma once

// Transformer building blocks and the full model: image encoder, text
// encoders for reports / general knowledge / specific knowledge, three
// cross-modal encoders, a causal report decoder and projection heads.

#include "motor/autograd.hpp"
#include "motor/graph_knowledge.hpp"
#include "motor/tokenizer.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace motor {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_mult = 4;
  int patch_size = 8;
  int image_size = 64;
  int channels = 1;
  int proj_dim = 32;
  int max_text_len = 64;
  int sk_max_len = 90;
  /// E_gk and E_sk reuse the report encoder stack instead of their own.
  bool tie_knowledge_encoders = false;
  bool projection_bias = true;

  void validate() const;
  int grid() const { return image_size / patch_size; }
  int n_patches() const { return grid() * grid(); }
  int image_tokens() const { return n_patches() + 1; }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int max_positions() const { return std::max(max_text_len, sk_max_len); }
};

/// Truncated normal (two standard deviations), used for every weight matrix.
Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

struct LinearLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;  // optional
  Var operator()(Tape& t, Var x) const;
};

struct LayerNormLayer {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  Var operator()(Tape& t, Var x) const;
};

struct MultiHeadAttention {
  LinearLayer q, k, v, o;
  int heads = 1;
  Var operator()(Tape& t, Var query, Var kv, const AttentionLayout& layout, std::vector<Matrix>* capture = nullptr) const;
};

/// Pre-norm block: self-attention, optional cross-attention, GELU feed-forward.
struct TransformerBlock {
  LayerNormLayer ln_self;
  MultiHeadAttention self;
  bool has_cross = false;
  LayerNormLayer ln_cross;
  MultiHeadAttention cross;
  LayerNormLayer ln_ffn;
  LinearLayer fc1, fc2;
};

struct TransformerStack {
  std::vector<TransformerBlock> blocks;
  LayerNormLayer ln_out;

  /// Cross-attention is applied only when the blocks have it and cross_layout is set.
  /// cross_capture receives the final block's cross-attention maps.
  Var forward(Tape& t, Var x, const AttentionLayout& self_layout, Var kv = {}, const AttentionLayout* cross_layout = nullptr,
              std::vector<Matrix>* cross_capture = nullptr) const;
};

TransformerStack make_stack(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, bool with_cross,
                            std::mt19937_64& rng);

enum class Head { image, text };

/// Cuts B images (one per row, row-major pixels, channel-last) into
/// B*n_patches rows of flattened non-overlapping patches.
Matrix patchify(const Matrix& images, const ModelConfig& cfg);

/// Indices of the first row of each of `batch` stacked sequences of length len.
std::vector<int> first_rows(int batch, int len);

class MotorModel {
 public:
  MotorModel(const ModelConfig& cfg, int vocab_size, std::uint64_t seed);
  MotorModel(const MotorModel&) = delete;
  MotorModel& operator=(const MotorModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Copies every parameter value present in both models by name.
  void copy_values_from(const MotorModel& other);

  // Unimodal encoders. Outputs are stacked B*L x d.
  Var encode_image(Tape& t, const Matrix& images) const;
  Var embed_tokens(Tape& t, const TokenBatch& tokens) const;
  Var encode_text(Tape& t, const TokenBatch& tokens, const Matrix* visible = nullptr) const;
  Var encode_specific(Tape& t, const TokenBatch& tokens) const;
  /// Word embedding (mean over a node's words) plus its structure embedding.
  Var embed_graph_nodes(Tape& t, const KnowledgeGraph& graph, const Tokenizer& tokenizer) const;
  Var encode_graph(Tape& t, Var node_embeddings, const Matrix& adjacency) const;

  // Cross-modal encoders.
  Var inject_general(Tape& t, Var image_feats, int batch, Var graph_feats, std::vector<Matrix>* capture = nullptr) const;
  Var inject_specific(Tape& t, Var image_feats, int batch, Var sk_feats, const TokenBatch& sk_tokens,
                      std::vector<Matrix>* capture = nullptr) const;
  /// Report tokens ([Encode] first) attending to per-example image features.
  Var match_encode(Tape& t, const TokenBatch& tokens, Var image_feats) const;
  /// Same computation with an explicitly chosen stack (used by VQA encoders).
  Var match_encode_with(Tape& t, const TransformerStack& stack, const TokenBatch& tokens, Var image_feats) const;
  /// Next-token logits, B*L x vocab, for decode-mode tokens.
  Var decode_logits(Tape& t, const TokenBatch& tokens, Var image_feats) const;

  Var project(Tape& t, Var rows, Head head) const;
  Var itm_logits(Tape& t, Var pooled) const;
  Var temperature(Tape& t) { return t.param(*temp_); }
  Var mlc_temperature(Tape& t) { return t.param(*mlc_temp_); }

  /// Generic cross encoder used by all cross-modal stacks.
  Var cross_encode(Tape& t, const TransformerStack& stack, Var query, int batch, int q_len, const Matrix* q_valid, bool causal,
                   Var kv, int k_len, bool kv_shared, const Matrix* kv_valid, std::vector<Matrix>* capture = nullptr) const;

  const TransformerStack& image_stack() const { return image_; }
  const TransformerStack& text_stack() const { return text_; }
  const TransformerStack& graph_stack() const { return cfg_.tie_knowledge_encoders ? text_ : gk_; }
  const TransformerStack& specific_stack() const { return cfg_.tie_knowledge_encoders ? text_ : sk_; }
  const TransformerStack& match_stack() const { return match_; }
  const TransformerStack& decoder_stack() const { return decoder_; }

  /// Adds an extra cross-encoder stack (e.g. for task heads) initialized from `match`.
  TransformerStack clone_match_stack(const std::string& prefix);
  /// Binds a stack whose parameters already exist under prefix.
  TransformerStack bind_stack(const std::string& prefix, bool with_cross);

  std::mt19937_64& init_rng() { return rng_; }

 private:
  ModelConfig cfg_;
  int vocab_;
  ParamStore store_;
  std::mt19937_64 rng_;

  Parameter* tok_embed_ = nullptr;
  Parameter* pos_embed_ = nullptr;
  Parameter* structure_ = nullptr;
  LinearLayer patch_;
  Parameter* cls_ = nullptr;
  Parameter* image_pos_ = nullptr;
  TransformerStack image_, text_, gk_, sk_, gk_inject_, sk_inject_, match_, decoder_;
  LinearLayer image_proj_, text_proj_, itm_head_, lm_head_;
  Parameter* temp_ = nullptr;
  Parameter* mlc_temp_ = nullptr;
};

}  // namespace motor
