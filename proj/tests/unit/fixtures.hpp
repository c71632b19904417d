#pragma once

// Shared small fixtures for the unit tests.

#include "motor/config.hpp"
#include "motor/corpus.hpp"
#include "motor/graph_knowledge.hpp"
#include "motor/injection.hpp"
#include "motor/model.hpp"
#include "motor/session.hpp"
#include "motor/tokenizer.hpp"
#include "motor/triplet_store.hpp"

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

namespace motor::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.image_size = 16;
  c.patch_size = 8;
  c.proj_dim = 6;
  c.max_text_len = 16;
  c.sk_max_len = 16;
  return c;
}

inline const Tokenizer& corpus_tokenizer() {
  static const Tokenizer tok(corpus_vocabulary(), 16);
  return tok;
}

inline const KnowledgeGraph& default_graph() {
  static const KnowledgeGraph g = parse_graph(default_graph_tsv());
  return g;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Matrix random_unit_rows(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Matrix m = random_matrix(r, c, seed);
  m.rowwise().normalize();
  return m;
}

/// Fresh empty directory under the system temp dir, private to this process.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("motor_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

/// A 60-record corpus generated once per process.
inline const std::string& small_corpus_dir() {
  static const std::string dir = [] {
    const std::string d = temp_dir("small_corpus");
    GenConfig g;
    g.n_records = 60;
    gen_corpus(g, d);
    return d;
  }();
  return dir;
}

/// Smallest session configuration that runs on the generated 64x64 images.
inline RunConfig small_run_config() {
  RunConfig c;
  c.data_dir = small_corpus_dir();
  c.graph_path = c.data_dir + "/graph.tsv";
  c.model.d_model = 8;
  c.model.n_layers = 1;
  c.model.n_heads = 2;
  c.model.ffn_mult = 2;
  c.model.patch_size = 16;
  c.model.proj_dim = 6;
  c.model.max_text_len = 64;
  c.model.sk_max_len = 24;
  c.steps = 4;
  c.batch_size = 4;
  c.queue_size = 8;
  c.report_queue_size = 8;
  c.sk_warmup_steps = 1;
  c.finetune_batch_size = 4;
  c.gen_max_len = 12;
  return c;
}

inline Session small_session(const RunConfig& c = small_run_config()) {
  return Session(c, std::make_shared<const Resources>(Resources::load(c)), load_corpus(c));
}

}  // namespace motor::testing
