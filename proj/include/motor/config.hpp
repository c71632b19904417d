#pragma once

// Run configuration: every tunable with its default, a flat `key = value`
// file format (a subset of TOML with dotted keys) and MOTOR_* environment
// overrides.

#include "motor/model.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace motor {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;

  // Data and outputs.
  std::string data_dir = "data";
  std::string graph_path = "assets/chest_graph.tsv";
  std::string out_dir = "runs/default";
  std::uint64_t seed = 7;

  // Corpus generation.
  int corpus_records = 500;
  double corpus_train = 0.8;
  double corpus_val = 0.1;
  double corpus_test = 0.1;
  bool corpus_cooccurrence = true;

  // Pretraining.
  int steps = 2000;
  int batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 0.02;
  int lr_warmup_steps = 0;
  double grad_clip = 0.0;
  int queue_size = 256;          // M, per ITC queue
  int report_queue_size = 512;   // n_Q
  double momentum = 0.995;
  double temp_init = 0.07;
  double mlc_temp_init = 0.07;
  double lambda_itm = 1.0;
  double lambda_lm = 1.0;
  double lambda_mlc = 1.0;
  double label_smoothing = 0.1;
  /// ITC targets also credit queue entries that hold the positive's id.
  bool soft_itc_targets = false;
  bool use_knowledge = true;
  int top_k = 3;
  int triplet_cap = 32;
  bool exclude_paired = true;
  int sk_warmup_steps = 200;
  int checkpoint_every = 0;  // 0: only at the end

  // Finetuning and evaluation.
  int finetune_steps = 300;
  int finetune_batch_size = 32;
  double lr_retrieval = 5e-5;
  double lr_generation = 1e-5;
  double lr_classification = 1e-5;
  double lr_vqa = 5e-3;
  int rerank_top = 16;
  bool cls_on_knowledge = false;
  bool vqa_use_knowledge = true;
  int gen_max_len = 48;
  int beam_width = 1;

  void validate() const;
  /// Fully resolved `key = value` listing, in schema order.
  std::string to_text() const;
};

/// Known keys in schema order.
std::vector<std::string> config_keys();

/// Sets one key from its textual value; throws ConfigError on unknown keys or
/// bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines ('#' comments, optional [section] headers that
/// prefix following keys). Unknown keys are rejected.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path);

/// Applies MOTOR_<KEY> variables (dots become underscores, upper case).
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> motor_environment();

}  // namespace motor
