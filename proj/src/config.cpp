#include "motor/config.hpp"

#include "motor/text.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <sstream>

extern char** environ;

namespace motor {
namespace {

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string unquote(const std::string& key, const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'')) {
    if (v.back() != v.front()) throw ConfigError(key + ": unterminated string");
    return v.substr(1, v.size() - 2);
  }
  return v;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  std::string s = v;
  std::erase(s, '_');  // TOML digit separators
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <typename T>
Field num(std::string key, T RunConfig::*m) {
  return {key, [m, key](RunConfig& c, const std::string& v) { c.*m = parse_number<T>(key, v); },
          [m](const RunConfig& c) {
            std::ostringstream o;
            o << std::setprecision(17) << c.*m;
            return o.str();
          }};
}

template <typename T>
Field model_num(std::string key, T ModelConfig::*m) {
  return {key, [m, key](RunConfig& c, const std::string& v) { c.model.*m = parse_number<T>(key, v); },
          [m](const RunConfig& c) { return std::to_string(c.model.*m); }};
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

Field flag(std::string key, bool RunConfig::*m) {
  return {key, [m, key](RunConfig& c, const std::string& v) { c.*m = parse_bool(key, v); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field model_flag(std::string key, bool ModelConfig::*m) {
  return {key, [m, key](RunConfig& c, const std::string& v) { c.model.*m = parse_bool(key, v); },
          [m](const RunConfig& c) { return std::string(c.model.*m ? "true" : "false"); }};
}

Field str(std::string key, std::string RunConfig::*m) {
  return {key, [m, key](RunConfig& c, const std::string& v) { c.*m = unquote(key, v); },
          [m](const RunConfig& c) { return "\"" + c.*m + "\""; }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      model_num("model.d_model", &ModelConfig::d_model),
      model_num("model.n_layers", &ModelConfig::n_layers),
      model_num("model.n_heads", &ModelConfig::n_heads),
      model_num("model.ffn_mult", &ModelConfig::ffn_mult),
      model_num("model.patch_size", &ModelConfig::patch_size),
      model_num("model.image_size", &ModelConfig::image_size),
      model_num("model.channels", &ModelConfig::channels),
      model_num("model.proj_dim", &ModelConfig::proj_dim),
      model_num("model.max_text_len", &ModelConfig::max_text_len),
      model_num("model.sk_max_len", &ModelConfig::sk_max_len),
      model_flag("model.tie_knowledge_encoders", &ModelConfig::tie_knowledge_encoders),
      model_flag("model.projection_bias", &ModelConfig::projection_bias),
      str("data.dir", &RunConfig::data_dir),
      str("data.graph", &RunConfig::graph_path),
      str("run.out_dir", &RunConfig::out_dir),
      num("run.seed", &RunConfig::seed),
      num("corpus.records", &RunConfig::corpus_records),
      num("corpus.train", &RunConfig::corpus_train),
      num("corpus.val", &RunConfig::corpus_val),
      num("corpus.test", &RunConfig::corpus_test),
      flag("corpus.cooccurrence", &RunConfig::corpus_cooccurrence),
      num("pretrain.steps", &RunConfig::steps),
      num("pretrain.batch_size", &RunConfig::batch_size),
      num("pretrain.lr", &RunConfig::lr),
      num("pretrain.weight_decay", &RunConfig::weight_decay),
      num("pretrain.lr_warmup_steps", &RunConfig::lr_warmup_steps),
      num("pretrain.grad_clip", &RunConfig::grad_clip),
      num("pretrain.queue_size", &RunConfig::queue_size),
      num("pretrain.report_queue_size", &RunConfig::report_queue_size),
      num("pretrain.momentum", &RunConfig::momentum),
      num("pretrain.temp_init", &RunConfig::temp_init),
      num("pretrain.mlc_temp_init", &RunConfig::mlc_temp_init),
      num("pretrain.lambda_itm", &RunConfig::lambda_itm),
      num("pretrain.lambda_lm", &RunConfig::lambda_lm),
      num("pretrain.lambda_mlc", &RunConfig::lambda_mlc),
      num("pretrain.label_smoothing", &RunConfig::label_smoothing),
      flag("pretrain.soft_itc_targets", &RunConfig::soft_itc_targets),
      flag("pretrain.use_knowledge", &RunConfig::use_knowledge),
      num("pretrain.top_k", &RunConfig::top_k),
      num("pretrain.triplet_cap", &RunConfig::triplet_cap),
      flag("pretrain.exclude_paired", &RunConfig::exclude_paired),
      num("pretrain.sk_warmup_steps", &RunConfig::sk_warmup_steps),
      num("pretrain.checkpoint_every", &RunConfig::checkpoint_every),
      num("finetune.steps", &RunConfig::finetune_steps),
      num("finetune.batch_size", &RunConfig::finetune_batch_size),
      num("finetune.lr_retrieval", &RunConfig::lr_retrieval),
      num("finetune.lr_generation", &RunConfig::lr_generation),
      num("finetune.lr_classification", &RunConfig::lr_classification),
      num("finetune.lr_vqa", &RunConfig::lr_vqa),
      num("finetune.rerank_top", &RunConfig::rerank_top),
      flag("finetune.cls_on_knowledge", &RunConfig::cls_on_knowledge),
      flag("finetune.vqa_use_knowledge", &RunConfig::vqa_use_knowledge),
      num("finetune.gen_max_len", &RunConfig::gen_max_len),
      num("finetune.beam_width", &RunConfig::beam_width),
  };
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : schema())
    if (f.key == key) return &f;
  return nullptr;
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str) {
      if (c == quote) in_str = false;
    } else if (c == '"' || c == '\'') {
      in_str = true;
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.key);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown configuration key '" + key + "'");
  f->set(cfg, trim(value));
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(corpus_records >= 10, "corpus.records must be at least 10");
  need(corpus_train >= 0 && corpus_val >= 0 && corpus_test >= 0 && std::abs(corpus_train + corpus_val + corpus_test - 1.0) < 1e-9,
       "corpus split fractions must be nonnegative and sum to 1");
  need(steps >= 0, "pretrain.steps must be nonnegative");
  need(batch_size >= 2, "pretrain.batch_size must be at least 2");
  need(lr > 0 && std::isfinite(lr), "pretrain.lr must be positive");
  need(weight_decay >= 0, "pretrain.weight_decay must be nonnegative");
  need(lr_warmup_steps >= 0, "pretrain.lr_warmup_steps must be nonnegative");
  need(grad_clip >= 0, "pretrain.grad_clip must be nonnegative");
  need(queue_size >= batch_size, "pretrain.queue_size must be at least the batch size");
  need(report_queue_size >= batch_size, "pretrain.report_queue_size must be at least the batch size");
  need(momentum >= 0 && momentum < 1, "pretrain.momentum must lie in [0, 1)");
  need(temp_init >= 0.001 && temp_init <= 0.5, "pretrain.temp_init must lie in [0.001, 0.5]");
  need(mlc_temp_init > 0, "pretrain.mlc_temp_init must be positive");
  for (double l : {lambda_itm, lambda_lm, lambda_mlc}) need(l >= 0 && std::isfinite(l), "loss weights must be nonnegative");
  need(label_smoothing >= 0 && label_smoothing < 1, "pretrain.label_smoothing must lie in [0, 1)");
  need(top_k >= 1, "pretrain.top_k must be positive");
  need(triplet_cap >= 0, "pretrain.triplet_cap must be nonnegative");
  need(sk_warmup_steps >= 0, "pretrain.sk_warmup_steps must be nonnegative");
  need(checkpoint_every >= 0, "pretrain.checkpoint_every must be nonnegative");
  need(finetune_steps >= 0, "finetune.steps must be nonnegative");
  need(finetune_batch_size >= 2, "finetune.batch_size must be at least 2");
  for (double l : {lr_retrieval, lr_generation, lr_classification, lr_vqa}) need(l > 0, "finetune learning rates must be positive");
  need(rerank_top >= 0, "finetune.rerank_top must be nonnegative");
  need(gen_max_len >= 1 && gen_max_len < model.max_text_len, "finetune.gen_max_len must lie in [1, model.max_text_len)");
  need(beam_width >= 1, "finetune.beam_width must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : schema()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set_config_value(base, key, s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  std::map<std::string, std::string> by_env;
  for (const auto& key : config_keys()) {
    std::string name = "MOTOR_";
    for (char c : key) name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    by_env.emplace(name, key);
  }
  for (const auto& [name, value] : env) {
    if (!name.starts_with("MOTOR_")) continue;
    auto it = by_env.find(name);
    if (it == by_env.end()) throw ConfigError("unknown configuration variable " + name);
    set_config_value(cfg, it->second, value);
  }
}

std::map<std::string, std::string> motor_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    if (!kv.starts_with("MOTOR_")) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return out;
}

}  // namespace motor
