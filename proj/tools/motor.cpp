// motor: command-line driver for corpus generation, pretraining, task
// finetuning, evaluation, attention export and gradient checking.

#include "motor/downstream.hpp"
#include "motor/gradcheck.hpp"
#include "motor/text.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace motor;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// Raised for unusable inputs (missing files, bad checkpoints); maps to the config exit code.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> sets;
};

/// Defaults or checkpoint echo, then the config file, MOTOR_* variables,
/// --set pairs and finally the subcommand's own flags.
RunConfig resolve(const GlobalOptions& g, RunConfig base, const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg = std::move(base);
  if (!g.config_file.empty()) {
    if (!fs::exists(g.config_file)) throw InputError("config file not found: " + g.config_file);
    cfg = parse_config(read_file(g.config_file), cfg);
  }
  apply_env_overrides(cfg, motor_environment());
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  for (const auto& [k, v] : flags) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::string model_lines(const RunConfig& cfg) {
  std::string out;
  for (const auto& line : split(cfg.to_text(), '\n'))
    if (line.rfind("model.", 0) == 0) out += line + "\n";
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw InputError(what + " not found: " + path);
}

void require_data(const RunConfig& cfg) {
  for (const char* f : {"corpus.jsonl", "vocab.txt", "lexicon.txt", "triplets.tsv"})
    require_file((fs::path(cfg.data_dir) / f).string(), "corpus file");
  require_file(cfg.graph_path, "knowledge graph");
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_file((fs::path(cfg.out_dir) / "config.toml").string(), cfg.to_text());
}

std::shared_ptr<const Resources> load_resources(const RunConfig& cfg) {
  require_data(cfg);
  return std::make_shared<const Resources>(Resources::load(cfg));
}

/// Session from a checkpoint with the resolved overrides applied on top of its echo.
Session open_checkpoint(const GlobalOptions& g, const std::string& ckpt,
                        const std::vector<std::pair<std::string, std::string>>& flags) {
  require_file(ckpt, "checkpoint");
  const RunConfig saved = Session::read_config(ckpt);
  RunConfig cfg = resolve(g, saved, flags);
  if (model_lines(cfg) != model_lines(saved)) throw ConfigError("model.* keys cannot differ from the checkpoint");
  auto res = load_resources(cfg);
  Session s = Session::load(ckpt, res, load_corpus(cfg));
  s.mutable_config() = cfg;
  return s;
}

std::vector<std::pair<std::string, std::string>> flag_list(std::initializer_list<std::pair<std::string, std::string>> in) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& kv : in)
    if (!kv.second.empty()) out.push_back(kv);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows) out << r.dump() << "\n";
}

Split split_arg(const std::string& s) {
  try {
    return parse_split(s);
  } catch (const std::exception&) {
    throw ConfigError("unknown split '" + s + "'");
  }
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const GlobalOptions& g, const std::string& out, const std::string& seed, const std::string& records) {
  const RunConfig cfg = resolve(g, {}, flag_list({{"data.dir", out}, {"run.seed", seed}, {"corpus.records", records}}));
  GenConfig gc;
  gc.seed = cfg.seed;
  gc.n_records = cfg.corpus_records;
  gc.split_fractions = {cfg.corpus_train, cfg.corpus_val, cfg.corpus_test};
  gc.cooccurrence = cfg.corpus_cooccurrence;
  try {
    gc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto records_out = gen_corpus(gc, cfg.data_dir);
  write_file((fs::path(cfg.data_dir) / "config.toml").string(), cfg.to_text());
  std::cout << "wrote " << records_out.size() << " records to " << cfg.data_dir << "\n";
  return 0;
}

int cmd_pretrain(const GlobalOptions& g, const std::string& steps, const std::string& seed, const std::string& out,
                 const std::string& resume) {
  const auto flags = flag_list({{"pretrain.steps", steps}, {"run.seed", seed}, {"run.out_dir", out}});
  std::unique_ptr<Session> s;
  if (!resume.empty()) {
    s = std::make_unique<Session>(open_checkpoint(g, resume, flags));
  } else {
    const RunConfig cfg = resolve(g, {}, flags);
    auto res = load_resources(cfg);
    s = std::make_unique<Session>(cfg, res, load_corpus(cfg));
  }
  const RunConfig& cfg = s->config();
  echo_config(cfg);
  std::ofstream log(fs::path(cfg.out_dir) / "loss.csv");
  s->pretrain(&log);
  const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  s->save(ckpt);
  std::cout << "pretrained " << s->step() << " steps; checkpoint " << ckpt << "\n";
  return 0;
}

int cmd_finetune(const GlobalOptions& g, const std::string& task, const std::string& ckpt, const std::string& steps,
                 const std::string& out) {
  Session s = open_checkpoint(g, ckpt, flag_list({{"finetune.steps", steps}, {"run.out_dir", out}}));
  const RunConfig& cfg = s.config();
  echo_config(cfg);
  std::ofstream log(fs::path(cfg.out_dir) / ("finetune_" + task + ".csv"));
  if (task == "retrieval" || task == "generation") {
    log << kLossCsvHeader << "\n";
    const auto logs = task == "retrieval" ? finetune_retrieval(s, cfg.finetune_steps) : finetune_generation(s, cfg.finetune_steps);
    for (const auto& l : logs) log << to_csv(l) << "\n";
  } else {
    std::vector<double> losses;
    if (task == "classification") {
      losses = finetune_classification(s, cfg.finetune_steps);
    } else {
      require_file((fs::path(cfg.data_dir) / "vqa.jsonl").string(), "VQA file");
      losses = finetune_vqa(s, *load_corpus(cfg, "vqa.jsonl"), cfg.finetune_steps);
    }
    log << "step,L\n";
    for (std::size_t i = 0; i < losses.size(); ++i) log << i + 1 << "," << std::setprecision(10) << losses[i] << "\n";
  }
  s.metadata()["finetuned." + task] = "1";
  const std::string path = (fs::path(cfg.out_dir) / (task + ".bin")).string();
  s.save(path);
  std::cout << "finetuned " << task << " for " << cfg.finetune_steps << " steps; checkpoint " << path << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions& g, const std::string& task, const std::string& ckpt, const std::string& split_name,
             const std::string& out, int rerank) {
  Session s = open_checkpoint(g, ckpt, flag_list({{"run.out_dir", out}}));
  const RunConfig& cfg = s.config();
  const Split split = split_arg(split_name);
  echo_config(cfg);
  const std::string stem = (fs::path(cfg.out_dir) / (task + "_" + split_name)).string();
  json metrics;
  std::vector<json> preds;
  if (task == "retrieval") {
    if (rerank < 0) rerank = s.metadata().count("finetuned.retrieval") ? cfg.rerank_top : 0;
    const RetrievalReport r = evaluate_retrieval(s, split, rerank);
    metrics = {{"task", task}, {"split", split_name}, {"gallery", r.gallery}, {"rerank_top", rerank},
               {"RR", {{"R@1", r.i2t[0]}, {"R@5", r.i2t[1]}, {"R@10", r.i2t[2]}}},
               {"IR", {{"R@1", r.t2i[0]}, {"R@5", r.t2i[1]}, {"R@10", r.t2i[2]}}}};
    std::cout << "retrieval (" << split_name << ", gallery " << r.gallery << ")\n"
              << "       R@1     R@5     R@10\n"
              << "RR  " << fmt(r.i2t[0]) << "  " << fmt(r.i2t[1]) << "  " << fmt(r.i2t[2]) << "\n"
              << "IR  " << fmt(r.t2i[0]) << "  " << fmt(r.t2i[1]) << "  " << fmt(r.t2i[2]) << "\n";
    for (std::size_t q = 0; q < r.ids.size(); ++q) {
      auto top = [](const std::vector<std::int64_t>& v) { return std::vector<std::int64_t>(v.begin(), v.begin() + std::min<std::size_t>(10, v.size())); };
      preds.push_back({{"id", r.ids[q]}, {"RR_top10", top(r.i2t_rankings[q])}, {"IR_top10", top(r.t2i_rankings[q])}});
    }
  } else if (task == "generation") {
    const GenerationReport r = evaluate_generation(s, split);
    metrics = {{"task", task}, {"split", split_name}, {"BLEU-4", r.bleu4}, {"ROUGE-L", r.rouge_l}, {"CIDEr-D", r.cider_d},
               {"CIDEr-D_empty", r.empty_cider_d}};
    std::cout << "generation (" << split_name << ")\n"
              << "BLEU-4   " << fmt(r.bleu4) << "\nROUGE-L  " << fmt(r.rouge_l) << "\nCIDEr-D  " << fmt(r.cider_d)
              << "  (empty reports " << fmt(r.empty_cider_d) << ")\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      preds.push_back({{"id", r.ids[i]}, {"generated", r.outputs[i]}, {"reference", s.data().find(r.ids[i])->report}});
    }
  } else if (task == "classification") {
    const ClassificationReport r = evaluate_classification(s, split);
    json per_class = json::object();
    const auto& names = s.resources().labels.names;
    for (std::size_t c = 0; c < names.size(); ++c) {
      const double a = r.auroc.per_class[c];
      per_class[names[c]] = {{"AUROC", std::isnan(a) ? json(nullptr) : json(a)}, {"F1", r.f1.per_class[c]}};
    }
    metrics = {{"task", task}, {"split", split_name}, {"AUROC", r.auroc.mean}, {"AUROC_skipped_classes", r.auroc.skipped},
               {"F1_macro", r.f1.macro}, {"F1_micro", r.f1.micro}, {"F1_example", r.f1.example}, {"per_class", per_class}};
    std::cout << "classification (" << split_name << ")\n"
              << "AUROC     " << fmt(r.auroc.mean) << "  (" << r.auroc.skipped << " single-class labels skipped)\n"
              << "F1 macro  " << fmt(r.f1.macro) << "\nF1 micro  " << fmt(r.f1.micro) << "\nF1 ex.    " << fmt(r.f1.example) << "\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      std::vector<double> p(r.probabilities.row(static_cast<Eigen::Index>(i)).begin(), r.probabilities.row(static_cast<Eigen::Index>(i)).end());
      const auto& labels = s.data().find(r.ids[i])->labels;
      preds.push_back({{"id", r.ids[i]}, {"probabilities", p}, {"labels", std::vector<int>(labels.begin(), labels.end())}});
    }
  } else {
    require_file((fs::path(cfg.data_dir) / "vqa.jsonl").string(), "VQA file");
    const auto vqa = load_corpus(cfg, "vqa.jsonl");
    const VqaReport r = evaluate_vqa(s, *vqa, split);
    metrics = {{"task", task}, {"split", split_name}, {"closed_accuracy", r.closed_acc}, {"open_accuracy", r.open_acc},
               {"overall_accuracy", r.overall_acc}, {"type_accuracy", r.type_acc}, {"n_closed", r.n_closed}, {"n_open", r.n_open}};
    std::cout << "vqa (" << split_name << ")\n"
              << "closed   " << fmt(r.closed_acc) << "  (n=" << r.n_closed << ")\nopen     " << fmt(r.open_acc) << "  (n=" << r.n_open
              << ")\noverall  " << fmt(r.overall_acc) << "\ntype     " << fmt(r.type_acc) << "\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      const CorpusRecord* rec = vqa->find(r.ids[i]);
      const VqaPrediction& p = r.predictions[i];
      preds.push_back({{"id", r.ids[i]}, {"question", rec->question}, {"answer", rec->answer}, {"qtype", rec->qtype},
                       {"predicted", p.answer}, {"predicted_qtype", p.qtype}, {"p_open", p.p_open}});
    }
  }
  write_json(stem + "_metrics.json", metrics);
  write_jsonl(stem + "_predictions.jsonl", preds);
  return 0;
}

int cmd_export_attention(const GlobalOptions& g, const std::string& ckpt, const std::string& split_name, int limit,
                         const std::string& out) {
  Session s = open_checkpoint(g, ckpt, flag_list({{"run.out_dir", out}}));
  const RunConfig& cfg = s.config();
  echo_config(cfg);
  std::vector<int> idx = s.data().indices(split_arg(split_name));
  if (limit > 0 && static_cast<std::size_t>(limit) < idx.size()) idx.resize(static_cast<std::size_t>(limit));
  std::vector<std::string> nodes;
  for (const auto& n : s.resources().graph.nodes()) nodes.push_back(n.name);
  auto rows_of = [](const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
  };
  std::vector<json> rows;
  for (const AttentionMaps& m : attention_maps(s, idx)) {
    Eigen::Index best = 0;
    m.gk.row(0).maxCoeff(&best);
    std::vector<std::string> trip;
    for (const auto& t : m.triplets) trip.push_back(t.to_string());
    const CorpusRecord* rec = s.data().find(m.id);
    rows.push_back({{"id", m.id}, {"labels", std::vector<int>(rec->labels.begin(), rec->labels.end())}, {"nodes", nodes},
                    {"cls_top_node", nodes[static_cast<std::size_t>(best)]}, {"gk", rows_of(m.gk)}, {"triplets", trip},
                    {"sk_tokens", m.sk_tokens}, {"sk", rows_of(m.sk)}});
  }
  const std::string path = (fs::path(cfg.out_dir) / ("attention_" + split_name + ".jsonl")).string();
  write_jsonl(path, rows);
  std::cout << "wrote " << rows.size() << " attention records to " << path << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& dims) {
  if (dims != "tiny") throw ConfigError("only --dims tiny is available");
  const GradcheckReport r = run_gradcheck(GradcheckOptions{});
  for (std::size_t l = 0; l < r.losses.size(); ++l) {
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& e : r.entries)
      if (e.loss == r.losses[l]) {
        worst = std::max(worst, e.rel_error);
        ++n;
      }
    std::cout << std::left << std::setw(6) << r.losses[l] << " entries " << std::setw(5) << n << " params " << std::setw(4)
              << r.touched[l].size() << " max rel error " << std::scientific << std::setprecision(2) << worst << std::defaultfloat << "\n";
  }
  std::cout << (r.passed ? "PASS" : "FAIL") << " max rel error " << std::scientific << r.max_rel_error << " (tolerance "
            << GradcheckOptions{}.tolerance << ")\n";
  return r.passed ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-enhanced vision-language pretraining on a synthetic chest corpus"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_file, "key = value config file");
  app.add_option("--set", g.sets, "override one key, e.g. --set pretrain.lr=3e-4");

  std::string out, seed, records, steps, resume, ckpt, split = "test", dims = "tiny", task;
  int limit = 16, rerank = -1;
  const std::vector<std::string> tasks{"retrieval", "generation", "classification", "vqa"};

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus, VQA set and knowledge files");
  gen->add_option("--out", out, "output directory (data.dir)");
  gen->add_option("--seed", seed, "generator seed (run.seed)");
  gen->add_option("--records", records, "number of records (corpus.records)");

  auto* pre = app.add_subcommand("pretrain", "pretrain with ITC, ITM, LM and MLC");
  pre->add_option("--steps", steps, "pretrain.steps");
  pre->add_option("--seed", seed, "run.seed");
  pre->add_option("--out", out, "run.out_dir");
  pre->add_option("--resume", resume, "continue from a checkpoint");

  auto* fin = app.add_subcommand("finetune", "adapt a checkpoint to a downstream task");
  fin->add_option("task", task, "retrieval | generation | classification | vqa")->required()->check(CLI::IsMember(tasks));
  fin->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  fin->add_option("--steps", steps, "finetune.steps");
  fin->add_option("--out", out, "run.out_dir");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("task", task, "retrieval | generation | classification | vqa")->required()->check(CLI::IsMember(tasks));
  ev->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  ev->add_option("--split", split, "train | val | test");
  ev->add_option("--out", out, "run.out_dir");
  ev->add_option("--rerank", rerank, "ITM rerank depth for retrieval; default 0 before retrieval finetuning, else finetune.rerank_top");

  auto* att = app.add_subcommand("export-attention", "write image-to-knowledge attention maps as JSON lines");
  att->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  att->add_option("--split", split, "train | val | test");
  att->add_option("--limit", limit, "records to export (0 = all)");
  att->add_option("--out", out, "run.out_dir");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  gc->add_option("--dims", dims, "model size (tiny)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_corpus(g, out, seed, records);
    if (*pre) return cmd_pretrain(g, steps, seed, out, resume);
    if (*fin) return cmd_finetune(g, task, ckpt, steps, out);
    if (*ev) return cmd_eval(g, task, ckpt, split, out, rerank);
    if (*att) return cmd_export_attention(g, ckpt, split, limit, out);
    if (*gc) return cmd_gradcheck(dims);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
