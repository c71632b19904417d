#include "motor/corpus.hpp"

#include "motor/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace motor {
namespace {

constexpr std::string_view kGraph =
    "# kind\tname\tparent organ\n"
    "# Organ and finding lists are editable configuration.\n"
    "# Placeholder names (synthetic-corpus choices, not a clinical ontology): organs "
    "mediastinum, diaphragm; findings nodule, mass, emphysema, fibrosis, "
    "thickening, calcification, consolidation, infiltration, fracture, scoliosis, widening, lymphadenopathy, hernia.\n"
    "root\tnormal\t-\n"
    "organ\tlung\t-\n"
    "organ\theart\t-\n"
    "organ\tpleural\t-\n"
    "organ\tairspace\t-\n"
    "organ\tbone\t-\n"
    "organ\tmediastinum\t-\n"
    "organ\tdiaphragm\t-\n"
    "finding\tpneumonia\tlung\n"
    "finding\tedema\tlung\n"
    "finding\tatelectasis\tlung\n"
    "finding\topacity\tlung\n"
    "finding\tnodule\tlung\n"
    "finding\tmass\tlung\n"
    "finding\temphysema\tlung\n"
    "finding\tfibrosis\tlung\n"
    "finding\teffusion\tpleural\n"
    "finding\tpneumothorax\tpleural\n"
    "finding\tthickening\tpleural\n"
    "finding\tcardiomegaly\theart\n"
    "finding\tcalcification\theart\n"
    "finding\tconsolidation\tairspace\n"
    "finding\tinfiltration\tairspace\n"
    "finding\tfracture\tbone\n"
    "finding\tscoliosis\tbone\n"
    "finding\twidening\tmediastinum\n"
    "finding\tlymphadenopathy\tmediastinum\n"
    "finding\thernia\tdiaphragm\n";

const std::vector<std::string> kLabelNames = {"atelectasis", "cardiomegaly", "effusion", "infiltration", "mass",
                                              "nodule",      "pneumonia",    "pneumothorax", "consolidation", "edema",
                                              "emphysema",   "fibrosis",     "pleural thickening", "hernia"};

// primary -> co-finding
const std::vector<std::pair<std::string, std::string>> kCoRules = {{"effusion", "atelectasis"},
                                                                   {"consolidation", "pneumothorax"},
                                                                   {"edema", "cardiomegaly"},
                                                                   {"mass", "nodule"},
                                                                   {"emphysema", "fibrosis"}};

const std::vector<std::string> kSeverity = {"mild", "moderate", "severe"};
const double kAmplitude[3] = {0.3, 0.5, 0.75};

const std::vector<std::string> kTemplates = {
    "there is {sev} {side} {name} .",
    "{sev} {name} is noted in the {side} {organ} .",
    "the {side} {organ} demonstrates {sev} {name} .",
    "findings suggest {sev} {side} {name} .",
    "{side} {organ} {name} appears {sev} .",
};

const std::vector<std::string> kDistractors = {
    "the trachea is midline .",
    "no acute cardiopulmonary process .",
    "the osseous structures are unremarkable .",
    "lungs are well expanded .",
    "support devices are absent .",
    "the costophrenic angles are sharp .",
    "soft tissues are unremarkable .",
    "comparison is made to prior study .",
    "the patient is rotated slightly .",
    "the hila are unremarkable .",
    "the aortic knob is within limits .",
    "no interval change is seen .",
    "the exam is adequate .",
    "cardiomediastinal silhouette is stable .",
    "no free air is present .",
    "visualized upper abdomen is unremarkable .",
};

const std::vector<std::string> kRelations = {"located at", "suggestive of"};

const KnowledgeGraph& default_graph() {
  static const KnowledgeGraph g = parse_graph(kGraph);
  return g;
}

bool is_central(std::string_view organ) { return organ == "heart" || organ == "mediastinum"; }

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t id, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(id),
                    static_cast<std::uint32_t>(id >> 32), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kScene = 1, kReport = 2, kNoise = 3, kSplit = 4, kVqa = 5, kGlyph = 6 };

// Glyph slots: every (finding, side) pair owns one 8x8 cell, grouped by organ.
struct Slots {
  std::map<std::pair<std::string, std::string>, int> index;
  std::map<std::string, std::vector<int>> organ_cells;
};

const Slots& slots() {
  static const Slots s = [] {
    Slots out;
    const auto& g = default_graph();
    int next = 0;
    for (const auto& organ : g.names_of(NodeKind::organ)) {
      for (const auto& f : g.names_of(NodeKind::finding)) {
        if (g.organ_of(f) != organ) continue;
        const std::vector<std::string> sides = is_central(organ) ? std::vector<std::string>{""} : std::vector<std::string>{"left", "right"};
        for (const auto& side : sides) {
          out.index[{f, side}] = next;
          out.organ_cells[organ].push_back(next);
          ++next;
        }
      }
    }
    return out;
  }();
  return s;
}

// Fixed binary texture per finding.
const Matrix& glyph(std::string_view finding) {
  static const std::map<std::string, Matrix> glyphs = [] {
    std::map<std::string, Matrix> out;
    const auto names = default_graph().names_of(NodeKind::finding);
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto rng = stream_rng(0x5eed, i, kGlyph);
      std::bernoulli_distribution coin(0.5);
      Matrix m;
      do {
        m = Matrix::NullaryExpr(SceneRenderer::kCell, SceneRenderer::kCell, [&] { return coin(rng) ? 1.0 : 0.0; });
      } while (m.sum() < 20 || m.sum() > 44);
      out.emplace(names[i], std::move(m));
    }
    return out;
  }();
  return glyphs.at(std::string(finding));
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
  return s;
}

std::string squeeze_spaces(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + std::string(s) + "'");
}

std::string_view default_graph_tsv() { return kGraph; }

int label_index_of_finding(std::string_view finding) {
  const std::string name = finding == "thickening" ? "pleural thickening" : std::string(finding);
  for (std::size_t i = 0; i < kLabelNames.size(); ++i)
    if (kLabelNames[i] == name) return static_cast<int>(i);
  return -1;
}

void GenConfig::validate() const {
  if (n_records < 1) throw std::invalid_argument("n_records must be positive");
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  if (cooccurrence_prob < 0.0 || cooccurrence_prob > 1.0) throw std::invalid_argument("cooccurrence_prob must lie in [0, 1]");
  if (p_normal < 0.0 || p_normal > 1.0) throw std::invalid_argument("p_normal must lie in [0, 1]");
  if (noise < 0.0) throw std::invalid_argument("noise must be nonnegative");
}

std::pair<int, int> SceneRenderer::cell_of(std::string_view finding, std::string_view side) {
  const auto& idx = slots().index;
  auto it = idx.find({std::string(finding), std::string(side)});
  if (it == idx.end()) throw std::invalid_argument("no glyph cell for finding '" + std::string(finding) + "'");
  const int per_row = kSize / kCell;
  return {(it->second / per_row) * kCell, (it->second % per_row) * kCell};
}

Matrix SceneRenderer::render(const SyntheticScene& scene, std::uint64_t noise_seed, double noise) {
  Matrix img = Matrix::Constant(kSize, kSize, 0.08);
  const int per_row = kSize / kCell;
  for (const auto& organ : scene.organs) {
    auto it = slots().organ_cells.find(organ);
    if (it == slots().organ_cells.end()) continue;
    for (int cell : it->second) img.block((cell / per_row) * kCell, (cell % per_row) * kCell, kCell, kCell).array() += 0.07;
  }
  for (const auto& f : scene.findings) {
    const auto [r, c] = cell_of(f.name, f.side);
    img.block(r, c, kCell, kCell) += kAmplitude[f.severity] * glyph(f.name);
  }
  if (noise > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> n(0.0, noise);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += n(rng);
  }
  return img.cwiseMax(0.0).cwiseMin(1.0);
}

SyntheticScene sample_scene(const GenConfig& cfg, std::uint64_t record_seed) {
  const auto& g = default_graph();
  std::mt19937_64 rng(record_seed);
  SyntheticScene s;
  s.organs = g.names_of(NodeKind::organ);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < cfg.p_normal) return s;
  const auto findings = g.names_of(NodeKind::finding);
  std::discrete_distribution<int> count_dist({0.5, 0.3, 0.2});
  const int n_primary = count_dist(rng) + 1;
  std::vector<std::string> chosen;
  std::vector<std::string> pool = findings;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (int i = 0; i < n_primary; ++i) chosen.push_back(pool[static_cast<std::size_t>(i)]);
  if (cfg.cooccurrence) {
    const std::vector<std::string> primaries = chosen;
    for (const auto& p : primaries) {
      for (const auto& [a, b] : kCoRules) {
        if (a != p || chosen.size() >= 3) continue;
        const bool fire = u(rng) < cfg.cooccurrence_prob;
        if (fire && std::find(chosen.begin(), chosen.end(), b) == chosen.end()) chosen.push_back(b);
      }
    }
  }
  std::uniform_int_distribution<int> sev(0, 2);
  std::bernoulli_distribution left(0.5);
  for (const auto& name : chosen) {
    FindingInstance f;
    f.name = name;
    f.organ = g.organ_of(name);
    f.side = is_central(f.organ) ? "" : (left(rng) ? "left" : "right");
    f.severity = sev(rng);
    s.findings.push_back(std::move(f));
  }
  return s;
}

std::string write_report(const SyntheticScene& scene, std::uint64_t record_seed) {
  std::mt19937_64 rng(record_seed);
  std::vector<std::string> sentences;
  std::uniform_int_distribution<std::size_t> pick(0, kTemplates.size() - 1);
  for (const auto& f : scene.findings) {
    std::string s = kTemplates[pick(rng)];
    s = replace_all(s, "{sev}", kSeverity[static_cast<std::size_t>(f.severity)]);
    s = replace_all(s, "{side}", f.side);
    s = replace_all(s, "{name}", f.name);
    s = replace_all(s, "{organ}", f.organ);
    sentences.push_back(squeeze_spaces(s));
  }
  // At least 60% of the sentences are distractors; 3 to 8 sentences overall.
  const int n = static_cast<int>(scene.findings.size());
  const int lo = std::max(3, static_cast<int>(std::ceil(n / 0.4 - 1e-9)));
  std::uniform_int_distribution<int> total(lo, 8);
  const int n_distract = total(rng) - n;
  std::vector<std::string> pool = kDistractors;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (int i = 0; i < n_distract; ++i) sentences.push_back(pool[static_cast<std::size_t>(i)]);
  std::shuffle(sentences.begin(), sentences.end(), rng);
  return join_words(sentences);
}

LabelVector labels_of(const SyntheticScene& scene) {
  LabelVector y{};
  for (const auto& f : scene.findings) {
    const int i = label_index_of_finding(f.name);
    if (i >= 0) y[static_cast<std::size_t>(i)] = 1;
  }
  return y;
}

std::vector<std::string> corpus_vocabulary() {
  std::set<std::string> words;
  auto add = [&](std::string_view text) {
    for (auto& w : normalize_words(text)) words.insert(std::move(w));
  };
  for (const auto& t : kTemplates) add(replace_all(replace_all(replace_all(replace_all(t, "{sev}", ""), "{side}", ""), "{name}", ""), "{organ}", ""));
  for (const auto& d : kDistractors) add(d);
  for (const auto& s : kSeverity) add(s);
  add("left right yes no");
  for (const auto& n : default_graph().nodes()) add(n.name);
  for (const auto& l : kLabelNames) add(l);
  for (const auto& r : kRelations) add(r);
  add("is there which organ is abnormal what finding is present");
  return {words.begin(), words.end()};
}

std::string corpus_triplets_tsv(bool cooccurrence) {
  std::ostringstream out;
  const auto& g = default_graph();
  for (const auto& f : g.names_of(NodeKind::finding)) out << f << "\tlocated at\t" << g.organ_of(f) << "\n";
  if (cooccurrence)
    for (const auto& [a, b] : kCoRules) out << a << "\tsuggestive of\t" << b << "\n";
  return out.str();
}

std::string corpus_lexicon_txt() {
  std::string out;
  for (const auto& f : default_graph().names_of(NodeKind::finding)) out += f + "\n";
  return out;
}

void write_pgm(const std::string& path, const Matrix& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << pixels.cols() << " " << pixels.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const double v = std::clamp(pixels(r, c), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

Matrix read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  auto token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (token() != "P5") throw ParseError(path + ": not a binary graymap");
  const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw ParseError(path + ": unsupported graymap header");
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) throw ParseError(path + ": truncated");
  Matrix m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i] / static_cast<double>(maxval);
  return m;
}

std::string record_to_json(const CorpusRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["image_path"] = r.image_path;
  j["report"] = r.report;
  j["labels"] = r.labels;
  j["split"] = std::string(to_string(r.split));
  if (r.source_id) j["source_id"] = *r.source_id;
  if (!r.qtype.empty()) {
    j["question"] = r.question;
    j["answer"] = r.answer;
    j["qtype"] = r.qtype;
  }
  return j.dump();
}

CorpusRecord record_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed corpus record: ") + e.what());
  }
  try {
    CorpusRecord r;
    r.id = j.at("id").get<std::int64_t>();
    r.image_path = j.at("image_path").get<std::string>();
    r.report = j.at("report").get<std::string>();
    const auto labels = j.at("labels").get<std::vector<int>>();
    if (labels.size() != kNumLabels) throw ParseError("corpus record " + std::to_string(r.id) + ": expected 14 labels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 0 && labels[i] != 1) throw ParseError("corpus record " + std::to_string(r.id) + ": labels must be 0/1");
      r.labels[i] = labels[i];
    }
    r.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("source_id")) r.source_id = j["source_id"].get<std::int64_t>();
    if (j.contains("qtype")) {
      r.question = j.at("question").get<std::string>();
      r.answer = j.at("answer").get<std::string>();
      r.qtype = j.at("qtype").get<std::string>();
      if (r.qtype != "open" && r.qtype != "closed") throw ParseError("qtype must be open or closed");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corpus record field error: ") + e.what());
  }
}

std::vector<CorpusRecord> gen_vqa(const std::vector<CorpusRecord>& corpus, const std::vector<SyntheticScene>& scenes,
                                  std::uint64_t seed) {
  if (corpus.size() != scenes.size()) throw std::invalid_argument("gen_vqa: one scene per record required");
  const auto findings = default_graph().names_of(NodeKind::finding);
  std::vector<CorpusRecord> out;
  std::int64_t next_id = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CorpusRecord& src = corpus[i];
    const SyntheticScene& scene = scenes[i];
    auto rng = stream_rng(seed, static_cast<std::uint64_t>(src.id), kVqa);
    auto base = [&] {
      CorpusRecord r = src;
      r.id = next_id++;
      r.source_id = src.id;
      return r;
    };
    std::set<std::string> present;
    for (const auto& f : scene.findings) present.insert(f.name);
    // One "yes" per present finding and as many "no" questions about absent
    // ones (at least one), so the closed answers stay balanced.
    std::vector<std::string> absent;
    for (const auto& f : findings)
      if (!present.count(f)) absent.push_back(f);
    std::shuffle(absent.begin(), absent.end(), rng);
    const std::size_t n_no = std::min(absent.size(), std::max<std::size_t>(1, present.size()));
    auto closed = [&](const std::string& target, const char* answer) {
      CorpusRecord q = base();
      q.question = "is there " + target + " ?";
      q.answer = answer;
      q.qtype = "closed";
      out.push_back(std::move(q));
    };
    for (const auto& f : present) closed(f, "yes");
    for (std::size_t k = 0; k < n_no; ++k) closed(absent[k], "no");
    if (!scene.findings.empty()) {
      std::set<std::string> organs;
      for (const auto& f : scene.findings) organs.insert(f.organ);
      const bool single = scene.findings.size() == 1;
      std::bernoulli_distribution coin(0.5);
      const bool ask_finding = single && coin(rng);
      if (ask_finding) {
        CorpusRecord q = base();
        q.question = "what finding is present ?";
        q.answer = scene.findings.front().name;
        q.qtype = "open";
        out.push_back(std::move(q));
      } else if (organs.size() == 1) {
        CorpusRecord q = base();
        q.question = "which organ is abnormal ?";
        q.answer = *organs.begin();
        q.qtype = "open";
        out.push_back(std::move(q));
      }
    }
  }
  return out;
}

std::vector<CorpusRecord> gen_corpus(const GenConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  const int n = cfg.n_records;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  auto split_rng = stream_rng(cfg.seed, 0, kSplit);
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_train = static_cast<int>(std::lround(cfg.split_fractions[0] * n));
  const int n_val = std::min(n - n_train, static_cast<int>(std::lround(cfg.split_fractions[1] * n)));
  std::vector<Split> split_of(static_cast<std::size_t>(n), Split::test);
  for (int i = 0; i < n; ++i) {
    const int r = order[static_cast<std::size_t>(i)];
    split_of[static_cast<std::size_t>(r)] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }

  std::vector<CorpusRecord> records;
  std::vector<SyntheticScene> scenes;
  for (int i = 0; i < n; ++i) {
    const auto id = static_cast<std::uint64_t>(i);
    SyntheticScene scene = sample_scene(cfg, stream_rng(cfg.seed, id, kScene)());
    CorpusRecord r;
    r.id = i;
    char name[32];
    std::snprintf(name, sizeof name, "images/%06d.pgm", i);
    r.image_path = name;
    r.report = write_report(scene, stream_rng(cfg.seed, id, kReport)());
    r.labels = labels_of(scene);
    r.split = split_of[static_cast<std::size_t>(i)];
    write_pgm((fs::path(out_dir) / r.image_path).string(), SceneRenderer::render(scene, stream_rng(cfg.seed, id, kNoise)(), cfg.noise));
    records.push_back(std::move(r));
    scenes.push_back(std::move(scene));
  }

  std::string lines;
  for (const auto& r : records) lines += record_to_json(r) + "\n";
  write_file((fs::path(out_dir) / "corpus.jsonl").string(), lines);
  lines.clear();
  for (const auto& r : gen_vqa(records, scenes, cfg.seed)) lines += record_to_json(r) + "\n";
  write_file((fs::path(out_dir) / "vqa.jsonl").string(), lines);

  write_file((fs::path(out_dir) / "graph.tsv").string(), kGraph);
  write_file((fs::path(out_dir) / "triplets.tsv").string(), corpus_triplets_tsv(cfg.cooccurrence));
  write_file((fs::path(out_dir) / "lexicon.txt").string(), corpus_lexicon_txt());
  std::string vocab;
  for (const auto& w : corpus_vocabulary()) vocab += w + "\n";
  write_file((fs::path(out_dir) / "vocab.txt").string(), vocab);
  return records;
}

std::vector<int> Dataset::indices(Split split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

Matrix Dataset::image_rows(const std::vector<int>& idx) const {
  Matrix out(static_cast<Eigen::Index>(idx.size()), images.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = images.row(idx[i]);
  return out;
}

const CorpusRecord* Dataset::find(std::int64_t id) const {
  auto it = by_id.find(id);
  return it == by_id.end() ? nullptr : &records[static_cast<std::size_t>(it->second)];
}

Dataset load_dataset(const std::string& jsonl_path) {
  namespace fs = std::filesystem;
  Dataset d;
  d.dir = fs::path(jsonl_path).parent_path().string();
  std::istringstream in(read_file(jsonl_path));
  std::string line;
  std::vector<Matrix> imgs;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    CorpusRecord r = record_from_json(line);
    if (!d.by_id.emplace(r.id, static_cast<int>(d.records.size())).second) {
      throw ParseError("duplicate corpus id " + std::to_string(r.id));
    }
    imgs.push_back(read_pgm((fs::path(d.dir) / r.image_path).string()));
    d.records.push_back(std::move(r));
  }
  if (d.records.empty()) throw ParseError(jsonl_path + ": no records");
  const Eigen::Index px = imgs.front().size();
  d.images.resize(static_cast<Eigen::Index>(imgs.size()), px);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].size() != px) throw ShapeError("corpus images differ in size");
    d.images.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(imgs[i].data(), px);
  }
  return d;
}

}  // namespace motor
