#pragma once

// Deterministic synthetic chest corpus: procedurally rendered 64x64 grayscale
// images, templated reports, 14-dim labels, a matching triplet store, entity
// lexicon and vocabulary, plus derived VQA records.
//
// The images are drawings, not samples of any clinical distribution.

#include "motor/autograd.hpp"
#include "motor/graph_knowledge.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace motor {

inline constexpr int kNumLabels = 14;
using LabelVector = std::array<int, kNumLabels>;

enum class Split { train, val, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

/// Contents of the shipped default graph (assets/chest_graph.tsv).
std::string_view default_graph_tsv();

/// Index into the 14-label list for a finding, or -1 when the finding has no label.
int label_index_of_finding(std::string_view finding);

struct FindingInstance {
  std::string name;
  std::string organ;
  std::string side;  // "left", "right" or "" for central organs
  int severity = 0;  // 0 mild, 1 moderate, 2 severe
};

struct SyntheticScene {
  std::vector<std::string> organs;
  std::vector<FindingInstance> findings;  // at most 3, parents present
};

struct CorpusRecord {
  std::int64_t id = 0;
  std::string image_path;  // relative to the corpus directory
  std::string report;
  LabelVector labels{};
  Split split = Split::train;
  // VQA variant only.
  std::optional<std::int64_t> source_id;
  std::string question;
  std::string answer;
  std::string qtype;  // "closed" or "open"
};

struct GenConfig {
  std::uint64_t seed = 7;
  int n_records = 500;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  /// Co-finding rules; reflected only in the triplet store, never in templates.
  bool cooccurrence = true;
  double cooccurrence_prob = 0.8;
  double p_normal = 0.1;
  double noise = 0.05;
  void validate() const;
};

struct SceneRenderer {
  static constexpr int kSize = 64;
  static constexpr int kCell = 8;
  /// Pixel values in [0, 1], row-major, before quantization.
  static Matrix render(const SyntheticScene& scene, std::uint64_t noise_seed, double noise);
  /// Top-left pixel of the glyph cell for a finding on a side.
  static std::pair<int, int> cell_of(std::string_view finding, std::string_view side);
};

SyntheticScene sample_scene(const GenConfig& cfg, std::uint64_t record_seed);
std::string write_report(const SyntheticScene& scene, std::uint64_t record_seed);
LabelVector labels_of(const SyntheticScene& scene);

/// Writes corpus.jsonl, vqa.jsonl, images/*.pgm, graph.tsv, triplets.tsv,
/// lexicon.txt and vocab.txt into out_dir. Returns the corpus records.
std::vector<CorpusRecord> gen_corpus(const GenConfig& cfg, const std::string& out_dir);

/// VQA records derived from corpus records: closed questions about every
/// present finding and equally many absent ones, plus one open question when
/// the answer is unambiguous.
std::vector<CorpusRecord> gen_vqa(const std::vector<CorpusRecord>& corpus, const std::vector<SyntheticScene>& scenes,
                                  std::uint64_t seed);

/// Every word the generator can emit, sorted.
std::vector<std::string> corpus_vocabulary();
/// Triplet store text mirroring the generator's rules.
std::string corpus_triplets_tsv(bool cooccurrence);
std::string corpus_lexicon_txt();

// Portable graymap (binary P5, maxval 255).
void write_pgm(const std::string& path, const Matrix& pixels);
Matrix read_pgm(const std::string& path);

std::string record_to_json(const CorpusRecord& r);
CorpusRecord record_from_json(const std::string& line);

/// Records plus their decoded images (one row per record, values in [0, 1]).
struct Dataset {
  std::string dir;
  std::vector<CorpusRecord> records;
  Matrix images;
  std::unordered_map<std::int64_t, int> by_id;

  std::vector<int> indices(Split split) const;
  Matrix image_rows(const std::vector<int>& idx) const;
  const CorpusRecord* find(std::int64_t id) const;
};

Dataset load_dataset(const std::string& jsonl_path);

}  // namespace motor
