#pragma once

// General knowledge: a root / organ / finding hierarchy with a binary
// visible mask over its nodes.

#include "motor/autograd.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace motor {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind { root = 0, organ = 1, finding = 2 };

std::string_view to_string(NodeKind kind);

struct GraphNode {
  std::string name;
  NodeKind kind = NodeKind::finding;
  std::optional<std::string> parent_organ;  // set iff kind == finding
};

/// Expected node counts. Default: 1 root, 7 organs, 20 findings.
struct GraphSchema {
  int roots = 1;
  int organs = 7;
  int findings = 20;
};

class KnowledgeGraph {
 public:
  /// Validates the node list and builds the adjacency. A schema of nullopt
  /// only enforces structural rules (one root, parents exist, unique names).
  static KnowledgeGraph from_nodes(std::vector<GraphNode> nodes, std::optional<GraphSchema> schema = GraphSchema{});

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const Matrix& adjacency() const { return adjacency_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int index_of(std::string_view name) const;  // -1 if absent
  const GraphNode& node(std::string_view name) const;

  std::vector<std::string> names_of(NodeKind kind) const;
  /// Parent organ of a finding node; empty for other kinds.
  std::string organ_of(std::string_view finding) const;

  /// Writes the line-oriented format accepted by parse_graph.
  std::string to_tsv() const;

 private:
  std::vector<GraphNode> nodes_;
  Matrix adjacency_;
  std::unordered_map<std::string, int> index_;
};

/// `kind<TAB>name<TAB>parent_or_dash` per line, '#' comments, blank lines ignored.
KnowledgeGraph parse_graph(std::string_view text, std::optional<GraphSchema> schema = GraphSchema{});
KnowledgeGraph load_graph(const std::string& path, std::optional<GraphSchema> schema = GraphSchema{});

/// Symmetric 0/1 matrix with unit diagonal: the root sees everything, organs
/// see each other, a finding sees its parent organ and its sibling findings.
Matrix build_adjacency(const std::vector<GraphNode>& nodes);

/// Word and structure embeddings for graph nodes. A node whose name has
/// several words is embedded with the mean of its word rows.
struct NodeEmbeddingTables {
  std::unordered_map<std::string, int> word_rows;
  Matrix word_table;       // vocabulary x d
  Matrix structure_table;  // 3 x d, indexed by NodeKind
};

/// Row groups into the word table, one group per node.
std::vector<std::vector<int>> node_word_groups(const KnowledgeGraph& graph,
                                               const std::unordered_map<std::string, int>& word_rows);

/// Row i = word embedding of node i + structure embedding of its kind.
Matrix embed_nodes(const KnowledgeGraph& graph, const NodeEmbeddingTables& tables);

}  // namespace motor
