#include "motor/graph_knowledge.hpp"

#include "motor/text.hpp"

#include <sstream>

namespace motor {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::root: return "root";
    case NodeKind::organ: return "organ";
    case NodeKind::finding: return "finding";
  }
  return "?";
}

namespace {

NodeKind parse_kind(std::string_view s, int line_no) {
  if (s == "root") return NodeKind::root;
  if (s == "organ") return NodeKind::organ;
  if (s == "finding") return NodeKind::finding;
  throw ParseError("line " + std::to_string(line_no) + ": unknown node kind '" + std::string(s) + "'");
}

}  // namespace

Matrix build_adjacency(const std::vector<GraphNode>& nodes) {
  const auto n = static_cast<Eigen::Index>(nodes.size());
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const GraphNode& u = nodes[static_cast<std::size_t>(i)];
      const GraphNode& v = nodes[static_cast<std::size_t>(j)];
      bool edge = i == j;
      if (u.kind == NodeKind::root || v.kind == NodeKind::root) edge = true;
      if (u.kind == NodeKind::organ && v.kind == NodeKind::organ) edge = true;
      if (u.kind == NodeKind::finding && v.kind == NodeKind::finding && u.parent_organ == v.parent_organ) edge = true;
      if (u.kind == NodeKind::finding && v.kind == NodeKind::organ && u.parent_organ == v.name) edge = true;
      if (v.kind == NodeKind::finding && u.kind == NodeKind::organ && v.parent_organ == u.name) edge = true;
      a(i, j) = edge ? 1.0 : 0.0;
    }
  }
  return a;
}

KnowledgeGraph KnowledgeGraph::from_nodes(std::vector<GraphNode> nodes, std::optional<GraphSchema> schema) {
  KnowledgeGraph g;
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& n = nodes[i];
    if (n.name.empty()) throw SchemaError("node with empty name");
    if (!g.index_.emplace(n.name, static_cast<int>(i)).second) throw SchemaError("duplicate node name '" + n.name + "'");
    if (n.kind == NodeKind::finding && !n.parent_organ) throw SchemaError("finding '" + n.name + "' has no parent organ");
    if (n.kind != NodeKind::finding && n.parent_organ) throw SchemaError("node '" + n.name + "' may not have a parent");
    ++counts[static_cast<int>(n.kind)];
  }
  for (const GraphNode& n : nodes) {
    if (n.kind != NodeKind::finding) continue;
    auto it = g.index_.find(*n.parent_organ);
    if (it == g.index_.end() || nodes[static_cast<std::size_t>(it->second)].kind != NodeKind::organ) {
      throw SchemaError("finding '" + n.name + "' names missing organ '" + *n.parent_organ + "'");
    }
  }
  if (counts[0] != 1) throw SchemaError("graph must have exactly one root, found " + std::to_string(counts[0]));
  if (schema) {
    if (counts[0] != schema->roots || counts[1] != schema->organs || counts[2] != schema->findings) {
      std::ostringstream msg;
      msg << "schema expects " << schema->roots << "/" << schema->organs << "/" << schema->findings
          << " root/organ/finding nodes, found " << counts[0] << "/" << counts[1] << "/" << counts[2];
      throw SchemaError(msg.str());
    }
  }
  g.adjacency_ = build_adjacency(nodes);
  g.nodes_ = std::move(nodes);
  return g;
}

int KnowledgeGraph::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

const GraphNode& KnowledgeGraph::node(std::string_view name) const {
  const int i = index_of(name);
  if (i < 0) throw std::out_of_range("no graph node named " + std::string(name));
  return nodes_[static_cast<std::size_t>(i)];
}

std::vector<std::string> KnowledgeGraph::names_of(NodeKind kind) const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.kind == kind) out.push_back(n.name);
  return out;
}

std::string KnowledgeGraph::organ_of(std::string_view finding) const {
  const GraphNode& n = node(finding);
  return n.parent_organ.value_or("");
}

std::string KnowledgeGraph::to_tsv() const {
  std::string out;
  for (const auto& n : nodes_) {
    out += std::string(to_string(n.kind)) + "\t" + n.name + "\t" + n.parent_organ.value_or("-") + "\n";
  }
  return out;
}

KnowledgeGraph parse_graph(std::string_view text, std::optional<GraphSchema> schema) {
  std::vector<GraphNode> nodes;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    GraphNode n;
    n.kind = parse_kind(trim(fields[0]), line_no);
    n.name = to_lower(trim(fields[1]));
    if (n.name.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty node name");
    const std::string parent = to_lower(trim(fields[2]));
    if (parent != "-" && !parent.empty()) n.parent_organ = parent;
    nodes.push_back(std::move(n));
  }
  return KnowledgeGraph::from_nodes(std::move(nodes), schema);
}

KnowledgeGraph load_graph(const std::string& path, std::optional<GraphSchema> schema) {
  return parse_graph(read_file(path), schema);
}

std::vector<std::vector<int>> node_word_groups(const KnowledgeGraph& graph,
                                               const std::unordered_map<std::string, int>& word_rows) {
  std::vector<std::vector<int>> groups;
  groups.reserve(graph.nodes().size());
  for (const auto& n : graph.nodes()) {
    std::vector<int> g;
    for (const auto& w : normalize_words(n.name)) {
      auto it = word_rows.find(w);
      if (it == word_rows.end()) throw std::invalid_argument("no word embedding for '" + w + "' (node '" + n.name + "')");
      g.push_back(it->second);
    }
    if (g.empty()) throw std::invalid_argument("node '" + n.name + "' has no words");
    groups.push_back(std::move(g));
  }
  return groups;
}

Matrix embed_nodes(const KnowledgeGraph& graph, const NodeEmbeddingTables& tables) {
  if (tables.structure_table.rows() != 3) throw ShapeError("structure table must have 3 rows");
  if (tables.structure_table.cols() != tables.word_table.cols()) throw ShapeError("embedding width mismatch");
  const auto groups = node_word_groups(graph, tables.word_rows);
  Matrix out = Matrix::Zero(graph.size(), tables.word_table.cols());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int w : groups[i]) out.row(r) += tables.word_table.row(w);
    out.row(r) /= static_cast<double>(groups[i].size());
    out.row(r) += tables.structure_table.row(static_cast<int>(graph.nodes()[i].kind));
  }
  return out;
}

}  // namespace motor
