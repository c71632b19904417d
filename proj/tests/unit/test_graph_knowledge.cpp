#include "fixtures.hpp"

#include "motor/text.hpp"

#include <gtest/gtest.h>

namespace motor {
namespace {

using testing::default_graph;
using testing::tiny_config;

TEST(GraphLoad, DefaultGraphHas28Nodes) {
  const KnowledgeGraph& g = default_graph();
  EXPECT_EQ(g.size(), 28);
  EXPECT_EQ(g.names_of(NodeKind::root), std::vector<std::string>{"normal"});
  EXPECT_EQ(g.names_of(NodeKind::organ).size(), 7u);
  EXPECT_EQ(g.names_of(NodeKind::finding).size(), 20u);
  EXPECT_EQ(g.organ_of("effusion"), "pleural");
  EXPECT_EQ(g.organ_of("cardiomegaly"), "heart");
  for (const char* f : {"pneumonia", "edema", "atelectasis", "opacity"}) EXPECT_EQ(g.organ_of(f), "lung") << f;
  EXPECT_EQ(g.organ_of("pneumothorax"), "pleural");
}

TEST(GraphLoad, MinimalGraphIsFullyConnected) {
  const KnowledgeGraph g = parse_graph("root\tnormal\t-\norgan\tlung\t-\nfinding\tedema\tlung\n", std::nullopt);
  EXPECT_EQ(g.adjacency(), Matrix::Ones(3, 3));
}

TEST(GraphLoad, ShippedAssetMatchesBuiltIn) {
  EXPECT_EQ(read_file(std::string(MOTOR_SOURCE_DIR) + "/assets/chest_graph.tsv"), default_graph_tsv());
}

TEST(GraphLoad, DanglingParentIsSchemaError) {
  EXPECT_THROW(parse_graph("root\tnormal\t-\norgan\tlung\t-\nfinding\teffusion\tpleural\n", std::nullopt), SchemaError);
}

TEST(GraphLoad, Rejections) {
  EXPECT_THROW(parse_graph("root\tnormal\n", std::nullopt), ParseError);
  EXPECT_THROW(parse_graph("bogus\tnormal\t-\n", std::nullopt), ParseError);
  EXPECT_THROW(parse_graph("root\tnormal\t-\norgan\tlung\t-\norgan\tlung\t-\n", std::nullopt), SchemaError);
  EXPECT_THROW(parse_graph("root\ta\t-\nroot\tb\t-\n", std::nullopt), SchemaError);
  // Counts must match the default schema unless it is waived.
  EXPECT_THROW(parse_graph("root\tnormal\t-\norgan\tlung\t-\nfinding\tedema\tlung\n"), SchemaError);
}

TEST(GraphLoad, CommentsAndBlankLinesIgnored) {
  const KnowledgeGraph g = parse_graph("# header\n\nroot\tnormal\t-\n  \norgan\tlung\t-\n", std::nullopt);
  EXPECT_EQ(g.size(), 2);
}

TEST(Adjacency, RuleTable) {
  const KnowledgeGraph g = parse_graph(
      "root\tr\t-\norgan\to1\t-\norgan\to2\t-\nfinding\tf1\to1\nfinding\tf2\to2\nfinding\tf3\to1\n", std::nullopt);
  const Matrix& A = g.adjacency();
  auto at = [&](const char* a, const char* b) { return A(g.index_of(a), g.index_of(b)); };
  EXPECT_EQ(at("f1", "f2"), 0.0);
  EXPECT_EQ(at("o1", "o2"), 1.0);
  EXPECT_EQ(at("f1", "o1"), 1.0);
  EXPECT_EQ(at("f1", "o2"), 0.0);
  EXPECT_EQ(at("f1", "f3"), 1.0);
  EXPECT_EQ(at("f2", "f3"), 0.0);
  // Hand-enumerated table in node order r, o1, o2, f1, f2, f3.
  Matrix expected(6, 6);
  expected << 1, 1, 1, 1, 1, 1,  //
      1, 1, 1, 1, 0, 1,          //
      1, 1, 1, 0, 1, 0,          //
      1, 1, 0, 1, 0, 1,          //
      1, 0, 1, 0, 1, 0,          //
      1, 1, 0, 1, 0, 1;
  EXPECT_EQ(A, expected);
}

TEST(Adjacency, DefaultGraphInvariants) {
  const KnowledgeGraph& g = default_graph();
  const Matrix& A = g.adjacency();
  EXPECT_EQ(A, A.transpose());
  EXPECT_EQ(A.diagonal(), Vector::Ones(28));
  EXPECT_EQ(A.row(g.index_of("normal")), Matrix::Ones(1, 28));
  for (const auto& a : g.nodes())
    for (const auto& b : g.nodes()) {
      const double e = A(g.index_of(a.name), g.index_of(b.name));
      if (a.kind == NodeKind::organ && b.kind == NodeKind::organ) {
        EXPECT_EQ(e, 1.0);
      } else if (a.kind == NodeKind::finding && b.kind == NodeKind::finding) {
        EXPECT_EQ(e, *a.parent_organ == *b.parent_organ ? 1.0 : 0.0) << a.name << " " << b.name;
      } else if (a.kind == NodeKind::finding && b.kind == NodeKind::organ) {
        EXPECT_EQ(e, *a.parent_organ == b.name ? 1.0 : 0.0);
      }
    }
}

TEST(Adjacency, SerializationRoundTripIsBitExact) {
  const KnowledgeGraph& g = default_graph();
  const KnowledgeGraph h = parse_graph(g.to_tsv());
  EXPECT_EQ(g.adjacency(), h.adjacency());
  EXPECT_EQ(build_adjacency(g.nodes()), g.adjacency());
}

class NodeEmbedding : public ::testing::Test {
 protected:
  MotorModel model{tiny_config(), testing::corpus_tokenizer().vocab_size(), 3};
  Matrix embed() {
    Tape t(false);
    return model.embed_graph_nodes(t, default_graph(), testing::corpus_tokenizer()).value();
  }
};

TEST_F(NodeEmbedding, RowIsWordPlusStructure) {
  const Matrix e = embed();
  const Matrix& words = model.params().get("embed.tok").value;
  const Matrix& structure = model.params().get("embed.structure").value;
  const Tokenizer& tok = testing::corpus_tokenizer();
  const auto& nodes = default_graph().nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Matrix expected = words.row(tok.id(nodes[i].name)) + structure.row(static_cast<int>(nodes[i].kind));
    EXPECT_TRUE(e.row(static_cast<Eigen::Index>(i)).isApprox(expected, 1e-14)) << nodes[i].name;
  }
}

TEST_F(NodeEmbedding, AdditiveInTables) {
  Parameter& w = model.params().get("embed.tok");
  Parameter& s = model.params().get("embed.structure");
  const Matrix w0 = w.value, s0 = s.value;
  const Matrix both = embed();
  s.value.setZero();
  const Matrix word_only = embed();
  w.value.setZero();
  s.value = s0;
  const Matrix structure_only = embed();
  EXPECT_TRUE((word_only + structure_only).isApprox(both, 1e-14));
  // Zero structure table gives the word rows exactly.
  w.value = w0;
  s.value.setZero();
  EXPECT_EQ(embed(), word_only);
}

TEST_F(NodeEmbedding, MissingWordIsRejected) {
  const KnowledgeGraph g = parse_graph("root\tnormal\t-\norgan\tzzzz\t-\n", std::nullopt);
  Tape t(false);
  EXPECT_THROW(model.embed_graph_nodes(t, g, testing::corpus_tokenizer()), std::invalid_argument);
}

TEST_F(NodeEmbedding, StructureTableHasThreeRows) { EXPECT_EQ(model.params().get("embed.structure").value.rows(), 3); }

// Output row i of a single-layer graph encoder must not move when input row j
// with A[i][j] = 0 is perturbed.
Matrix encode_rows(const MotorModel& m, const Matrix& x, const Matrix& adjacency) {
  Tape t(false);
  return m.encode_graph(t, t.constant(x), adjacency).value();
}

TEST(EncodeGraph, MaskLocalityOnDefaultGraph) {
  const MotorModel model(tiny_config(), testing::corpus_tokenizer().vocab_size(), 5);
  const KnowledgeGraph& g = default_graph();
  const Matrix& A = g.adjacency();
  const Matrix x = testing::random_matrix(28, 8, 9);
  const Matrix base = encode_rows(model, x, A);
  for (int j = 0; j < 28; ++j) {
    Matrix xp = x;
    // Not a constant shift: layer norm would cancel that.
    xp.row(j) += testing::random_matrix(1, 8, 100 + static_cast<std::uint64_t>(j));
    const Matrix out = encode_rows(model, xp, A);
    for (int i = 0; i < 28; ++i) {
      const double diff = (out.row(i) - base.row(i)).cwiseAbs().maxCoeff();
      if (A(i, j) == 0.0) {
        EXPECT_LE(diff, 1e-9) << i << " " << j;
      }
      if (i == j) {
        EXPECT_GT(diff, 1e-6);
      }
    }
  }
}

TEST(EncodeGraph, AllOnesMaskEqualsUnmasked) {
  const MotorModel model(tiny_config(), testing::corpus_tokenizer().vocab_size(), 5);
  const Matrix x = testing::random_matrix(5, 8, 2);
  const Matrix ones = Matrix::Ones(5, 5);
  Tape t(false);
  AttentionLayout layout{1, 5, 5};
  const Matrix unmasked = model.graph_stack().forward(t, t.constant(x), layout).value();
  EXPECT_EQ(encode_rows(model, x, ones), unmasked);
}

TEST(EncodeGraph, IdentityMaskIsPerRow) {
  const MotorModel model(tiny_config(), testing::corpus_tokenizer().vocab_size(), 5);
  const Matrix x = testing::random_matrix(4, 8, 2);
  const Matrix eye = Matrix::Identity(4, 4);
  const Matrix base = encode_rows(model, x, eye);
  Matrix xp = x;
  xp.row(2) *= -3.0;
  const Matrix out = encode_rows(model, xp, eye);
  for (int i = 0; i < 4; ++i) {
    if (i == 2) EXPECT_FALSE(out.row(i).isApprox(base.row(i)));
    else EXPECT_EQ(out.row(i), base.row(i));
  }
}

TEST(EncodeGraph, DimensionMismatch) {
  const MotorModel model(tiny_config(), testing::corpus_tokenizer().vocab_size(), 5);
  Tape t(false);
  EXPECT_THROW(model.encode_graph(t, t.constant(Matrix::Zero(4, 8)), Matrix::Ones(3, 3)), ShapeError);
}

}  // namespace
}  // namespace motor
