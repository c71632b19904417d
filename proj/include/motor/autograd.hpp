#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Parameters are leaf
// nodes that alias a Parameter's storage; backward() accumulates into
// Parameter::grad. Everything runs in double precision so that the same
// graph can be checked against central finite differences.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace motor {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or infinity showed up where training cannot continue.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // subject to decoupled weight decay
};

/// Owns named parameters with stable addresses, in insertion order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter& add(std::string name, Matrix init, bool decay);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var param(Parameter& p);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Seeds d(root)/d(root) = 1 and propagates to every parameter leaf.
  void backward(Var root);

  // Op construction interface (used by the op implementations).
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;
  Var push(Matrix value, bool requires_grad, BackwardFn fn);

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* alias = nullptr;
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::map<const Parameter*, int> param_nodes_;
};

/// Per-example attention layout for stacked batches.
///
/// Queries are stacked as batch*q_len rows; keys/values as batch*k_len rows,
/// or k_len rows when kv_shared (one key set broadcast to every example).
/// The effective mask is the conjunction of visible, causal and key_valid.
struct AttentionLayout {
  int batch = 1;
  int q_len = 0;
  int k_len = 0;
  bool kv_shared = false;
  bool causal = false;
  const Matrix* visible = nullptr;    // q_len x k_len, 1 = allowed
  const Matrix* key_valid = nullptr;  // batch x k_len, 1 = real token
};

namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var linear(Var x, Var w, Var b);  // x * w + b (b is 1 x out, may be invalid)
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_tiled(Var x, Var pattern);  // x rows cycle through pattern rows
Var scale(Var a, double s);
Var mul_scalar(Var a, Var s);  // s is 1x1
Var div_scalar(Var a, Var s);  // s is 1x1
Var hadamard(Var a, Var b);
Var gelu(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Fused multi-head scaled dot-product attention. When capture is set, the
/// head-averaged probabilities of each example are appended to it.
Var attention(Var q, Var k, Var v, int heads, const AttentionLayout& layout,
              std::vector<Matrix>* capture = nullptr);

Var embed(Var table, std::span<const int> ids);
/// Row i is the mean of table rows listed in groups[i].
Var embed_mean(Var table, const std::vector<std::vector<int>>& groups);
Var rows(Var x, Eigen::Index start, Eigen::Index count);
Var select_rows(Var x, std::span<const int> idx);
Var concat_rows(std::span<const Var> parts);
Var l2_normalize_rows(Var x, double eps = 1e-12);

/// Mean over weighted rows of -sum_j t_j log(max(softmax(logits)_j, floor)).
/// Rows with zero weight are ignored; normalization is by the weight sum.
Var softmax_cross_entropy(Var logits, const Matrix& targets, const Vector* row_weights = nullptr,
                          double floor = 1e-12);
/// Mean over all entries of binary cross-entropy on sigmoid(logits).
Var bce_with_logits(Var logits, const Matrix& targets);

Var sum(Var x);
Var mean(Var x);

}  // namespace ad

/// Row-wise softmax with entries where allowed == 0 forced to exactly 0.
Matrix masked_softmax(const Matrix& scores, const Matrix* allowed);

}  // namespace motor
