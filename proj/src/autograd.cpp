#include "motor/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

namespace motor {

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::add(std::string name, Matrix init, bool decay) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  index_.emplace(name, params_.size());
  Parameter& p = params_.emplace_back();
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.decay = decay;
  return p;
}

Parameter& ParamStore::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return params_[it->second];
}

const Parameter& ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return params_[it->second];
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---------------------------------------------------------------- Tape / Var

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on non-1x1 value");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node& n = nodes_.emplace_back();
  n.alias = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.alias ? *n.alias : n.value;
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: var from another tape");
  if (value(root.id).size() != 1) throw ShapeError("backward: root must be 1x1");
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].grad = Matrix::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->grad = Matrix::Zero(n.grad.rows(), n.grad.cols());
      }
      n.param->grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------- helpers

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

bool any_grad(Var a) { return a.tape->requires_grad(a.id); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

}  // namespace

Matrix masked_softmax(const Matrix& scores, const Matrix* allowed) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool finite = true;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (allowed && (*allowed)(r, c) == 0.0) continue;
      finite &= std::isfinite(scores(r, c));
      mx = std::max(mx, scores(r, c));
    }
    if (!finite) throw NumericError("non-finite attention score");
    if (!std::isfinite(mx)) throw ShapeError("attention row with no visible key");
    double total = 0.0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (allowed && (*allowed)(r, c) == 0.0) {
        out(r, c) = 0.0;
      } else {
        out(r, c) = std::exp(scores(r, c) - mx);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  return out;
}

namespace ad {

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value(), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b.id).transpose());
    t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() * b.value().transpose(), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g * t.value(b.id));
    t.accumulate(b.id, g.transpose() * t.value(a.id));
  });
}

Var linear(Var x, Var w, Var b) {
  require(x.cols() == w.rows(), "linear: input width mismatch");
  Tape& t = *x.tape;
  Matrix out = x.value() * w.value();
  const bool has_bias = b.valid();
  if (has_bias) {
    require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape");
    out.rowwise() += b.value().row(0);
  }
  bool rg = any_grad(x, w) || (has_bias && any_grad(b));
  return t.push(std::move(out), rg, [x, w, b, has_bias](Tape& t, const Matrix& g) {
    if (t.requires_grad(x.id)) t.accumulate(x.id, g * t.value(w.id).transpose());
    if (t.requires_grad(w.id)) t.accumulate(w.id, t.value(x.id).transpose() * g);
    if (has_bias) t.accumulate(b.id, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() + b.value(), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape& t = *a.tape;
  return t.push(a.value() - b.value(), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var add_tiled(Var x, Var pattern) {
  const Eigen::Index period = pattern.rows();
  require(period > 0 && x.cols() == pattern.cols() && x.rows() % period == 0, "add_tiled: shape");
  Tape& t = *x.tape;
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); r += period) out.middleRows(r, period) += pattern.value();
  return t.push(std::move(out), any_grad(x, pattern), [x, pattern, period](Tape& t, const Matrix& g) {
    t.accumulate(x.id, g);
    if (t.requires_grad(pattern.id)) {
      Matrix acc = Matrix::Zero(period, g.cols());
      for (Eigen::Index r = 0; r < g.rows(); r += period) acc += g.middleRows(r, period);
      t.accumulate(pattern.id, acc);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.value() * s, any_grad(a), [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var mul_scalar(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar: scalar must be 1x1");
  Tape& t = *a.tape;
  return t.push(a.value() * s.scalar(), any_grad(a, s), [a, s](Tape& t, const Matrix& g) {
    const double sv = t.value(s.id)(0, 0);
    t.accumulate(a.id, g * sv);
    if (t.requires_grad(s.id)) {
      t.accumulate(s.id, Matrix::Constant(1, 1, g.cwiseProduct(t.value(a.id)).sum()));
    }
  });
}

Var div_scalar(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "div_scalar: scalar must be 1x1");
  Tape& t = *a.tape;
  return t.push(a.value() / s.scalar(), any_grad(a, s), [a, s](Tape& t, const Matrix& g) {
    const double sv = t.value(s.id)(0, 0);
    t.accumulate(a.id, g / sv);
    if (t.requires_grad(s.id)) {
      t.accumulate(s.id, Matrix::Constant(1, 1, -g.cwiseProduct(t.value(a.id)).sum() / (sv * sv)));
    }
  });
}

Var hadamard(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  Tape& t = *a.tape;
  return t.push(a.value().cwiseProduct(b.value()), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

Var gelu(Var x) {
  Tape& t = *x.tape;
  const Matrix& v = x.value();
  Matrix out = v.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)); });
  return t.push(std::move(out), any_grad(x), [x](Tape& t, const Matrix& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = t.value(x.id).unaryExpr([inv_sqrt_2pi](double z) {
      return 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)) + z * inv_sqrt_2pi * std::exp(-0.5 * z * z);
    });
    t.accumulate(x.id, g.cwiseProduct(d));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.rows(), d = x.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d, "layer_norm: param shape");
  Tape& t = *x.tape;
  const Matrix& v = x.value();
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Vector>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (v.row(r).array() - mu) * (*inv_std)(r);
  }
  Matrix out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const bool rg = any_grad(x) || any_grad(gain) || any_grad(bias);
  return t.push(std::move(out), rg, [x, gain, bias, xhat, inv_std](Tape& t, const Matrix& g) {
    if (t.requires_grad(gain.id)) t.accumulate(gain.id, g.cwiseProduct(*xhat).colwise().sum());
    if (t.requires_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
    if (!t.requires_grad(x.id)) return;
    Matrix dxhat = g.array().rowwise() * t.value(gain.id).row(0).array();
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double m1 = dxhat.row(r).mean();
      const double m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
      dx.row(r) = (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
    }
    t.accumulate(x.id, dx);
  });
}

Var attention(Var q, Var k, Var v, int heads, const AttentionLayout& layout, std::vector<Matrix>* capture) {
  const int B = layout.batch, Lq = layout.q_len, Lk = layout.k_len;
  const int kv_batches = layout.kv_shared ? 1 : B;
  const Eigen::Index d = q.cols();
  require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  require(q.rows() == static_cast<Eigen::Index>(B) * Lq, "attention: query rows");
  require(k.rows() == static_cast<Eigen::Index>(kv_batches) * Lk && v.rows() == k.rows(), "attention: key rows");
  require(k.cols() == d && v.cols() == d, "attention: key/value width");
  if (layout.visible) require(layout.visible->rows() == Lq && layout.visible->cols() == Lk, "attention: visible mask shape");
  if (layout.key_valid) require(layout.key_valid->rows() == B && layout.key_valid->cols() == Lk, "attention: key_valid shape");
  if (layout.causal) require(Lq == Lk, "attention: causal mask needs square layout");

  const Eigen::Index dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool masked = layout.visible || layout.key_valid || layout.causal;

  Tape& t = *q.tape;
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(static_cast<std::size_t>(B) * heads);
  Matrix out(Q.rows(), d);
  Matrix allowed;
  for (int b = 0; b < B; ++b) {
    if (masked) {
      allowed = layout.visible ? *layout.visible : Matrix::Ones(Lq, Lk);
      if (layout.causal) {
        for (int i = 0; i < Lq; ++i)
          for (int j = i + 1; j < Lk; ++j) allowed(i, j) = 0.0;
      }
      if (layout.key_valid) {
        for (int j = 0; j < Lk; ++j)
          if ((*layout.key_valid)(b, j) == 0.0) allowed.col(j).setZero();
      }
    }
    const Eigen::Index kb = layout.kv_shared ? 0 : b;
    Matrix avg;
    if (capture) avg = Matrix::Zero(Lq, Lk);
    for (int h = 0; h < heads; ++h) {
      Matrix s = Q.block(b * Lq, h * dh, Lq, dh) * K.block(kb * Lk, h * dh, Lk, dh).transpose() * sc;
      Matrix p = masked_softmax(s, masked ? &allowed : nullptr);
      out.block(b * Lq, h * dh, Lq, dh) = p * V.block(kb * Lk, h * dh, Lk, dh);
      if (capture) avg += p / static_cast<double>(heads);
      probs->push_back(std::move(p));
    }
    if (capture) capture->push_back(std::move(avg));
  }

  const bool rg = any_grad(q) || any_grad(k) || any_grad(v);
  return t.push(std::move(out), rg, [q, k, v, B, Lq, Lk, heads, dh, sc, probs, shared = layout.kv_shared](Tape& t, const Matrix& g) {
    const Matrix& Q = t.value(q.id);
    const Matrix& K = t.value(k.id);
    const Matrix& V = t.value(v.id);
    Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
    Matrix dK = Matrix::Zero(K.rows(), K.cols());
    Matrix dV = Matrix::Zero(V.rows(), V.cols());
    for (int b = 0; b < B; ++b) {
      const Eigen::Index kb = shared ? 0 : b;
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
        auto dO = g.block(b * Lq, h * dh, Lq, dh);
        auto Vb = V.block(kb * Lk, h * dh, Lk, dh);
        Matrix dP = dO * Vb.transpose();
        dV.block(kb * Lk, h * dh, Lk, dh) += p.transpose() * dO;
        Vector rs = dP.cwiseProduct(p).rowwise().sum();
        Matrix dS = (p.array() * (dP.colwise() - rs).array()).matrix() * sc;
        dQ.block(b * Lq, h * dh, Lq, dh) += dS * K.block(kb * Lk, h * dh, Lk, dh);
        dK.block(kb * Lk, h * dh, Lk, dh) += dS.transpose() * Q.block(b * Lq, h * dh, Lq, dh);
      }
    }
    t.accumulate(q.id, dQ);
    t.accumulate(k.id, dK);
    t.accumulate(v.id, dV);
  });
}

Var embed(Var table, std::span<const int> ids) {
  const Matrix& T = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < T.rows(), "embed: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->push(std::move(out), any_grad(table), [table, idv = std::move(idv)](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(t.value(table.id).rows(), g.cols());
    for (std::size_t i = 0; i < idv.size(); ++i) acc.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table.id, acc);
  });
}

Var embed_mean(Var table, const std::vector<std::vector<int>>& groups) {
  const Matrix& T = table.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), T.cols());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    require(!groups[i].empty(), "embed_mean: empty group");
    for (int id : groups[i]) {
      require(id >= 0 && id < T.rows(), "embed_mean: id out of range");
      out.row(static_cast<Eigen::Index>(i)) += T.row(id);
    }
    out.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(groups[i].size());
  }
  return table.tape->push(std::move(out), any_grad(table), [table, groups](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(t.value(table.id).rows(), g.cols());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const double w = 1.0 / static_cast<double>(groups[i].size());
      for (int id : groups[i]) acc.row(id) += w * g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(table.id, acc);
  });
}

Var rows(Var x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.rows(), "rows: range out of bounds");
  Tape& t = *x.tape;
  return t.push(x.value().middleRows(start, count), any_grad(x), [x, start, count](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(t.value(x.id).rows(), g.cols());
    acc.middleRows(start, count) = g;
    t.accumulate(x.id, acc);
  });
}

Var select_rows(Var x, std::span<const int> idx) {
  const Matrix& X = x.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < X.rows(), "select_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  }
  std::vector<int> iv(idx.begin(), idx.end());
  return x.tape->push(std::move(out), any_grad(x), [x, iv = std::move(iv)](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(t.value(x.id).rows(), g.cols());
    for (std::size_t i = 0; i < iv.size(); ++i) acc.row(iv[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(x.id, acc);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  Eigen::Index total = 0;
  const Eigen::Index d = parts[0].cols();
  bool rg = false;
  for (const Var& p : parts) {
    require(p.cols() == d, "concat_rows: width mismatch");
    total += p.rows();
    rg = rg || any_grad(p);
  }
  Matrix out(total, d);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> pv(parts.begin(), parts.end());
  return t.push(std::move(out), rg, [pv = std::move(pv)](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : pv) {
      const Eigen::Index n = t.value(p.id).rows();
      t.accumulate(p.id, g.middleRows(off, n));
      off += n;
    }
  });
}

Var l2_normalize_rows(Var x, double eps) {
  const Matrix& X = x.value();
  Vector norms = X.rowwise().norm();
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) out.row(r) = X.row(r) / (norms(r) + eps);
  return x.tape->push(std::move(out), any_grad(x), [x, norms, eps](Tape& t, const Matrix& g) {
    const Matrix& X = t.value(x.id);
    Matrix dx(X.rows(), X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const double n = norms(r), s = n + eps;
      dx.row(r) = g.row(r) / s;
      if (n > 0.0) dx.row(r) -= X.row(r) * (X.row(r).dot(g.row(r)) / (s * s * n));
    }
    t.accumulate(x.id, dx);
  });
}

Var softmax_cross_entropy(Var logits, const Matrix& targets, const Vector* row_weights, double floor) {
  const Matrix& L = logits.value();
  require(targets.rows() == L.rows() && targets.cols() == L.cols(), "softmax_cross_entropy: target shape");
  if (row_weights) require(row_weights->size() == L.rows(), "softmax_cross_entropy: weight length");
  auto probs = std::make_shared<Matrix>(masked_softmax(L, nullptr));
  double total = 0.0, wsum = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const double w = row_weights ? (*row_weights)(r) : 1.0;
    if (w == 0.0) continue;
    double lr = 0.0;
    for (Eigen::Index c = 0; c < L.cols(); ++c) {
      if (targets(r, c) != 0.0) lr -= targets(r, c) * std::log(std::max((*probs)(r, c), floor));
    }
    total += w * lr;
    wsum += w;
  }
  require(wsum > 0.0, "softmax_cross_entropy: no weighted rows");
  Vector weights = row_weights ? *row_weights : Vector::Ones(L.rows());
  return logits.tape->push(Matrix::Constant(1, 1, total / wsum), any_grad(logits),
                           [logits, targets, weights, wsum, probs, floor](Tape& t, const Matrix& g) {
                             Matrix d = Matrix::Zero(probs->rows(), probs->cols());
                             for (Eigen::Index r = 0; r < d.rows(); ++r) {
                               if (weights(r) == 0.0) continue;
                               double mass = 0.0;
                               for (Eigen::Index c = 0; c < d.cols(); ++c) {
                                 if ((*probs)(r, c) > floor) {
                                   mass += targets(r, c);
                                   d(r, c) -= targets(r, c);
                                 }
                               }
                               d.row(r) += mass * probs->row(r);
                               d.row(r) *= weights(r) / wsum;
                             }
                             t.accumulate(logits.id, d * g(0, 0));
                           });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& X = logits.value();
  require(targets.rows() == X.rows() && targets.cols() == X.cols(), "bce_with_logits: target shape");
  const double n = static_cast<double>(X.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double x = X.data()[i], y = targets.data()[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  return logits.tape->push(Matrix::Constant(1, 1, total / n), any_grad(logits), [logits, targets, n](Tape& t, const Matrix& g) {
    Matrix sig = t.value(logits.id).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    t.accumulate(logits.id, (sig - targets) * (g(0, 0) / n));
  });
}

Var sum(Var x) {
  return x.tape->push(Matrix::Constant(1, 1, x.value().sum()), any_grad(x), [x](Tape& t, const Matrix& g) {
    const Matrix& X = t.value(x.id);
    t.accumulate(x.id, Matrix::Constant(X.rows(), X.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return x.tape->push(Matrix::Constant(1, 1, x.value().sum() / n), any_grad(x), [x, n](Tape& t, const Matrix& g) {
    const Matrix& X = t.value(x.id);
    t.accumulate(x.id, Matrix::Constant(X.rows(), X.cols(), g(0, 0) / n));
  });
}

}  // namespace ad
}  // namespace motor
