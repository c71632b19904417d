#include "motor/optimizer.hpp"

#include "motor/binary_io.hpp"

#include <cmath>
#include <stdexcept>

namespace motor {

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  if (warmup_steps < 0) throw std::invalid_argument("warmup steps must be nonnegative");
  if (grad_clip < 0.0) throw std::invalid_argument("grad clip must be nonnegative");
}

bool AdamW::is_trainable(const std::string& name) const {
  if (trainable_.empty()) return true;
  for (const auto& p : trainable_)
    if (name.starts_with(p)) return true;
  return false;
}

double AdamW::step(ParamStore& params) {
  ++t_;
  double lr = cfg_.lr;
  if (cfg_.warmup_steps > 0 && t_ <= cfg_.warmup_steps) lr *= static_cast<double>(t_) / cfg_.warmup_steps;
  double clip = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (Parameter* p : params.all())
      if (is_trainable(p->name) && p->grad.size() == p->value.size()) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params.all()) {
    if (!is_trainable(p->name) || p->grad.size() != p->value.size()) continue;
    Moments& s = state_[p->name];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix g = p->grad * clip;
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    if (p->decay && cfg_.weight_decay > 0.0) p->value *= 1.0 - lr * cfg_.weight_decay;
    p->value.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + cfg_.eps);
  }
  return lr;
}

void AdamW::write(std::ostream& out) const {
  bin::write_i64(out, t_);
  bin::write_u64(out, state_.size());
  for (const auto& [name, s] : state_) {
    bin::write_string(out, name);
    bin::write_matrix(out, s.m);
    bin::write_matrix(out, s.v);
  }
}

void AdamW::read(std::istream& in) {
  t_ = bin::read_i64(in);
  const auto n = bin::read_u64(in);
  state_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = bin::read_string(in);
    Moments s;
    s.m = bin::read_matrix(in);
    s.v = bin::read_matrix(in);
    state_.emplace(std::move(name), std::move(s));
  }
}

}  // namespace motor
