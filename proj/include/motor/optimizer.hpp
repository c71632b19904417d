#pragma once

// AdamW with decoupled weight decay and parameter freezing by name prefix.

#include "motor/autograd.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace motor {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.02;
  int warmup_steps = 0;  // linear ramp of the step size
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  void validate() const;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  /// Only parameters whose name starts with one of these prefixes are updated.
  /// Empty list = everything trainable.
  void set_trainable(std::vector<std::string> prefixes) { trainable_ = std::move(prefixes); }
  bool is_trainable(const std::string& name) const;
  const std::vector<std::string>& trainable() const { return trainable_; }

  /// Applies one update from the accumulated gradients. Returns the learning
  /// rate used.
  double step(ParamStore& params);

  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

  void write(std::ostream& out) const;
  void read(std::istream& in);

 private:
  struct Moments {
    Matrix m, v;
  };
  AdamWConfig cfg_;
  std::vector<std::string> trainable_;
  std::map<std::string, Moments> state_;
  long t_ = 0;
};

}  // namespace motor
