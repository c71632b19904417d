#pragma once

// Central finite-difference check of every pretraining loss on a tiny model,
// with knowledge injection switched on. Discrete choices (retrieved triplets,
// ITM negatives, momentum features, queue contents) are drawn once and held
// fixed so each loss is a smooth function of the parameters.

#include "motor/autograd.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace motor {

struct GradcheckOptions {
  int d_model = 8;
  int n_layers = 1;
  int n_heads = 2;
  int batch = 2;
  int queue = 2;
  std::uint64_t seed = 11;
  /// Step of the extrapolated central difference (uses h and h/2).
  double eps = 1e-3;
  double tolerance = 1e-4;
  /// Denominator floor so that gradients at roundoff level are not compared relatively.
  double abs_floor = 1e-6;
  /// Entries checked per parameter: the largest |grad| ones plus random ones.
  int top_entries = 3;
  int random_entries = 2;
  void validate() const;
};

struct GradcheckEntry {
  std::string loss;
  std::string param;
  Eigen::Index index = 0;
  double analytic = 0, numeric = 0, rel_error = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  std::vector<std::string> losses;
  double max_rel_error = 0;
  /// Parameters with a nonzero analytic gradient, per loss.
  std::vector<std::vector<std::string>> touched;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Checks L_itc, L_itm, L_lm, L_mlc and the weighted total.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace motor
