#pragma once

#include "motor/autograd.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace motor {

struct QueueHit {
  std::int64_t id = 0;
  double similarity = 0.0;
};

/// Exhaustive ranking by dot product, descending; equal scores keep the
/// entry with the smaller insertion stamp first.
std::vector<QueueHit> rank_by_similarity(const Matrix& vectors, std::span<const std::int64_t> ids,
                                         std::span<const std::uint64_t> stamps, const Vector& query, std::size_t k);

/// Fixed-capacity FIFO of unit-norm feature rows with a payload id per row.
class FeatureQueue {
 public:
  static constexpr double kNormTolerance = 1e-5;

  FeatureQueue(std::size_t capacity, int dim);

  /// Overwrites the oldest rows first. Rows must be unit-norm.
  void enqueue(const Matrix& vectors, std::span<const std::int64_t> ids);

  std::vector<QueueHit> top_k(const Vector& query, std::size_t k) const;

  std::size_t capacity() const { return capacity_; }
  std::size_t count() const { return count_; }
  std::size_t cursor() const { return cursor_; }
  int dim() const { return static_cast<int>(vectors_.cols()); }

  /// Stored rows oldest first; a copy, unaffected by later enqueues.
  Matrix snapshot() const;
  std::vector<std::int64_t> ids_in_order() const;

  void write(std::ostream& out) const;
  static FeatureQueue read(std::istream& in);

 private:
  std::size_t capacity_;
  std::size_t count_ = 0;
  std::size_t cursor_ = 0;
  std::uint64_t next_stamp_ = 0;
  Matrix vectors_;
  std::vector<std::int64_t> ids_;
  std::vector<std::uint64_t> stamps_;
};

class MomentumCoeff {
 public:
  explicit MomentumCoeff(double value);
  double value() const { return value_; }

 private:
  double value_;
};

/// momentum <- coeff * momentum + (1 - coeff) * params, for every parameter of
/// `momentum` whose name starts with one of `prefixes` (all when empty).
void momentum_update(const ParamStore& params, ParamStore& momentum, MomentumCoeff coeff,
                     std::span<const std::string_view> prefixes = {});

}  // namespace motor
