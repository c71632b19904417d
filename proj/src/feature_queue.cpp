#include "motor/feature_queue.hpp"

#include "motor/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace motor {

std::vector<QueueHit> rank_by_similarity(const Matrix& vectors, std::span<const std::int64_t> ids,
                                         std::span<const std::uint64_t> stamps, const Vector& query, std::size_t k) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (ids.size() != n || stamps.size() != n) throw std::invalid_argument("rank_by_similarity: length mismatch");
  if (n == 0 || k == 0) return {};
  if (query.size() != vectors.cols()) throw ShapeError("rank_by_similarity: query width");
  const Vector sims = vectors * query;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims(static_cast<Eigen::Index>(a)) != sims(static_cast<Eigen::Index>(b)))
      return sims(static_cast<Eigen::Index>(a)) > sims(static_cast<Eigen::Index>(b));
    return stamps[a] < stamps[b];
  });
  std::vector<QueueHit> out;
  for (std::size_t i = 0; i < std::min(k, n); ++i) {
    const double s = std::clamp(sims(static_cast<Eigen::Index>(order[i])), -1.0, 1.0);
    out.push_back({ids[order[i]], s});
  }
  return out;
}

FeatureQueue::FeatureQueue(std::size_t capacity, int dim)
    : capacity_(capacity), vectors_(Matrix::Zero(static_cast<Eigen::Index>(capacity), dim)), ids_(capacity, 0), stamps_(capacity, 0) {
  if (capacity == 0) throw std::invalid_argument("queue capacity must be positive");
  if (dim <= 0) throw std::invalid_argument("queue dimension must be positive");
}

void FeatureQueue::enqueue(const Matrix& vectors, std::span<const std::int64_t> ids) {
  if (static_cast<std::size_t>(vectors.rows()) != ids.size()) throw std::invalid_argument("enqueue: vectors/ids length mismatch");
  if (ids.size() > capacity_) throw std::invalid_argument("enqueue: batch larger than queue capacity");
  if (vectors.cols() != vectors_.cols()) throw ShapeError("enqueue: feature width mismatch");
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    if (std::abs(vectors.row(r).norm() - 1.0) > kNormTolerance) throw std::invalid_argument("enqueue: vector is not unit-norm");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    vectors_.row(static_cast<Eigen::Index>(cursor_)) = vectors.row(static_cast<Eigen::Index>(i));
    ids_[cursor_] = ids[i];
    stamps_[cursor_] = next_stamp_++;
    cursor_ = (cursor_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
  }
}

std::vector<QueueHit> FeatureQueue::top_k(const Vector& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("top_k: k must be at least 1");
  if (count_ == 0) return {};
  if (std::abs(query.norm() - 1.0) > kNormTolerance) throw std::invalid_argument("top_k: query is not unit-norm");
  const auto n = static_cast<Eigen::Index>(count_);
  return rank_by_similarity(vectors_.topRows(n), std::span(ids_).first(count_), std::span(stamps_).first(count_), query, k);
}

Matrix FeatureQueue::snapshot() const {
  Matrix out(static_cast<Eigen::Index>(count_), vectors_.cols());
  const std::size_t start = count_ < capacity_ ? 0 : cursor_;
  for (std::size_t i = 0; i < count_; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = vectors_.row(static_cast<Eigen::Index>((start + i) % capacity_));
  }
  return out;
}

std::vector<std::int64_t> FeatureQueue::ids_in_order() const {
  std::vector<std::int64_t> out;
  const std::size_t start = count_ < capacity_ ? 0 : cursor_;
  for (std::size_t i = 0; i < count_; ++i) out.push_back(ids_[(start + i) % capacity_]);
  return out;
}

void FeatureQueue::write(std::ostream& out) const {
  bin::write_u64(out, capacity_);
  bin::write_u64(out, count_);
  bin::write_u64(out, cursor_);
  bin::write_u64(out, next_stamp_);
  bin::write_matrix(out, vectors_);
  for (std::size_t i = 0; i < capacity_; ++i) {
    bin::write_i64(out, ids_[i]);
    bin::write_u64(out, stamps_[i]);
  }
}

FeatureQueue FeatureQueue::read(std::istream& in) {
  const auto capacity = bin::read_u64(in);
  const auto count = bin::read_u64(in);
  const auto cursor = bin::read_u64(in);
  const auto stamp = bin::read_u64(in);
  Matrix vectors = bin::read_matrix(in);
  if (capacity == 0 || count > capacity || cursor >= capacity || static_cast<std::uint64_t>(vectors.rows()) != capacity) {
    throw std::runtime_error("corrupt queue state");
  }
  FeatureQueue q(capacity, static_cast<int>(vectors.cols()));
  q.count_ = count;
  q.cursor_ = cursor;
  q.next_stamp_ = stamp;
  q.vectors_ = std::move(vectors);
  for (std::size_t i = 0; i < capacity; ++i) {
    q.ids_[i] = bin::read_i64(in);
    q.stamps_[i] = bin::read_u64(in);
  }
  return q;
}

MomentumCoeff::MomentumCoeff(double value) : value_(value) {
  if (!(value >= 0.0 && value < 1.0)) throw std::invalid_argument("momentum coefficient must lie in [0, 1)");
}

void momentum_update(const ParamStore& params, ParamStore& momentum, MomentumCoeff coeff,
                     std::span<const std::string_view> prefixes) {
  const double m = coeff.value();
  for (Parameter* mp : momentum.all()) {
    if (!prefixes.empty()) {
      const bool selected = std::any_of(prefixes.begin(), prefixes.end(),
                                        [&](std::string_view p) { return mp->name.starts_with(p); });
      if (!selected) continue;
    }
    if (!params.contains(mp->name)) throw std::invalid_argument("momentum_update: no online parameter " + mp->name);
    const Parameter& p = params.get(mp->name);
    if (p.value.rows() != mp->value.rows() || p.value.cols() != mp->value.cols()) {
      throw std::invalid_argument("momentum_update: shape mismatch for " + mp->name);
    }
    mp->value = m * mp->value + (1.0 - m) * p.value;
  }
}

}  // namespace motor
