#pragma once

#include "sdeadapt/types.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sdeadapt {

/// Counter-based standard normal variate keyed by (seed, time, component).
/// The same key always yields the same value, independent of call order.
double keyed_normal(std::uint64_t seed, double t, std::size_t component) noexcept;

/// Mixes a base seed with an index into a well-spread 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// A lazily sampled, refinable realization of an m-dimensional Wiener process.
///
/// Knots are kept sorted by time. A query beyond the last knot extends the path
/// with an independent Gaussian increment; a query between two knots samples
/// the Brownian bridge conditional on its neighbours. Every returned value is
/// cached, so repeated queries are bitwise stable and later refinements never
/// alter earlier answers.
///
/// Not thread-safe: a path has a single writer. Distinct paths are independent.
class BrownianPath {
 public:
  BrownianPath(std::uint64_t seed, std::size_t dimension);

  std::size_t dimension() const noexcept { return dimension_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// W(t). Throws std::invalid_argument for negative or non-finite t, or for
  /// t earlier than the retained history (see release_before).
  Vector value_at(double t);
  void value_at(double t, std::span<double> out);

  /// W(t) - W(s) for 0 <= s <= t.
  Vector increment(double s, double t);
  void increment(double s, double t, std::span<double> out);

  std::size_t knot_count() const noexcept;

  /// Earliest time that can still be queried.
  double earliest_time() const noexcept;

  /// Allows the path to drop knots strictly before t. Forward-only drivers call
  /// this to keep memory bounded on long runs. Knots are released in whole
  /// blocks, so some history before t may survive; queries earlier than
  /// earliest_time() afterwards throw.
  void release_before(double t);

 private:
  struct Block {
    std::vector<double> times;
    std::vector<double> values;  // dimension_ values per knot, row-major
  };
  struct Position {
    std::size_t block;
    std::size_t index;
  };

  static constexpr std::size_t kBlockCapacity = 256;

  Position lower_bound(double t) const;
  Position previous(Position p) const;
  bool at_end(Position p) const { return p.block == blocks_.size(); }
  double time_at(Position p) const { return blocks_[p.block].times[p.index]; }
  const double* values_at(Position p) const {
    return blocks_[p.block].values.data() + p.index * dimension_;
  }
  const double* locate_or_insert(double t);
  const double* append(double t);
  const double* insert_bridge(Position right, double t);

  std::uint64_t seed_;
  std::size_t dimension_;
  std::vector<Block> blocks_;
  std::vector<double> scratch_;
};

}  // namespace sdeadapt
