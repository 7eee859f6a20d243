#include "sdeadapt/brownian.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sdeadapt {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Knots closer than one part in 2^52 of their magnitude are the same knot.
bool same_time(double a, double b) noexcept {
  return std::abs(a - b) <= 0x1p-52 * std::max(std::abs(a), std::abs(b));
}

void check_time(double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("BrownianPath: non-finite time");
  if (t < 0.0) throw std::invalid_argument("BrownianPath: negative time");
}

}  // namespace

double keyed_normal(std::uint64_t seed, double t, std::size_t component) noexcept {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(t);
  const std::uint64_t k1 =
      splitmix64(seed ^ splitmix64(bits ^ splitmix64(component + 0x632be59bd9b4e019ULL)));
  const std::uint64_t k2 = splitmix64(k1 ^ 0xd1b54a32d192ed03ULL);
  // u1 in (0, 1], u2 in [0, 1)
  const double u1 = (static_cast<double>(k1 >> 11) + 1.0) * 0x1p-53;
  const double u2 = static_cast<double>(k2 >> 11) * 0x1p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x2545f4914f6cdd1dULL));
}

BrownianPath::BrownianPath(std::uint64_t seed, std::size_t dimension)
    : seed_(seed), dimension_(dimension) {
  if (dimension == 0) throw std::invalid_argument("BrownianPath: dimension must be positive");
  Block first;
  first.times.reserve(kBlockCapacity);
  first.values.reserve(kBlockCapacity * dimension_);
  first.times.push_back(0.0);
  first.values.assign(dimension_, 0.0);
  blocks_.push_back(std::move(first));
  scratch_.resize(dimension_);
}

std::size_t BrownianPath::knot_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.times.size();
  return n;
}

double BrownianPath::earliest_time() const noexcept { return blocks_.front().times.front(); }

BrownianPath::Position BrownianPath::lower_bound(double t) const {
  const auto block = std::partition_point(blocks_.begin(), blocks_.end(),
                                          [t](const Block& b) { return b.times.back() < t; });
  if (block == blocks_.end()) return {blocks_.size(), 0};
  const auto it = std::lower_bound(block->times.begin(), block->times.end(), t);
  return {static_cast<std::size_t>(block - blocks_.begin()),
          static_cast<std::size_t>(it - block->times.begin())};
}

BrownianPath::Position BrownianPath::previous(Position p) const {
  if (p.index > 0) return {p.block, p.index - 1};
  return {p.block - 1, blocks_[p.block - 1].times.size() - 1};
}

const double* BrownianPath::append(double t) {
  const Block& tail = blocks_.back();
  const double last_t = tail.times.back();
  const double* last_w = tail.values.data() + (tail.times.size() - 1) * dimension_;
  const double scale = std::sqrt(t - last_t);
  for (std::size_t j = 0; j < dimension_; ++j) {
    scratch_[j] = last_w[j] + scale * keyed_normal(seed_, t, j);
  }
  if (blocks_.back().times.size() == kBlockCapacity) {
    Block fresh;
    fresh.times.reserve(kBlockCapacity);
    fresh.values.reserve(kBlockCapacity * dimension_);
    blocks_.push_back(std::move(fresh));
  }
  Block& target = blocks_.back();
  target.times.push_back(t);
  target.values.insert(target.values.end(), scratch_.begin(), scratch_.end());
  return target.values.data() + (target.times.size() - 1) * dimension_;
}

const double* BrownianPath::insert_bridge(Position right, double t) {
  const Position left = previous(right);
  const double ta = time_at(left);
  const double tb = time_at(right);
  const double* wa = values_at(left);
  const double* wb = values_at(right);
  const double span = tb - ta;
  const double weight = (t - ta) / span;
  const double sd = std::sqrt((t - ta) * (tb - t) / span);
  for (std::size_t j = 0; j < dimension_; ++j) {
    scratch_[j] = wa[j] + weight * (wb[j] - wa[j]) + sd * keyed_normal(seed_, t, j);
  }

  if (blocks_[right.block].times.size() == kBlockCapacity) {
    Block& full = blocks_[right.block];
    const std::size_t half = kBlockCapacity / 2;
    Block upper;
    upper.times.reserve(kBlockCapacity);
    upper.values.reserve(kBlockCapacity * dimension_);
    upper.times.assign(full.times.begin() + half, full.times.end());
    upper.values.assign(full.values.begin() + half * dimension_, full.values.end());
    full.times.resize(half);
    full.values.resize(half * dimension_);
    blocks_.insert(blocks_.begin() + static_cast<std::ptrdiff_t>(right.block) + 1,
                   std::move(upper));
    if (right.index >= half) {
      right.block += 1;
      right.index -= half;
    }
  }

  Block& target = blocks_[right.block];
  target.times.insert(target.times.begin() + static_cast<std::ptrdiff_t>(right.index), t);
  const auto offset = static_cast<std::ptrdiff_t>(right.index * dimension_);
  target.values.insert(target.values.begin() + offset, scratch_.begin(), scratch_.end());
  return target.values.data() + offset;
}

const double* BrownianPath::locate_or_insert(double t) {
  check_time(t);
  if (t < earliest_time() && !same_time(t, earliest_time())) {
    throw std::invalid_argument("BrownianPath: time " + std::to_string(t) +
                                " precedes retained history");
  }
  const Block& tail = blocks_.back();
  const double last_t = tail.times.back();
  if (t >= last_t || same_time(t, last_t)) {
    if (same_time(t, last_t)) return tail.values.data() + (tail.times.size() - 1) * dimension_;
    return append(t);
  }
  const Position pos = lower_bound(t);
  if (same_time(time_at(pos), t)) return values_at(pos);
  if (pos.block == 0 && pos.index == 0) return values_at(pos);
  const Position left = previous(pos);
  if (same_time(time_at(left), t)) return values_at(left);
  return insert_bridge(pos, t);
}

void BrownianPath::value_at(double t, std::span<double> out) {
  if (out.size() != dimension_) throw std::invalid_argument("BrownianPath: output size mismatch");
  const double* w = locate_or_insert(t);
  std::copy(w, w + dimension_, out.begin());
}

Vector BrownianPath::value_at(double t) {
  Vector out(static_cast<Eigen::Index>(dimension_));
  value_at(t, std::span<double>(out.data(), dimension_));
  return out;
}

void BrownianPath::increment(double s, double t, std::span<double> out) {
  check_time(s);
  check_time(t);
  if (s > t) throw std::invalid_argument("BrownianPath: increment requires s <= t");
  if (out.size() != dimension_) throw std::invalid_argument("BrownianPath: output size mismatch");
  // Resolve s first so that a fresh t is sampled conditionally on it. Its
  // values are copied out before t is inserted, which may shift storage.
  const double* ws = locate_or_insert(s);
  for (std::size_t j = 0; j < dimension_; ++j) out[j] = -ws[j];
  const double* wt = locate_or_insert(t);
  for (std::size_t j = 0; j < dimension_; ++j) out[j] += wt[j];
}

Vector BrownianPath::increment(double s, double t) {
  Vector out(static_cast<Eigen::Index>(dimension_));
  increment(s, t, std::span<double>(out.data(), dimension_));
  return out;
}

void BrownianPath::release_before(double t) {
  while (blocks_.size() > 1 && blocks_[1].times.front() <= t) {
    blocks_.erase(blocks_.begin());
  }
}

}  // namespace sdeadapt
