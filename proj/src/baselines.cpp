#include "crane/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "crane/rng.hpp"

namespace crane {

double ExactCounter::node_flux(std::uint32_t node,
                               std::span<const EdgeKey> incident,
                               FluxDirection dir) const {
  double s = 0.0;
  for (const auto& e : incident) {
    const bool match =
        dir == FluxDirection::out ? e.origin == node : e.destination == node;
    if (match) s += query(e);
  }
  return s;
}

BucketHash BucketHash::seeded(std::uint64_t seed, std::uint32_t m) {
  SplitMix64 sm(seed);
  BucketHash h;
  h.a = sm.next() | 1ull;  // odd multiplier
  h.b = sm.next();
  h.m = m;
  h.plain_mod = false;
  return h;
}

TcmSketch::TcmSketch(std::uint64_t budget_bytes, std::uint64_t seed) {
  const auto m = static_cast<std::uint32_t>(
      std::floor(std::sqrt(static_cast<double>(budget_bytes) / 4.0)));
  if (m < 1) throw std::invalid_argument("tcm: budget below one counter");
  m_ = m;
  hash_ = BucketHash::seeded(seed, m);
  cells_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
}

TcmSketch::TcmSketch(std::uint32_t m, BucketHash h) : m_(m), hash_(h) {
  if (m < 1) throw std::invalid_argument("tcm: m must be >= 1");
  cells_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
}

double TcmSketch::node_flux(std::uint32_t node, FluxDirection dir) const {
  const std::size_t h = hash_(node);
  double s = 0.0;
  if (dir == FluxDirection::out) {
    for (std::size_t j = 0; j < m_; ++j) s += cells_[h * m_ + j];
  } else {
    for (std::size_t i = 0; i < m_; ++i) s += cells_[i * m_ + h];
  }
  return s;
}

CountMinSketch::CountMinSketch(std::uint64_t budget_bytes, std::uint64_t seed,
                               std::uint32_t d) {
  if (d < 1) throw std::invalid_argument("cms: depth must be >= 1");
  const auto w = static_cast<std::uint32_t>(budget_bytes / (4ull * d));
  if (w < 1) throw std::invalid_argument("cms: budget below one counter row");
  width_ = w;
  SplitMix64 sm(seed);
  for (std::uint32_t r = 0; r < d; ++r) {
    hashes_.push_back(BucketHash::seeded(sm.next(), width_));
    rows_.emplace_back(width_, 0.0);
  }
}

CountMinSketch::CountMinSketch(std::uint32_t width, std::uint32_t d,
                               std::uint64_t seed)
    : width_(width) {
  if (width < 1 || d < 1) throw std::invalid_argument("cms: bad dimensions");
  SplitMix64 sm(seed);
  for (std::uint32_t r = 0; r < d; ++r) {
    hashes_.push_back(BucketHash::seeded(sm.next(), width_));
    rows_.emplace_back(width_, 0.0);
  }
}

void CountMinSketch::insert(const EdgeUpdate& e) {
  // item identity is the directed edge; mix the two endpoints first
  const std::uint64_t key = edge_key64(e.origin, e.destination);
  const auto x = static_cast<std::uint32_t>(key ^ (key >> 32) * 0x9e3779b9u);
  for (std::size_t r = 0; r < rows_.size(); ++r)
    rows_[r][hashes_[r](x)] += e.weight;
}

double CountMinSketch::query(EdgeKey e) const {
  const std::uint64_t key = edge_key64(e.origin, e.destination);
  const auto x = static_cast<std::uint32_t>(key ^ (key >> 32) * 0x9e3779b9u);
  double best = rows_[0][hashes_[0](x)];
  for (std::size_t r = 1; r < rows_.size(); ++r)
    best = std::min(best, rows_[r][hashes_[r](x)]);
  return best;
}

}  // namespace crane
