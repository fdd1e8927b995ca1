#pragma once
// Ground-truth counter and the two hash baselines (TCM, Count-Min) used for
// equal-memory comparisons. Counters accumulate in f64 so the overestimate
// guarantee survives weighted streams; byte budgets are accounted at the
// 32-bit counter width the construction rule divides by, mirroring the
// sketch-state accounting used for the main method.

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "crane/sketch.hpp"

namespace crane {

inline std::uint64_t edge_key64(std::uint32_t o, std::uint32_t d) {
  return (static_cast<std::uint64_t>(o) << 32) | d;
}

class ExactCounter {
 public:
  void insert(const EdgeUpdate& e) { counts_[edge_key64(e.origin, e.destination)] += e.weight; }
  double query(EdgeKey e) const {
    auto it = counts_.find(edge_key64(e.origin, e.destination));
    return it == counts_.end() ? 0.0 : it->second;
  }
  double node_flux(std::uint32_t node, std::span<const EdgeKey> incident,
                   FluxDirection dir) const;
  std::size_t distinct_edges() const { return counts_.size(); }

 private:
  std::unordered_map<std::uint64_t, double> counts_;
};

// 64-bit multiply-shift bucket hash: h(x) = ((a*x + b) >> 32) % m with odd a.
// plain_mod = true swaps in x % m, used by tests that force collisions.
struct BucketHash {
  std::uint64_t a = 0x9e3779b97f4a7c15ull;
  std::uint64_t b = 0;
  std::uint32_t m = 1;
  bool plain_mod = false;

  static BucketHash seeded(std::uint64_t seed, std::uint32_t m);
  static BucketHash modulo(std::uint32_t m) { return {0, 0, m, true}; }

  std::uint32_t operator()(std::uint32_t x) const {
    if (plain_mod) return x % m;
    return static_cast<std::uint32_t>(((a * x + b) >> 32) % m);
  }
};

class TcmSketch {
 public:
  // Equal-memory construction: m = floor(sqrt(budget/4)), 32-bit accounting.
  TcmSketch(std::uint64_t budget_bytes, std::uint64_t seed);
  TcmSketch(std::uint32_t m, BucketHash h);  // test hook

  void insert(const EdgeUpdate& e) {
    cells_[static_cast<std::size_t>(hash_(e.origin)) * m_ +
           hash_(e.destination)] += e.weight;
  }
  double query(EdgeKey e) const {
    return cells_[static_cast<std::size_t>(hash_(e.origin)) * m_ +
                  hash_(e.destination)];
  }
  double node_flux(std::uint32_t node, FluxDirection dir) const;
  std::uint64_t bytes_used() const { return static_cast<std::uint64_t>(m_) * m_ * sizeof(float); }
  std::uint32_t m() const { return m_; }

 private:
  std::uint32_t m_;
  BucketHash hash_;
  std::vector<double> cells_;
};

class CountMinSketch {
 public:
  CountMinSketch(std::uint64_t budget_bytes, std::uint64_t seed, std::uint32_t d = 3);
  CountMinSketch(std::uint32_t width, std::uint32_t d, std::uint64_t seed);

  void insert(const EdgeUpdate& e);
  double query(EdgeKey e) const;
  std::uint64_t bytes_used() const {
    return static_cast<std::uint64_t>(rows_.size()) * width_ * sizeof(float);
  }
  std::uint32_t width() const { return width_; }
  std::uint32_t depth() const { return static_cast<std::uint32_t>(rows_.size()); }

 private:
  std::uint32_t width_;
  std::vector<BucketHash> hashes_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace crane
