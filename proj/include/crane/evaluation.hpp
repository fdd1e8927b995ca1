#pragma once
// Accuracy metrics, the equal-memory benchmark harness, synthetic evaluation
// streams, and the expansion-scaling study.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crane/baselines.hpp"
#include "crane/sketch.hpp"

namespace crane {

struct Metrics {
  double aae = 0.0;
  double are = 0.0;
  std::size_t are_count = 0;  // entries with nonzero truth
};

// AAE = mean |est - truth|; ARE = mean |est - truth| / truth over entries
// with truth != 0 (unseen edges in flux-style query lists have truth 0 and
// carry no defined relative error). Throws on empty or mismatched input.
Metrics metrics(std::span<const double> estimates, std::span<const double> truths);

// Order-sensitive FNV-1a digest of a stream; every benchmarked method hashes
// the updates as it consumes them so the harness can assert all methods saw
// the identical stream.
std::uint64_t stream_digest64(std::span<const EdgeUpdate> stream);

// Distinct edges in first-appearance order plus their exact aggregates.
void collect_distinct(std::span<const EdgeUpdate> stream,
                      std::vector<EdgeKey>& keys, std::vector<double>& truths);

// n_updates unit-weight edge draws from a pool of n_distinct random directed
// edges, edge picked by rank with P(k) proportional to k^(-alpha).
std::vector<EdgeUpdate> zipf_edge_stream(std::size_t n_updates, double alpha,
                                         std::size_t n_distinct,
                                         std::uint64_t id_space,
                                         std::uint64_t seed);

struct MethodReport {
  std::string name;
  Metrics err;
  std::uint64_t bytes_used = 0;
  double store_ops_per_sec = 0.0;
  double query_ops_per_sec = 0.0;
  std::string note;
};

struct BenchmarkReport {
  std::uint64_t seed = 0;
  std::uint64_t budget = 0;
  std::uint64_t stream_length = 0;
  std::uint64_t distinct_edges = 0;
  double theta = 0.0;
  std::uint32_t n_layers = 0;
  std::size_t b_size = 0;
  std::uint64_t stream_digest = 0;
  std::vector<MethodReport> methods;
};

struct BenchmarkOptions {
  std::vector<std::string> methods{"crane", "tcm", "cms"};
  std::uint64_t budget = 65536;
  std::size_t b_size = 4;
  std::uint64_t seed = 0;  // run metadata (stream/hash seeding)
};

// Feeds the identical stream to every requested method ("crane", "tcm",
// "cms", "oracle") plus the exact oracle, queries all distinct edges, and
// reports errors, bytes, and throughput. The method set must be non-empty and
// known; a method whose allocation cannot fit the budget is a parameter
// error, a method exceeding it after ingestion fails the run.
BenchmarkReport run_benchmark(const CraneModel& model,
                              std::span<const EdgeUpdate> stream,
                              const BenchmarkOptions& opt);

void write_report_tsv(const BenchmarkReport& r, std::ostream& os);
void write_report_text(const BenchmarkReport& r, std::ostream& os);

// ARE of a fresh sketch (1 active layer, auto-expansion up to model.n_max)
// over the stream's distinct edges.
double crane_stream_are(const CraneModel& model,
                        std::span<const EdgeUpdate> stream, std::size_t b_size,
                        CarryMode mode = CarryMode::minibatch);

struct ExpansionPoint {
  double total_weight = 0.0;
  std::uint32_t layers = 0;
};

// Scales one fixed synthetic stream to each requested total weight
// (strictly increasing) and records the auto-expanded layer count.
std::vector<ExpansionPoint> expansion_study(const CraneModel& model,
                                            std::span<const double> total_weights,
                                            std::uint64_t seed,
                                            std::size_t n_updates = 2000,
                                            std::size_t b_size = 4);

}  // namespace crane
