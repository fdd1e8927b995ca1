#include "crane/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "crane/rng.hpp"
#include "crane/training.hpp"

namespace crane {

namespace {

constexpr std::uint64_t kLayerBytes =
    static_cast<std::uint64_t>(kEmbedDim) * kEmbedDim * sizeof(float);

struct Digest {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void update(const EdgeUpdate& e) {
    bytes(&e.origin, sizeof e.origin);
    bytes(&e.destination, sizeof e.destination);
    bytes(&e.weight, sizeof e.weight);
  }
};

// Every method consumes the stream through here, hashing as it goes, so the
// harness can prove all methods saw the identical update sequence.
template <class Fn>
std::uint64_t feed(std::span<const EdgeUpdate> stream, Fn&& fn) {
  Digest d;
  for (const EdgeUpdate& e : stream) {
    d.update(e);
    fn(e);
  }
  return d.h;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  const auto dt = std::chrono::steady_clock::now() - t0;
  return std::chrono::duration<double>(dt).count();
}

double ops_per_sec(std::size_t n, double secs) {
  return static_cast<double>(n) / std::max(secs, 1e-9);
}

CraneModel cap_model_to_budget(const CraneModel& model, std::uint64_t budget) {
  const std::uint64_t fit = budget / kLayerBytes;
  if (fit == 0)
    throw std::invalid_argument("benchmark: budget below one Crane layer (" +
                                std::to_string(kLayerBytes) + " bytes)");
  if (fit >= model.n_max) return model;
  CraneModel capped = model;
  capped.n_max = static_cast<std::uint32_t>(fit);
  capped.enc_o.resize(capped.n_max);
  capped.enc_d.resize(capped.n_max);
  Tensor w(capped.n_max, 1);
  for (std::uint32_t i = 0; i < capped.n_max; ++i) w.v[i] = model.dec_w.v[i];
  capped.dec_w = std::move(w);
  return capped;
}

struct MethodRun {
  Metrics err;
  std::uint64_t bytes = 0;
  double store_s = 0.0, query_s = 0.0;
  std::uint64_t digest = 0;
  std::string note;
};

MethodRun run_crane(const CraneModel& capped, std::span<const EdgeUpdate> stream,
                    std::span<const EdgeKey> keys,
                    std::span<const double> truths, std::size_t b_size) {
  MethodRun r;
  CraneSketch sk(capped, SketchConfig{b_size, CarryMode::minibatch, true}, 1);
  std::vector<EdgeUpdate> batch;
  batch.reserve(b_size);
  auto t0 = std::chrono::steady_clock::now();
  r.digest = feed(stream, [&](const EdgeUpdate& e) {
    batch.push_back(e);
    if (batch.size() == b_size) {
      sk.store_batch(batch);
      batch.clear();
    }
  });
  if (!batch.empty()) sk.store_batch(batch);
  r.store_s = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  const std::vector<double> est = sk.batch_query(keys);
  r.query_s = seconds_since(t0);
  r.err = metrics(est, truths);
  r.bytes = static_cast<std::uint64_t>(capped.n_max) * kLayerBytes;
  r.note = "active layers " + std::to_string(sk.active_layers()) + "/" +
           std::to_string(capped.n_max) +
           "; bytes charge the f32 memories only (shared trained "
           "encoder/decoder parameters excluded)";
  return r;
}

template <class Sketch>
MethodRun run_hash_sketch(Sketch& sk, std::span<const EdgeUpdate> stream,
                          std::span<const EdgeKey> keys,
                          std::span<const double> truths) {
  MethodRun r;
  auto t0 = std::chrono::steady_clock::now();
  r.digest = feed(stream, [&](const EdgeUpdate& e) { sk.insert(e); });
  r.store_s = seconds_since(t0);
  std::vector<double> est(keys.size());
  t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < keys.size(); ++i) est[i] = sk.query(keys[i]);
  r.query_s = seconds_since(t0);
  r.err = metrics(est, truths);
  r.bytes = sk.bytes_used();
  return r;
}

MethodRun run_oracle(std::span<const EdgeUpdate> stream,
                     std::span<const EdgeKey> keys,
                     std::span<const double> truths) {
  MethodRun r;
  ExactCounter oracle;
  auto t0 = std::chrono::steady_clock::now();
  r.digest = feed(stream, [&](const EdgeUpdate& e) { oracle.insert(e); });
  r.store_s = seconds_since(t0);
  std::vector<double> est(keys.size());
  t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < keys.size(); ++i) est[i] = oracle.query(keys[i]);
  r.query_s = seconds_since(t0);
  r.err = metrics(est, truths);
  r.bytes = 0;
  r.note = "exact reference (heap hash map, outside the byte budget)";
  return r;
}

}  // namespace

Metrics metrics(std::span<const double> estimates,
                std::span<const double> truths) {
  if (estimates.empty())
    throw std::invalid_argument("metrics: empty query set");
  if (estimates.size() != truths.size())
    throw std::invalid_argument("metrics: estimate/truth length mismatch");
  Metrics m;
  double abs_sum = 0.0, rel_sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double err = std::abs(estimates[i] - truths[i]);
    abs_sum += err;
    if (truths[i] != 0.0) {
      rel_sum += err / std::abs(truths[i]);
      ++m.are_count;
    }
  }
  m.aae = abs_sum / static_cast<double>(truths.size());
  m.are = m.are_count ? rel_sum / static_cast<double>(m.are_count) : 0.0;
  return m;
}

std::uint64_t stream_digest64(std::span<const EdgeUpdate> stream) {
  return feed(stream, [](const EdgeUpdate&) {});
}

void collect_distinct(std::span<const EdgeUpdate> stream,
                      std::vector<EdgeKey>& keys, std::vector<double>& truths) {
  keys.clear();
  truths.clear();
  std::unordered_map<std::uint64_t, std::size_t> seen;
  seen.reserve(stream.size() * 2);
  for (const EdgeUpdate& e : stream) {
    auto [it, fresh] =
        seen.try_emplace(edge_key64(e.origin, e.destination), keys.size());
    if (fresh) {
      keys.push_back({e.origin, e.destination});
      truths.push_back(0.0);
    }
    truths[it->second] += e.weight;
  }
}

std::vector<EdgeUpdate> zipf_edge_stream(std::size_t n_updates, double alpha,
                                         std::size_t n_distinct,
                                         std::uint64_t id_space,
                                         std::uint64_t seed) {
  if (n_updates == 0 || n_distinct == 0)
    throw std::invalid_argument("zipf_edge_stream: empty size");
  if (id_space < 2)
    throw std::invalid_argument("zipf_edge_stream: id space too small");
  Xoshiro256ss rng(seed);
  std::vector<EdgeKey> pool;
  pool.reserve(n_distinct);
  std::unordered_set<std::uint64_t> used;
  std::size_t attempts = 0;
  while (pool.size() < n_distinct) {
    if (++attempts > n_distinct * 64 + 1024)
      throw std::invalid_argument("zipf_edge_stream: id space too small");
    const auto o = static_cast<std::uint32_t>(rng.below(id_space));
    const auto d = static_cast<std::uint32_t>(rng.below(id_space));
    if (used.insert(edge_key64(o, d)).second) pool.push_back({o, d});
  }
  const std::vector<double> probs = zipf_weights(alpha, n_distinct);
  std::vector<double> cdf(n_distinct);
  double acc = 0.0;
  for (std::size_t k = 0; k < n_distinct; ++k) {
    acc += probs[k];
    cdf[k] = acc;
  }
  cdf.back() = 1.0;
  std::vector<EdgeUpdate> stream;
  stream.reserve(n_updates);
  for (std::size_t i = 0; i < n_updates; ++i) {
    const double u = rng.uniform();
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const EdgeKey e = pool[std::min(k, n_distinct - 1)];
    stream.push_back({e.origin, e.destination, 1.0});
  }
  return stream;
}

BenchmarkReport run_benchmark(const CraneModel& model,
                              std::span<const EdgeUpdate> stream,
                              const BenchmarkOptions& opt) {
  if (stream.empty())
    throw std::invalid_argument("benchmark: empty stream");
  if (opt.methods.empty())
    throw std::invalid_argument("benchmark: no methods requested");
  std::vector<EdgeKey> keys;
  std::vector<double> truths;
  collect_distinct(stream, keys, truths);

  BenchmarkReport rep;
  rep.seed = opt.seed;
  rep.budget = opt.budget;
  rep.stream_length = stream.size();
  rep.distinct_edges = keys.size();
  rep.theta = model.theta;
  rep.n_layers = model.n_max;
  rep.b_size = opt.b_size;
  rep.stream_digest = stream_digest64(stream);

  for (const std::string& name : opt.methods) {
    MethodRun run;
    if (name == "crane") {
      const CraneModel capped = cap_model_to_budget(model, opt.budget);
      rep.n_layers = capped.n_max;
      run = run_crane(capped, stream, keys, truths, opt.b_size);
    } else if (name == "tcm") {
      TcmSketch sk(opt.budget, opt.seed);
      run = run_hash_sketch(sk, stream, keys, truths);
    } else if (name == "cms") {
      CountMinSketch sk(opt.budget, opt.seed);
      run = run_hash_sketch(sk, stream, keys, truths);
    } else if (name == "oracle") {
      run = run_oracle(stream, keys, truths);
    } else {
      throw std::invalid_argument("benchmark: unknown method '" + name + "'");
    }
    if (run.digest != rep.stream_digest)
      throw std::runtime_error("benchmark: method '" + name +
                               "' consumed a different stream (digest mismatch)");
    if (name != "oracle" && run.bytes > opt.budget)
      throw std::runtime_error("benchmark: method '" + name +
                               "' exceeded the byte budget");
    MethodReport mr;
    mr.name = name;
    mr.err = run.err;
    mr.bytes_used = run.bytes;
    mr.store_ops_per_sec = ops_per_sec(stream.size(), run.store_s);
    mr.query_ops_per_sec = ops_per_sec(keys.size(), run.query_s);
    mr.note = run.note;
    rep.methods.push_back(std::move(mr));
  }
  return rep;
}

void write_report_tsv(const BenchmarkReport& r, std::ostream& os) {
  os << "# seed=" << r.seed << "\tbudget=" << r.budget
     << "\tstream_length=" << r.stream_length
     << "\tdistinct_edges=" << r.distinct_edges << "\ttheta=" << r.theta
     << "\tn_layers=" << r.n_layers << "\tb_size=" << r.b_size
     << "\tstream_digest=" << std::hex << r.stream_digest << std::dec << "\n";
  os << "method\taae\tare\tbytes_used\tstore_ops_per_sec\tquery_ops_per_sec\n";
  os << std::setprecision(10);
  for (const MethodReport& m : r.methods)
    os << m.name << "\t" << m.err.aae << "\t" << m.err.are << "\t"
       << m.bytes_used << "\t" << std::setprecision(4) << m.store_ops_per_sec
       << "\t" << m.query_ops_per_sec << std::setprecision(10) << "\n";
}

void write_report_text(const BenchmarkReport& r, std::ostream& os) {
  os << "equal-memory benchmark report\n"
     << "=============================\n"
     << "seed:            " << r.seed << "\n"
     << "byte budget:     " << r.budget << "\n"
     << "stream length:   " << r.stream_length << "\n"
     << "distinct edges:  " << r.distinct_edges << "\n"
     << "theta:           " << r.theta << "\n"
     << "layers (N):      " << r.n_layers << "\n"
     << "batch size (b):  " << r.b_size << "\n"
     << "stream digest:   0x" << std::hex << r.stream_digest << std::dec
     << "\n\n"
     << "byte accounting: sketch state is charged at 32-bit counter width for\n"
     << "every method; the trained encoder/decoder is a shared model reused\n"
     << "across sketches and is not part of the per-sketch budget.\n"
     << "throughput figures are informational (single-threaded wall clock).\n";
  os << std::setprecision(10);
  for (const MethodReport& m : r.methods) {
    os << "\nmethod: " << m.name << "\n"
       << "  AAE:        " << m.err.aae << "\n"
       << "  ARE:        " << m.err.are << "  (over " << m.err.are_count
       << " nonzero-truth edges)\n"
       << "  bytes used: " << m.bytes_used << "\n"
       << "  store ops/s: " << std::setprecision(4) << m.store_ops_per_sec
       << "\n"
       << "  query ops/s: " << m.query_ops_per_sec << std::setprecision(10)
       << "\n";
    if (!m.note.empty()) os << "  note: " << m.note << "\n";
  }
}

double crane_stream_are(const CraneModel& model,
                        std::span<const EdgeUpdate> stream, std::size_t b_size,
                        CarryMode mode) {
  std::vector<EdgeKey> keys;
  std::vector<double> truths;
  collect_distinct(stream, keys, truths);
  CraneSketch sk(model, SketchConfig{b_size, mode, true}, 1);
  sk.ingest(stream);
  return metrics(sk.batch_query(keys), truths).are;
}

std::vector<ExpansionPoint> expansion_study(const CraneModel& model,
                                            std::span<const double> total_weights,
                                            std::uint64_t seed,
                                            std::size_t n_updates,
                                            std::size_t b_size) {
  if (total_weights.empty())
    throw std::invalid_argument("expansion_study: no sizes given");
  for (std::size_t i = 0; i < total_weights.size(); ++i) {
    if (total_weights[i] <= 0.0)
      throw std::invalid_argument("expansion_study: sizes must be positive");
    if (i && total_weights[i] <= total_weights[i - 1])
      throw std::invalid_argument("expansion_study: sizes must increase");
  }
  const std::vector<EdgeUpdate> base = zipf_edge_stream(
      n_updates, 1.1, std::max<std::size_t>(n_updates / 4, 1), 1ull << 20, seed);
  double base_total = 0.0;
  for (const EdgeUpdate& e : base) base_total += e.weight;

  std::vector<ExpansionPoint> out;
  out.reserve(total_weights.size());
  std::vector<EdgeUpdate> scaled(base);
  for (const double target : total_weights) {
    const double s = target / base_total;
    for (std::size_t i = 0; i < base.size(); ++i)
      scaled[i].weight = base[i].weight * s;
    CraneSketch sk(model, SketchConfig{b_size, CarryMode::minibatch, true}, 1);
    sk.ingest(scaled);
    out.push_back({target, sk.active_layers()});
  }
  return out;
}

}  // namespace crane
