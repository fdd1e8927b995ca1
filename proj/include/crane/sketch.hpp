#pragma once
// Hierarchical sketch: store/query, sequential and mini-batch conservative
// carry, automatic expansion. Memories are f64 in RAM (quantized to f32 only
// at serialization time; the byte budget is defined over the f32 state).

#include <cstdint>
#include <span>
#include <vector>

#include "crane/encoder.hpp"
#include "crane/tensor.hpp"

namespace crane {

struct EdgeUpdate {
  std::uint32_t origin = 0;
  std::uint32_t destination = 0;
  double weight = 0.0;
};

struct EdgeKey {
  std::uint32_t origin = 0;
  std::uint32_t destination = 0;
  bool operator==(const EdgeKey&) const = default;
};

enum class CarryMode { sequential, minibatch };
enum class FluxDirection { out, in };

// Trained state shared across sketches: per-layer encoder pairs + decoder.
struct CraneModel {
  std::uint32_t n_max = 4;
  double theta = 4.0;
  double tau = 4.0;   // expansion threshold, default = theta
  double eps = 1e-6;
  std::vector<EncoderNet> enc_o, enc_d;  // one per layer
  Tensor dec_w;  // n_max x 1, init theta^(i-1)
  Tensor dec_b;  // 1 x 1

  // tied_layers makes every layer share one encoder init (same sub-seed),
  // which collapses the per-layer bases onto each other; used by conservation
  // tests where the theta-weighted raw cell sum must be an exact invariant.
  static CraneModel init(std::uint32_t n_max, double theta, double tau,
                         double eps, std::uint64_t seed,
                         bool tied_layers = false);

  // All trainable tensors, fixed order: per layer (origin then destination
  // encoder, 10 tensors each), then decoder w, b.
  std::vector<Tensor*> param_list();
  std::vector<const Tensor*> param_list() const;
};

struct SketchConfig {
  std::size_t b_size = 4;
  CarryMode mode = CarryMode::minibatch;
  bool auto_expand = true;
};

class CraneSketch {
 public:
  CraneSketch(const CraneModel& model, SketchConfig cfg,
              std::uint32_t active_layers = 1);

  void store(const EdgeUpdate& e);
  void store_batch(std::span<const EdgeUpdate> batch);
  // Feeds the stream through store (sequential mode) or b_size-sized
  // store_batch calls (minibatch mode).
  void ingest(std::span<const EdgeUpdate> stream);

  // w^T q + b over active layers; const and state-pure.
  double query(EdgeKey e) const;
  // Per-layer min-ratio readouts, length n_max, inactive layers 0.
  std::vector<double> query_vector(EdgeKey e) const;
  // Batched query path: one encoder forward per (layer, role) over distinct
  // node ids, scans parallelized per edge.
  std::vector<double> batch_query(std::span<const EdgeKey> edges) const;
  // Per-layer readouts for many edges (n_edges x n_max, row-major).
  Tensor batch_query_vectors(std::span<const EdgeKey> edges) const;

  double node_flux(std::uint32_t node, std::span<const EdgeKey> incident,
                   FluxDirection dir) const;

  void expand_if_saturated();

  std::uint32_t active_layers() const {
    return static_cast<std::uint32_t>(memories_.size());
  }
  const Tensor& memory(std::size_t i) const { return memories_[i]; }
  Tensor& memory_mut(std::size_t i) { return memories_[i]; }
  const CraneModel& model() const { return *model_; }
  const SketchConfig& config() const { return cfg_; }

  // Copy for concurrent read-only querying (copy-on-write boundary).
  CraneSketch snapshot() const { return *this; }

  // theta-weighted deposited mass in basis-pattern units, maintained per
  // carry/store event; equals total injected weight when carries conserve.
  double pattern_mass_weighted() const;
  const std::vector<double>& pattern_mass() const { return pattern_mass_; }

  std::uint64_t sketch_state_bytes() const {
    return static_cast<std::uint64_t>(memories_.size()) * kEmbedDim *
           kEmbedDim * sizeof(float);
  }

 private:
  // Embeddings of one node for layers [0, n_layers) as rows of a
  // (n_layers x 64) matrix.
  Tensor embed_layers(std::uint32_t id, bool origin_role,
                      std::uint32_t n_layers) const;
  void carry_chain_sequential(const EdgeUpdate& e, const Tensor& eo,
                              const Tensor& ed);
  void carry_chain_minibatch(std::span<const EdgeUpdate> batch,
                             Tensor agg_layer1, double batch_weight);
  void clamp_nonneg(Tensor& m);

  const CraneModel* model_;
  SketchConfig cfg_;
  std::vector<Tensor> memories_;
  std::vector<double> pattern_mass_;
};

}  // namespace crane
