#pragma once
// Property experiments validating the analytical claims behind the sketch:
// multi-layer collision decay, bottom-layer residual dominance, interference
// isolation, decoder weighting, and basis orthogonalization under training.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crane/sketch.hpp"

namespace crane {

struct TheoryResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double reference = 0.0;  // the bound or baseline the measurement is held to
  std::string detail;
};

// Monte-Carlo collision experiment over random edge pairs (u stored, v
// probed). Per-layer thresholds are calibrated on a separate sample so each
// layer fires at rate ~p; rates are then measured on n_eval fresh pairs.
// joint_rate[k-1] = P(layers 1..k all collide).
struct CollisionDecay {
  std::array<double, 3> layer_rate{};  // per-layer marginal rate on eval set
  std::array<double, 3> joint_rate{};  // cumulative-AND rate for k = 1,2,3
  double p = 0.0;                      // calibration target
  std::size_t n_eval = 0;
};
CollisionDecay collision_decay_experiment(const CraneModel& model,
                                          std::uint64_t seed,
                                          std::size_t n_calib,
                                          std::size_t n_eval, double p);

// Bottom-layer interference of a hierarchical sketch vs a flat single-layer
// sketch sharing the same layer-1 encoders, on light edges (truth < theta),
// against the analytic residual-mass fraction W_res / W_total.
struct IsolationResult {
  double hier_noise = 0.0;      // mean |q_1 - truth|, hierarchical, light edges
  double flat_noise = 0.0;      // mean |q_1 - truth|, flat N=1, light edges
  double measured_ratio = 0.0;  // hier_noise / flat_noise
  double analytic_ratio = 0.0;  // W_res / W_total from the exact oracle
  std::size_t n_light = 0;
};
IsolationResult isolation_experiment(const CraneModel& model,
                                     std::span<const EdgeUpdate> stream);

// Runs all five property experiments with sub-seeds derived from `seed`.
std::vector<TheoryResult> theory_suite(std::uint64_t seed);

inline bool all_pass(const std::vector<TheoryResult>& rs) {
  for (const auto& r : rs)
    if (!r.pass) return false;
  return !rs.empty();
}

}  // namespace crane
