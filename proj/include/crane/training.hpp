#pragma once
// Synthetic meta-task generation and the offline training loop: store a
// generated stream, query its distinct edges, minimize MAE against the exact
// aggregates, AdamW over the averaged task loss.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/optim.hpp"
#include "crane/sketch.hpp"

namespace crane {

// Loss went non-finite; mapped to exit code 3 by the CLI.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WeightDist { zipf, uniform };

struct TaskConfig {
  std::uint64_t gamma = 60000;  // max stream length
  double alpha_min = 0.3, alpha_max = 0.8;
  double w_mult_min = 5.0, w_mult_max = 50.0;  // W_t in [5 L, 50 L], log-uniform
  std::uint64_t id_space = 1ull << 20;
  WeightDist dist = WeightDist::zipf;
};

struct Task {
  std::vector<EdgeUpdate> support;
  std::vector<EdgeKey> queries;  // distinct edges, first-appearance order
  std::vector<double> truths;    // exact aggregates aligned with queries
};

struct TrainConfig {
  std::uint64_t total_tasks = 2000;
  std::uint32_t steps_per_task = 50;
  std::uint32_t task_batch = 4;  // B
  double lr = 5e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8, weight_decay = 1e-2;
  std::uint32_t n_max = 4;
  double theta = 4.0, tau = 4.0, eps = 1e-6;
  std::size_t b_size = 4;
  std::uint64_t seed = 1;
};

// p_k proportional to k^(-alpha) over ranks 1..K, normalized.
std::vector<double> zipf_weights(double alpha, std::size_t K);

// Inverse-CDF sampler over an explicit probability vector; returns rank 1..K.
std::size_t sample_rank(const std::vector<double>& probs, double u01);

Task generate_task(const TaskConfig& cfg, std::uint64_t seed);

// Differentiable store-then-query pass over one task. Accumulates
// grad_scale * dLoss/dparam into `grads` (aligned with model.param_list())
// and returns the task loss. All n_max layers are active; memories start at
// zero. BN runs in train mode over the task's distinct nodes.
double run_task(CraneModel& model, const Task& task, std::size_t b_size,
                std::vector<Tensor>& grads, double grad_scale);

// Convenience: loss only (still updates BN running stats, as training does).
double run_task_loss(CraneModel& model, const Task& task, std::size_t b_size);

struct TrainResult {
  CraneModel model;
  std::vector<std::pair<std::uint64_t, double>> trace;  // (step, mean loss)
};

// The model train() starts from for a given config (exposed so experiments
// can measure pre-training state).
CraneModel initial_model(const TrainConfig& cfg);

// step_cb, if set, is called after every optimizer step (step, mean_loss).
TrainResult train(
    const TrainConfig& cfg, const TaskConfig& task_cfg,
    const std::function<void(std::uint64_t, double)>& step_cb = {});

}  // namespace crane
