#include "crane/training.hpp"

#include <cmath>
#include <unordered_map>

#include "crane/baselines.hpp"
#include "crane/rng.hpp"

namespace crane {

std::vector<double> zipf_weights(double alpha, std::size_t K) {
  if (K == 0) throw std::invalid_argument("zipf_weights: K must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("zipf_weights: alpha < 0");
  std::vector<double> p(K);
  double z = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    p[k - 1] = std::pow(static_cast<double>(k), -alpha);
    z += p[k - 1];
  }
  for (auto& x : p) x /= z;
  return p;
}

std::size_t sample_rank(const std::vector<double>& probs, double u01) {
  // inverse CDF walkless form would be O(K); keep the cumulative scan simple
  // since callers presample the cumulative once
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u01 < acc) return k + 1;
  }
  return probs.size();
}

namespace {

// cumulative table + binary search, for the hot path in generate_task
std::size_t sample_rank_cdf(const std::vector<double>& cdf, double u01) {
  std::size_t lo = 0, hi = cdf.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (u01 < cdf[mid])
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo + 1;
}

}  // namespace

Task generate_task(const TaskConfig& cfg, std::uint64_t seed) {
  if (cfg.gamma < 1) throw std::invalid_argument("generate_task: gamma < 1");
  if (cfg.alpha_min < 0.0 || cfg.alpha_min > cfg.alpha_max)
    throw std::invalid_argument("generate_task: bad alpha range");
  if (!(cfg.w_mult_min > 0.0) || cfg.w_mult_min > cfg.w_mult_max)
    throw std::invalid_argument("generate_task: bad weight multiplier range");
  Xoshiro256ss rng(seed);
  const auto L = static_cast<std::size_t>(rng.range(1, cfg.gamma));

  Task t;
  t.support.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    t.support[i].origin = static_cast<std::uint32_t>(rng.below(cfg.id_space));
    t.support[i].destination =
        static_cast<std::uint32_t>(rng.below(cfg.id_space));
  }

  // raw profile: i.i.d. bounded-Zipf ranks over 1..L, or uniform(0,1) draws
  std::vector<double> raw(L);
  if (cfg.dist == WeightDist::zipf) {
    const double alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);
    std::vector<double> cdf = zipf_weights(alpha, L);
    for (std::size_t k = 1; k < L; ++k) cdf[k] += cdf[k - 1];
    cdf[L - 1] = 1.0;  // guard the tail against rounding
    for (std::size_t i = 0; i < L; ++i)
      raw[i] = static_cast<double>(sample_rank_cdf(cdf, rng.uniform()));
  } else {
    for (std::size_t i = 0; i < L; ++i) raw[i] = rng.uniform();
  }
  double raw_sum = 0.0;
  for (double x : raw) raw_sum += x;
  const double total_w = rng.log_uniform(cfg.w_mult_min * static_cast<double>(L),
                                         cfg.w_mult_max * static_cast<double>(L));
  for (std::size_t i = 0; i < L; ++i)
    t.support[i].weight = total_w * (raw[i] / raw_sum);

  // query set: all distinct edges with exact cumulative weights
  std::unordered_map<std::uint64_t, std::uint32_t> idx;
  idx.reserve(L * 2);
  for (const auto& e : t.support) {
    const std::uint64_t key = edge_key64(e.origin, e.destination);
    auto [it, fresh] =
        idx.try_emplace(key, static_cast<std::uint32_t>(t.queries.size()));
    if (fresh) {
      t.queries.push_back({e.origin, e.destination});
      t.truths.push_back(0.0);
    }
    t.truths[it->second] += e.weight;
  }
  return t;
}

CraneModel initial_model(const TrainConfig& cfg) {
  SplitMix64 seeder(cfg.seed);
  const std::uint64_t model_seed = seeder.next();
  return CraneModel::init(cfg.n_max, cfg.theta, cfg.tau, cfg.eps, model_seed);
}

TrainResult train(const TrainConfig& cfg, const TaskConfig& task_cfg,
                  const std::function<void(std::uint64_t, double)>& step_cb) {
  SplitMix64 seeder(cfg.seed);
  seeder.next();  // model seed, consumed by initial_model
  const std::uint64_t task_stream_seed = seeder.next();

  TrainResult out{initial_model(cfg), {}};
  CraneModel& model = out.model;
  auto params = model.param_list();
  AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.beta1 = cfg.beta1;
  oc.beta2 = cfg.beta2;
  oc.eps = cfg.adam_eps;
  oc.weight_decay = cfg.weight_decay;
  AdamW opt(oc, params);

  std::vector<Tensor> grads;
  for (const Tensor* p : params) grads.emplace_back(p->rows, p->cols);
  std::vector<const Tensor*> grad_ptrs;
  for (const Tensor& g : grads) grad_ptrs.push_back(&g);

  SplitMix64 task_seeder(task_stream_seed);
  std::uint64_t tasks_done = 0, global_step = 0;
  while (tasks_done < cfg.total_tasks) {
    const auto batch_n = static_cast<std::uint32_t>(
        std::min<std::uint64_t>(cfg.task_batch, cfg.total_tasks - tasks_done));
    std::vector<Task> batch;
    batch.reserve(batch_n);
    for (std::uint32_t b = 0; b < batch_n; ++b)
      batch.push_back(generate_task(task_cfg, task_seeder.next()));

    for (std::uint32_t s = 0; s < cfg.steps_per_task; ++s) {
      for (Tensor& g : grads)
        std::fill(g.v.begin(), g.v.end(), 0.0);
      double mean_loss = 0.0;
      for (const Task& t : batch)
        mean_loss += run_task(model, t, cfg.b_size, grads, 1.0 / batch_n);
      mean_loss /= batch_n;
      if (!std::isfinite(mean_loss))
        throw NumericFailure("training loss is not finite at step " +
                             std::to_string(global_step + 1));
      opt.step(params, grad_ptrs);
      ++global_step;
      out.trace.emplace_back(global_step, mean_loss);
      if (step_cb) step_cb(global_step, mean_loss);
    }
    tasks_done += batch_n;
  }
  return out;
}

}  // namespace crane
