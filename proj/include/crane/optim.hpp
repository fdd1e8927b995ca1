#pragma once
// AdamW with decoupled weight decay: the decay term is wd * param, applied
// independently of the learning rate (so lr=0 degenerates to a pure decay
// map), alongside the bias-corrected Adam moment update.

#include <cstdint>
#include <vector>

#include "crane/tensor.hpp"

namespace crane {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamWConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->rows, p->cols);
      v_.emplace_back(p->rows, p->cols);
    }
  }

  // params/grads must match the constructor's layout, same order every step.
  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

  std::uint64_t t() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace crane
