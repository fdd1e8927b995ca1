#include "crane/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace crane {

void AdamW::step(const std::vector<Tensor*>& params,
                 const std::vector<const Tensor*>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adamw: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(m_[k]) || !g.same_shape(m_[k]))
      throw std::invalid_argument("adamw: shape mismatch");
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double& m = m_[k].v[i];
      double& v = v_[k].v[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g.v[i];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.v[i] -= cfg_.weight_decay * p.v[i] +
                cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace crane
