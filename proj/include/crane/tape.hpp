#pragma once
// Reverse-mode tape over dense f64 tensors. Deliberately small: just the op
// set the model needs (MLP encoders, rank-one memory updates, min-ratio
// readout, MAE loss) plus a custom-node hook that lets the sketch recorder
// splice its own backward into the sweep.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "crane/kernels.hpp"
#include "crane/tensor.hpp"

namespace crane {

using ValueId = std::uint32_t;

// BatchNorm running statistics; owned by the model, mutated by train-mode
// forwards, snapshotted per node so later mutation can't corrupt backward.
struct BnState {
  std::vector<double> mean, var;
  explicit BnState(std::size_t d = 0) : mean(d, 0.0), var(d, 1.0) {}
};

enum class Op : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  scale,
  add_scalar,
  add_rowvec,
  relu,
  batchnorm,
  outer,
  min_ratio,
  mae_loss,
  sum,
  custom,
};

struct Node;
class Tape;
using CustomBackward = std::function<void(Tape&, Node&)>;

struct Node {
  Op op = Op::leaf;
  ValueId in[3] = {0, 0, 0};
  std::uint8_t n_in = 0;
  bool requires_grad = false;
  bool bn_train = false;
  Tensor value;
  Tensor grad;               // allocated on first touch during backward
  double s0 = 0.0, s1 = 0.0; // scalar payload (scale coef, min_ratio m*/a*)
  std::size_t idx0 = 0;      // min_ratio argmin (flat, row-major)
  std::vector<double> aux;   // batchnorm per-column mean|invstd snapshot
  CustomBackward custom_backward;
};

// floor(x / theta) clipped at zero, as a plain double function: results feed
// the tape only as constants, so no gradient ever flows through it.
// The quotient gets a hair of slack (1e-9 relative + absolute) so that
// mathematically exact carry boundaries survive accumulated float rounding;
// without it, a memory holding exactly theta patterns can read as
// theta*(1-1ulp) and silently miss its carry.
inline double floor_div_clip(double x, double theta) {
  const double q = x / theta;
  const double t = std::floor(q * (1.0 + 1e-9) + 1e-9);
  return t > 0.0 ? t : 0.0;
}

class Tape {
 public:
  explicit Tape(kernels::Exec ex = kernels::Exec::parallel) : exec_(ex) {}

  ValueId leaf(Tensor v, bool requires_grad);
  ValueId matmul(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId add_scalar(ValueId a, double c);
  ValueId add_rowvec(ValueId x, ValueId bias);  // bias is 1 x C
  ValueId relu(ValueId x);
  ValueId batchnorm(ValueId x, ValueId gamma, ValueId beta, BnState& state,
                    bool train, double momentum = 0.1);
  ValueId outer(ValueId u, ValueId v);
  ValueId min_ratio(ValueId m, ValueId a);
  ValueId mae_loss(ValueId pred, ValueId target);
  ValueId sum(ValueId x);
  ValueId custom(Tensor value, const std::vector<ValueId>& inputs,
                 CustomBackward backward);

  // Seeds d(root)/d(root) = 1 and sweeps the whole tape in reverse creation
  // order. Non-leaf grads are released once consumed.
  void backward(ValueId root);

  const Tensor& val(ValueId id) const { return nodes_[id].value; }
  Tensor& grad(ValueId id);
  Node& node(ValueId id) { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  kernels::Exec exec() const { return exec_; }

  static constexpr double kBnVarEps = 1e-5;  // variance floor inside sqrt

 private:
  ValueId push(Node n);
  void step_back(Node& n);

  std::vector<Node> nodes_;
  kernels::Exec exec_;
};

}  // namespace crane
