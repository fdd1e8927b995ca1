#include "crane/tape.hpp"

#include <stdexcept>

namespace crane {

namespace {

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

ValueId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

Tensor& Tape::grad(ValueId id) {
  Node& n = nodes_[id];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

ValueId Tape::leaf(Tensor v, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  check(A.cols == B.rows, "matmul: inner dimensions disagree");
  Node n;
  n.op = Op::matmul;
  n.in[0] = a;
  n.in[1] = b;
  n.n_in = 2;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = Tensor(A.rows, B.cols);
  kernels::gemm(A.data(), B.data(), n.value.data(), A.rows, A.cols, B.cols,
                false, false, false, exec_);
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  check(A.same_shape(B), "add: shape mismatch");
  Node n;
  n.op = Op::add;
  n.in[0] = a;
  n.in[1] = b;
  n.n_in = 2;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.v[i] += B.v[i];
  return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  check(A.same_shape(B), "sub: shape mismatch");
  Node n;
  n.op = Op::sub;
  n.in[0] = a;
  n.in[1] = b;
  n.n_in = 2;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = A;
  for (std::size_t i = 0; i < B.numel(); ++i) n.value.v[i] -= B.v[i];
  return push(std::move(n));
}

ValueId Tape::scale(ValueId a, double c) {
  Node n;
  n.op = Op::scale;
  n.in[0] = a;
  n.n_in = 1;
  n.s0 = c;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = nodes_[a].value;
  for (auto& x : n.value.v) x *= c;
  return push(std::move(n));
}

ValueId Tape::add_scalar(ValueId a, double c) {
  Node n;
  n.op = Op::add_scalar;
  n.in[0] = a;
  n.n_in = 1;
  n.s0 = c;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = nodes_[a].value;
  for (auto& x : n.value.v) x += c;
  return push(std::move(n));
}

ValueId Tape::add_rowvec(ValueId x, ValueId bias) {
  const Tensor& X = nodes_[x].value;
  const Tensor& B = nodes_[bias].value;
  check(B.rows == 1 && B.cols == X.cols, "add_rowvec: bias must be 1 x C");
  Node n;
  n.op = Op::add_rowvec;
  n.in[0] = x;
  n.in[1] = bias;
  n.n_in = 2;
  n.requires_grad = nodes_[x].requires_grad || nodes_[bias].requires_grad;
  n.value = X;
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < X.cols; ++j) n.value.at(i, j) += B.v[j];
  return push(std::move(n));
}

ValueId Tape::relu(ValueId x) {
  Node n;
  n.op = Op::relu;
  n.in[0] = x;
  n.n_in = 1;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = nodes_[x].value;
  for (auto& v : n.value.v) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

ValueId Tape::batchnorm(ValueId x, ValueId gamma, ValueId beta, BnState& state,
                        bool train, double momentum) {
  const Tensor& X = nodes_[x].value;
  const Tensor& G = nodes_[gamma].value;
  const Tensor& B = nodes_[beta].value;
  const std::size_t d = X.cols, nrows = X.rows;
  check(G.numel() == d && B.numel() == d, "batchnorm: gamma/beta size");
  check(state.mean.size() == d && state.var.size() == d,
        "batchnorm: state size");
  if (train) check(nrows >= 2, "batchnorm: train mode needs batch size >= 2");

  Node n;
  n.op = Op::batchnorm;
  n.in[0] = x;
  n.in[1] = gamma;
  n.in[2] = beta;
  n.n_in = 3;
  n.bn_train = train;
  n.requires_grad = nodes_[x].requires_grad || nodes_[gamma].requires_grad ||
                    nodes_[beta].requires_grad;
  n.value = Tensor(nrows, d);
  n.aux.resize(2 * d);  // mean | invstd as used by this forward

  for (std::size_t j = 0; j < d; ++j) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (std::size_t i = 0; i < nrows; ++i) s += X.at(i, j);
      mean = s / static_cast<double>(nrows);
      double sq = 0.0;
      for (std::size_t i = 0; i < nrows; ++i) {
        const double c = X.at(i, j) - mean;
        sq += c * c;
      }
      var = sq / static_cast<double>(nrows);
      state.mean[j] = (1.0 - momentum) * state.mean[j] + momentum * mean;
      state.var[j] = (1.0 - momentum) * state.var[j] + momentum * var;
    } else {
      mean = state.mean[j];
      var = state.var[j];
    }
    const double invstd = 1.0 / std::sqrt(var + kBnVarEps);
    n.aux[j] = mean;
    n.aux[d + j] = invstd;
    for (std::size_t i = 0; i < nrows; ++i)
      n.value.at(i, j) = G.v[j] * (X.at(i, j) - mean) * invstd + B.v[j];
  }
  return push(std::move(n));
}

ValueId Tape::outer(ValueId u, ValueId v) {
  const Tensor& U = nodes_[u].value;
  const Tensor& V = nodes_[v].value;
  check(U.rows == 1 || U.cols == 1, "outer: u must be a vector");
  check(V.rows == 1 || V.cols == 1, "outer: v must be a vector");
  Node n;
  n.op = Op::outer;
  n.in[0] = u;
  n.in[1] = v;
  n.n_in = 2;
  n.requires_grad = nodes_[u].requires_grad || nodes_[v].requires_grad;
  n.value = Tensor(U.numel(), V.numel());
  for (std::size_t p = 0; p < U.numel(); ++p)
    for (std::size_t q = 0; q < V.numel(); ++q)
      n.value.v[p * V.numel() + q] = U.v[p] * V.v[q];
  return push(std::move(n));
}

ValueId Tape::min_ratio(ValueId m, ValueId a) {
  const Tensor& M = nodes_[m].value;
  const Tensor& A = nodes_[a].value;
  check(M.same_shape(A), "min_ratio: shape mismatch");
  check(M.numel() > 0, "min_ratio: empty input");
  for (double x : A.v)
    if (!(x > 0.0)) throw std::domain_error("min_ratio: denominator <= 0");
  const auto r = kernels::min_ratio(M.data(), A.data(), M.numel());
  Node n;
  n.op = Op::min_ratio;
  n.in[0] = m;
  n.in[1] = a;
  n.n_in = 2;
  n.requires_grad = nodes_[m].requires_grad || nodes_[a].requires_grad;
  n.value = Tensor(1, 1, {r.value});
  n.idx0 = r.index;
  n.s0 = r.m_star;
  n.s1 = r.a_star;
  return push(std::move(n));
}

ValueId Tape::mae_loss(ValueId pred, ValueId target) {
  const Tensor& P = nodes_[pred].value;
  const Tensor& T = nodes_[target].value;
  check(P.same_shape(T), "mae_loss: shape mismatch");
  check(P.numel() > 0, "mae_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < P.numel(); ++i) s += std::abs(P.v[i] - T.v[i]);
  Node n;
  n.op = Op::mae_loss;
  n.in[0] = pred;
  n.in[1] = target;
  n.n_in = 2;
  n.requires_grad = nodes_[pred].requires_grad || nodes_[target].requires_grad;
  n.value = Tensor(1, 1, {s / static_cast<double>(P.numel())});
  return push(std::move(n));
}

ValueId Tape::sum(ValueId x) {
  Node n;
  n.op = Op::sum;
  n.in[0] = x;
  n.n_in = 1;
  n.requires_grad = nodes_[x].requires_grad;
  n.value = Tensor(1, 1, {nodes_[x].value.sum()});
  return push(std::move(n));
}

ValueId Tape::custom(Tensor value, const std::vector<ValueId>& inputs,
                     CustomBackward backward) {
  check(inputs.size() <= 3, "custom: at most 3 tracked inputs");
  Node n;
  n.op = Op::custom;
  n.n_in = static_cast<std::uint8_t>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) n.in[i] = inputs[i];
  n.requires_grad = true;
  n.value = std::move(value);
  n.custom_backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(ValueId root) {
  check(nodes_[root].value.numel() == 1, "backward: root must be scalar");
  grad(root).v[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.numel() == 0 || !n.requires_grad) continue;
    if (n.op != Op::leaf) {
      step_back(n);
      n.grad = Tensor();  // consumed; leaves keep theirs for the caller
    }
  }
}

void Tape::step_back(Node& n) {
  const Tensor& g = n.grad;
  auto rgrad = [&](int slot) -> Tensor* {
    Node& in = nodes_[n.in[slot]];
    if (!in.requires_grad) return nullptr;
    return &grad(n.in[slot]);
  };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const Tensor& A = nodes_[n.in[0]].value;
      const Tensor& B = nodes_[n.in[1]].value;
      if (Tensor* da = rgrad(0))
        kernels::gemm(g.data(), B.data(), da->data(), g.rows, g.cols, B.rows,
                      false, true, true, exec_);
      if (Tensor* db = rgrad(1))
        kernels::gemm(A.data(), g.data(), db->data(), A.cols, A.rows, g.cols,
                      true, false, true, exec_);
      break;
    }
    case Op::add: {
      for (int s = 0; s < 2; ++s)
        if (Tensor* d = rgrad(s))
          for (std::size_t i = 0; i < g.numel(); ++i) d->v[i] += g.v[i];
      break;
    }
    case Op::sub: {
      if (Tensor* d = rgrad(0))
        for (std::size_t i = 0; i < g.numel(); ++i) d->v[i] += g.v[i];
      if (Tensor* d = rgrad(1))
        for (std::size_t i = 0; i < g.numel(); ++i) d->v[i] -= g.v[i];
      break;
    }
    case Op::scale: {
      if (Tensor* d = rgrad(0))
        for (std::size_t i = 0; i < g.numel(); ++i) d->v[i] += n.s0 * g.v[i];
      break;
    }
    case Op::add_scalar: {
      if (Tensor* d = rgrad(0))
        for (std::size_t i = 0; i < g.numel(); ++i) d->v[i] += g.v[i];
      break;
    }
    case Op::add_rowvec: {
      if (Tensor* dx = rgrad(0))
        for (std::size_t i = 0; i < g.numel(); ++i) dx->v[i] += g.v[i];
      if (Tensor* db = rgrad(1))
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) db->v[j] += g.at(i, j);
      break;
    }
    case Op::relu: {
      if (Tensor* dx = rgrad(0))
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (n.value.v[i] > 0.0) dx->v[i] += g.v[i];
      break;
    }
    case Op::batchnorm: {
      const Tensor& X = nodes_[n.in[0]].value;
      const Tensor& G = nodes_[n.in[1]].value;
      const std::size_t d = X.cols, nrows = X.rows;
      const double* mean = n.aux.data();
      const double* invstd = n.aux.data() + d;
      Tensor* dx = rgrad(0);
      Tensor* dgamma = rgrad(1);
      Tensor* dbeta = rgrad(2);
      for (std::size_t j = 0; j < d; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < nrows; ++i) {
          const double dy = g.at(i, j);
          const double xhat = (X.at(i, j) - mean[j]) * invstd[j];
          sum_dy += dy;
          sum_dy_xhat += dy * xhat;
        }
        if (dgamma) dgamma->v[j] += sum_dy_xhat;
        if (dbeta) dbeta->v[j] += sum_dy;
        if (!dx) continue;
        if (n.bn_train) {
          const double inv_n = 1.0 / static_cast<double>(nrows);
          for (std::size_t i = 0; i < nrows; ++i) {
            const double dy = g.at(i, j);
            const double xhat = (X.at(i, j) - mean[j]) * invstd[j];
            dx->at(i, j) += G.v[j] * invstd[j] *
                            (dy - inv_n * sum_dy - inv_n * xhat * sum_dy_xhat);
          }
        } else {
          for (std::size_t i = 0; i < nrows; ++i)
            dx->at(i, j) += G.v[j] * invstd[j] * g.at(i, j);
        }
      }
      break;
    }
    case Op::outer: {
      const Tensor& U = nodes_[n.in[0]].value;
      const Tensor& V = nodes_[n.in[1]].value;
      const std::size_t H = U.numel(), W = V.numel();
      if (Tensor* du = rgrad(0))
        for (std::size_t p = 0; p < H; ++p) {
          double acc = 0.0;
          for (std::size_t q = 0; q < W; ++q) acc += g.v[p * W + q] * V.v[q];
          du->v[p] += acc;
        }
      if (Tensor* dv = rgrad(1))
        for (std::size_t p = 0; p < H; ++p)
          for (std::size_t q = 0; q < W; ++q)
            dv->v[q] += g.v[p * W + q] * U.v[p];
      break;
    }
    case Op::min_ratio: {
      const double gy = g.v[0];
      if (Tensor* dm = rgrad(0)) dm->v[n.idx0] += gy / n.s1;
      if (Tensor* da = rgrad(1)) da->v[n.idx0] -= gy * n.s0 / (n.s1 * n.s1);
      break;
    }
    case Op::mae_loss: {
      const Tensor& P = nodes_[n.in[0]].value;
      const Tensor& T = nodes_[n.in[1]].value;
      const double gy = g.v[0] / static_cast<double>(P.numel());
      if (Tensor* dp = rgrad(0))
        for (std::size_t i = 0; i < P.numel(); ++i) {
          const double diff = P.v[i] - T.v[i];
          if (diff > 0.0)
            dp->v[i] += gy;
          else if (diff < 0.0)
            dp->v[i] -= gy;
        }
      if (Tensor* dt = rgrad(1))
        for (std::size_t i = 0; i < P.numel(); ++i) {
          const double diff = P.v[i] - T.v[i];
          if (diff > 0.0)
            dt->v[i] -= gy;
          else if (diff < 0.0)
            dt->v[i] += gy;
        }
      break;
    }
    case Op::sum: {
      if (Tensor* dx = rgrad(0))
        for (auto& x : dx->v) x += g.v[0];
      break;
    }
    case Op::custom:
      n.custom_backward(*this, n);
      break;
  }
}

}  // namespace crane
