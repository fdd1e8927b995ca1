#include "crane/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "crane/kernels.hpp"

namespace crane {

namespace {

// Kaiming-style fan-in uniform for ReLU nets: U(-sqrt(6/fan_in), +...).
void fill_kaiming(Tensor& w, std::size_t fan_in, Xoshiro256ss& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& x : w.v) x = rng.uniform(-bound, bound);
}

void fill_bias(Tensor& b, std::size_t fan_in, Xoshiro256ss& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : b.v) x = rng.uniform(-bound, bound);
}

}  // namespace

void EncoderNet::init(Xoshiro256ss& rng) {
  fill_kaiming(w1, 32, rng);
  fill_bias(b1, 32, rng);
  fill_kaiming(w2, 16, rng);
  fill_bias(b2, 16, rng);
  fill_kaiming(w3, 36, rng);
  fill_bias(b3, 36, rng);
  g1 = Tensor::full(1, 16, 1.0);
  be1 = Tensor(1, 16);
  g2 = Tensor::full(1, 36, 1.0);
  be2 = Tensor(1, 36);
  bn1 = BnState(16);
  bn2 = BnState(36);
}

void EncoderNet::forward_infer(const Tensor& codes, Tensor& out) const {
  const std::size_t n = codes.rows;
  if (codes.cols != kCodeBits)
    throw std::invalid_argument("encoder: codes must have 32 columns");
  Tensor h1(n, 16), h2(n, 36);
  kernels::gemm(codes.data(), w1.data(), h1.data(), n, 32, 16, false, false,
                false, kernels::Exec::serial);
  for (std::size_t j = 0; j < 16; ++j) {
    const double invstd = 1.0 / std::sqrt(bn1.var[j] + Tape::kBnVarEps);
    const double scale = g1.v[j] * invstd;
    const double shift = be1.v[j] - scale * bn1.mean[j] + scale * b1.v[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double y = h1.at(i, j) * scale + shift;
      h1.at(i, j) = y > 0.0 ? y : 0.0;
    }
  }
  kernels::gemm(h1.data(), w2.data(), h2.data(), n, 16, 36, false, false,
                false, kernels::Exec::serial);
  for (std::size_t j = 0; j < 36; ++j) {
    const double invstd = 1.0 / std::sqrt(bn2.var[j] + Tape::kBnVarEps);
    const double scale = g2.v[j] * invstd;
    const double shift = be2.v[j] - scale * bn2.mean[j] + scale * b2.v[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double y = h2.at(i, j) * scale + shift;
      h2.at(i, j) = y > 0.0 ? y : 0.0;
    }
  }
  if (out.rows != n || out.cols != kEmbedDim) out = Tensor(n, kEmbedDim);
  kernels::gemm(h2.data(), w3.data(), out.data(), n, 36, 64, false, false,
                false, kernels::Exec::serial);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 64; ++j) {
      double& y = out.at(i, j);
      y = y + b3.v[j];
      y = y > 0.0 ? y : 0.0;
    }
}

ValueId EncoderNet::forward_tape(Tape& tape, ValueId codes,
                                 const std::array<ValueId, 10>& p, bool train) {
  // p order matches param_list: w1,b1,g1,be1,w2,b2,g2,be2,w3,b3
  const bool t1 = train && tape.val(codes).rows >= 2;
  ValueId x = tape.add_rowvec(tape.matmul(codes, p[0]), p[1]);
  x = tape.relu(tape.batchnorm(x, p[2], p[3], bn1, t1));
  x = tape.add_rowvec(tape.matmul(x, p[4]), p[5]);
  x = tape.relu(tape.batchnorm(x, p[6], p[7], bn2, t1));
  x = tape.relu(tape.add_rowvec(tape.matmul(x, p[8]), p[9]));
  return x;
}

std::vector<Tensor*> EncoderNet::param_list() {
  return {&w1, &b1, &g1, &be1, &w2, &b2, &g2, &be2, &w3, &b3};
}

std::vector<const Tensor*> EncoderNet::param_list() const {
  return {&w1, &b1, &g1, &be1, &w2, &b2, &g2, &be2, &w3, &b3};
}

void embed_ids_infer(const EncoderNet& enc,
                     const std::vector<std::uint32_t>& ids, Tensor& out) {
  Tensor codes(ids.size(), kCodeBits);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto c = binary_encode(ids[i]);
    for (std::size_t k = 0; k < kCodeBits; ++k) codes.at(i, k) = c[k];
  }
  enc.forward_infer(codes, out);
}

Tensor basis(const Tensor& e_o, const Tensor& e_d, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("basis: eps must be > 0");
  Tensor a(e_o.numel(), e_d.numel());
  for (std::size_t p = 0; p < e_o.numel(); ++p)
    for (std::size_t q = 0; q < e_d.numel(); ++q)
      a.v[p * e_d.numel() + q] = e_o.v[p] * e_d.v[q] + eps;
  return a;
}

}  // namespace crane
