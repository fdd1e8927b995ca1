#pragma once
// Per-layer node encoders: 32-bit LSB-first binary code -> MLP
// (32-16-BN-ReLU, 16-36-BN-ReLU, 36-64-ReLU) -> non-negative 64-vector.
// Each memory layer owns two independent encoders (origin / destination).

#include <array>
#include <cstdint>
#include <vector>

#include "crane/rng.hpp"
#include "crane/tape.hpp"
#include "crane/tensor.hpp"

namespace crane {

inline constexpr std::size_t kCodeBits = 32;
inline constexpr std::size_t kEmbedDim = 64;
inline constexpr std::array<std::size_t, 4> kMlpDims = {32, 16, 36, 64};

// bit k (LSB-first) of id becomes entry k
inline std::array<double, kCodeBits> binary_encode(std::uint32_t id) {
  std::array<double, kCodeBits> code;
  for (std::size_t k = 0; k < kCodeBits; ++k)
    code[k] = static_cast<double>((id >> k) & 1u);
  return code;
}

struct EncoderNet {
  // weights stored input-major (in x out) so forward is codes @ W
  Tensor w1{32, 16}, b1{1, 16}, g1{1, 16}, be1{1, 16};
  Tensor w2{16, 36}, b2{1, 36}, g2{1, 36}, be2{1, 36};
  Tensor w3{36, 64}, b3{1, 64};
  BnState bn1{16}, bn2{36};

  void init(Xoshiro256ss& rng);

  // In-place inference forward for a batch of codes (rows x 32), running
  // statistics only; out must be rows x 64.
  void forward_infer(const Tensor& codes, Tensor& out) const;

  // Tape forward in the requested mode; returns the embedding matrix node.
  // Parameter leaves are created by the caller (see param_list ordering).
  ValueId forward_tape(Tape& tape, ValueId codes,
                       const std::array<ValueId, 10>& params, bool train);

  // Trainable tensors in serialization order:
  // w1,b1,g1,be1,w2,b2,g2,be2,w3,b3
  std::vector<Tensor*> param_list();
  std::vector<const Tensor*> param_list() const;
};

// Fills `out` (n x 64) with inference-mode embeddings for `ids`.
void embed_ids_infer(const EncoderNet& enc,
                     const std::vector<std::uint32_t>& ids, Tensor& out);

// A[p][q] = e_o[p] * e_d[q] + eps
Tensor basis(const Tensor& e_o, const Tensor& e_d, double eps);

}  // namespace crane
