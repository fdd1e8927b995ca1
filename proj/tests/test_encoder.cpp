#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "crane/encoder.hpp"
#include "crane/rng.hpp"

using namespace crane;

namespace {

Tensor codes_for(std::initializer_list<std::uint32_t> ids) {
  Tensor codes(ids.size(), kCodeBits);
  std::size_t i = 0;
  for (std::uint32_t id : ids) {
    const auto c = binary_encode(id);
    for (std::size_t k = 0; k < kCodeBits; ++k) codes.at(i, k) = c[k];
    ++i;
  }
  return codes;
}

}  // namespace

TEST_CASE("binary_encode is LSB-first over 32 bits") {
  const auto zero = binary_encode(0);
  for (double b : zero) CHECK(b == 0.0);

  const auto one = binary_encode(1);
  CHECK(one[0] == 1.0);
  for (std::size_t k = 1; k < kCodeBits; ++k) CHECK(one[k] == 0.0);

  const auto ten = binary_encode(10);  // 0b1010
  CHECK(ten[0] == 0.0);
  CHECK(ten[1] == 1.0);
  CHECK(ten[2] == 0.0);
  CHECK(ten[3] == 1.0);

  const auto top = binary_encode(0x80000000u);
  CHECK(top[31] == 1.0);
  CHECK(top[0] == 0.0);

  const auto all = binary_encode(0xFFFFFFFFu);
  for (double b : all) CHECK(b == 1.0);
}

TEST_CASE("init is deterministic and respects its fan-in bounds") {
  Xoshiro256ss r1(42), r2(42);
  EncoderNet a, b;
  a.init(r1);
  b.init(r2);
  CHECK(std::memcmp(a.w1.data(), b.w1.data(), a.w1.numel() * 8) == 0);
  CHECK(std::memcmp(a.w3.data(), b.w3.data(), a.w3.numel() * 8) == 0);

  const double bound1 = std::sqrt(6.0 / 32.0);
  for (double x : a.w1.v) REQUIRE(std::abs(x) <= bound1);
  const double bound3 = std::sqrt(6.0 / 36.0);
  for (double x : a.w3.v) REQUIRE(std::abs(x) <= bound3);
  for (double x : a.b1.v) REQUIRE(std::abs(x) <= 1.0 / std::sqrt(32.0));
  for (double x : a.g1.v) CHECK(x == 1.0);
  for (double x : a.be1.v) CHECK(x == 0.0);
  CHECK(a.bn1.mean.size() == 16);
  CHECK(a.bn2.var.size() == 36);
}

TEST_CASE("forward_infer emits non-negative 64-wide rows") {
  Xoshiro256ss rng(43);
  EncoderNet enc;
  enc.init(rng);
  const Tensor codes = codes_for({0, 1, 7, 123456, 0xFFFFFFFFu});
  Tensor out;
  enc.forward_infer(codes, out);
  CHECK(out.rows == 5);
  CHECK(out.cols == kEmbedDim);
  for (double x : out.v) REQUIRE(x >= 0.0);

  Tensor again;
  enc.forward_infer(codes, again);
  CHECK(std::memcmp(out.data(), again.data(), out.numel() * 8) == 0);

  Tensor bad(1, 16);
  CHECK_THROWS_AS(enc.forward_infer(bad, out), std::invalid_argument);
}

TEST_CASE("tape forward in inference mode matches forward_infer") {
  Xoshiro256ss rng(44);
  EncoderNet enc;
  enc.init(rng);
  // make the running stats non-trivial
  for (std::size_t j = 0; j < 16; ++j) {
    enc.bn1.mean[j] = 0.01 * static_cast<double>(j);
    enc.bn1.var[j] = 0.5 + 0.05 * static_cast<double>(j);
  }
  const Tensor codes = codes_for({3, 9, 1000003});
  Tensor want;
  enc.forward_infer(codes, want);

  Tape tape(kernels::Exec::serial);
  std::array<ValueId, 10> pids;
  const auto params = enc.param_list();
  for (std::size_t k = 0; k < 10; ++k) pids[k] = tape.leaf(*params[k], false);
  const ValueId out = enc.forward_tape(tape, tape.leaf(codes, false), pids, false);
  const Tensor& got = tape.val(out);
  REQUIRE(got.rows == want.rows);
  REQUIRE(got.cols == want.cols);
  // the inference path folds the affine differently; near-equal, not bitwise
  for (std::size_t i = 0; i < got.numel(); ++i)
    REQUIRE(std::abs(got.v[i] - want.v[i]) <=
            1e-9 * std::max(1.0, std::abs(want.v[i])));
}

TEST_CASE("train-mode tape forward falls back to running stats on one row") {
  Xoshiro256ss rng(45);
  EncoderNet enc;
  enc.init(rng);
  const Tensor codes = codes_for({77});
  const auto params = enc.param_list();

  Tape t1(kernels::Exec::serial), t2(kernels::Exec::serial);
  std::array<ValueId, 10> p1, p2;
  for (std::size_t k = 0; k < 10; ++k) {
    p1[k] = t1.leaf(*params[k], false);
    p2[k] = t2.leaf(*params[k], false);
  }
  const Tensor& a = t1.val(enc.forward_tape(t1, t1.leaf(codes, false), p1, true));
  const Tensor& b = t2.val(enc.forward_tape(t2, t2.leaf(codes, false), p2, false));
  REQUIRE(a.numel() == b.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a.v[i] == b.v[i]);
}

TEST_CASE("train-mode tape forward updates running stats and stays non-negative") {
  Xoshiro256ss rng(46);
  EncoderNet enc;
  enc.init(rng);
  const std::vector<double> mean0 = enc.bn1.mean;
  const Tensor codes = codes_for({1, 2, 3, 4});
  Tape tape(kernels::Exec::serial);
  std::array<ValueId, 10> pids;
  const auto params = enc.param_list();
  for (std::size_t k = 0; k < 10; ++k) pids[k] = tape.leaf(*params[k], false);
  const ValueId out = enc.forward_tape(tape, tape.leaf(codes, false), pids, true);
  for (double x : tape.val(out).v) REQUIRE(x >= 0.0);
  CHECK(enc.bn1.mean != mean0);  // momentum folded the batch in
}

TEST_CASE("embed_ids_infer equals row-wise forward_infer") {
  Xoshiro256ss rng(47);
  EncoderNet enc;
  enc.init(rng);
  const std::vector<std::uint32_t> ids{5, 0, 5, 999999, 42};
  Tensor batch;
  embed_ids_infer(enc, ids, batch);
  REQUIRE(batch.rows == ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Tensor one;
    enc.forward_infer(codes_for({ids[i]}), one);
    for (std::size_t j = 0; j < kEmbedDim; ++j)
      REQUIRE(batch.at(i, j) == one.v[j]);
  }
}

TEST_CASE("basis builds the rank-one pattern plus eps") {
  const Tensor eo(1, 2, {2.0, 0.0});
  const Tensor ed(1, 3, {1.0, 3.0, 0.5});
  const Tensor a = basis(eo, ed, 1e-6);
  REQUIRE(a.rows == 2);
  REQUIRE(a.cols == 3);
  CHECK(a.at(0, 0) == 2.0 * 1.0 + 1e-6);
  CHECK(a.at(0, 1) == 2.0 * 3.0 + 1e-6);
  CHECK(a.at(0, 2) == 2.0 * 0.5 + 1e-6);
  CHECK(a.at(1, 0) == 1e-6);
  CHECK(a.at(1, 1) == 1e-6);
  CHECK(a.at(1, 2) == 1e-6);
  CHECK_THROWS_AS(basis(eo, ed, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(basis(eo, ed, -1.0), std::invalid_argument);
}
