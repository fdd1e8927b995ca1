#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "crane/kernels.hpp"
#include "crane/rng.hpp"
#include "crane/tensor.hpp"

using namespace crane;
using kernels::Exec;
using kernels::MinRatio;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Xoshiro256ss& rng,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Straight-line reference matching the kernel's documented summation order:
// the !transB path folds products into the output cell in k order starting
// from the prior value; the transB path accumulates locally and lands once.
void gemm_oracle(const Tensor& A, const Tensor& B, Tensor& C, std::size_t m,
                 std::size_t k, std::size_t n, bool tA, bool tB, bool acc) {
  auto a_at = [&](std::size_t i, std::size_t l) {
    return tA ? A.v[l * m + i] : A.v[i * k + l];
  };
  auto b_at = [&](std::size_t l, std::size_t j) {
    return tB ? B.v[j * k + l] : B.v[l * n + j];
  };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!tB) {
        double s = acc ? C.v[i * n + j] : 0.0;
        for (std::size_t l = 0; l < k; ++l) s += a_at(i, l) * b_at(l, j);
        C.v[i * n + j] = s;
      } else {
        double s = 0.0;
        for (std::size_t l = 0; l < k; ++l) s += a_at(i, l) * b_at(l, j);
        C.v[i * n + j] = (acc ? C.v[i * n + j] : 0.0) + s;
      }
    }
}

bool bytes_equal(const Tensor& a, const Tensor& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

bool scan_equal(const MinRatio& a, const MinRatio& b) {
  return a.index == b.index && a.value == b.value && a.m_star == b.m_star &&
         a.a_star == b.a_star;
}

}  // namespace

TEST_CASE("gemm matches the reference for every transpose combination") {
  Xoshiro256ss rng(101);
  const std::size_t m = 5, k = 7, n = 9;
  for (int tA = 0; tA < 2; ++tA)
    for (int tB = 0; tB < 2; ++tB)
      for (int acc = 0; acc < 2; ++acc) {
        const Tensor A = tA ? random_tensor(k, m, rng) : random_tensor(m, k, rng);
        const Tensor B = tB ? random_tensor(n, k, rng) : random_tensor(k, n, rng);
        Tensor C = random_tensor(m, n, rng);
        Tensor want = C;
        gemm_oracle(A, B, want, m, k, n, tA, tB, acc != 0);
        kernels::gemm(A.data(), B.data(), C.data(), m, k, n, tA != 0, tB != 0,
                      acc != 0, Exec::serial);
        REQUIRE(bytes_equal(C, want));
      }
}

TEST_CASE("gemm parallel is bit-identical to serial") {
  Xoshiro256ss rng(102);
  const std::size_t m = 40, k = 17, n = 23;  // m >= 32 takes the split path
  for (int tA = 0; tA < 2; ++tA)
    for (int tB = 0; tB < 2; ++tB) {
      const Tensor A = tA ? random_tensor(k, m, rng) : random_tensor(m, k, rng);
      const Tensor B = tB ? random_tensor(n, k, rng) : random_tensor(k, n, rng);
      Tensor c_ser = random_tensor(m, n, rng);
      Tensor c_par = c_ser;
      kernels::gemm(A.data(), B.data(), c_ser.data(), m, k, n, tA != 0, tB != 0,
                    true, Exec::serial);
      kernels::gemm(A.data(), B.data(), c_par.data(), m, k, n, tA != 0, tB != 0,
                    true, Exec::parallel);
      REQUIRE(bytes_equal(c_ser, c_par));
    }
}

TEST_CASE("min_ratio hand case picks the first minimum") {
  const double m[] = {9.0, 4.0, 6.0};
  const double a[] = {3.0, 1.0, 2.0};
  const auto r = kernels::min_ratio(m, a, 3);
  CHECK(r.value == 3.0);
  CHECK(r.index == 0);  // 6/2 ties 9/3; first in row-major order wins
  CHECK(r.m_star == 9.0);
  CHECK(r.a_star == 3.0);
}

TEST_CASE("min_ratio exact ties resolve to the smallest index") {
  const double m[] = {3.0, 1.0, 2.0, 1.0, 3.0};
  const double a[] = {4.0, 2.0, 4.0, 2.0, 1.0};  // exact 0.5 tie at 1, 2, 3
  const auto r = kernels::min_ratio(m, a, 5);
  CHECK(r.value == 0.5);
  CHECK(r.index == 1);

  const double ones[] = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  const auto r2 = kernels::min_ratio(ones, ones, 6);
  CHECK(r2.index == 0);
  CHECK(r2.value == 1.0);
}

TEST_CASE("min_ratio agrees with a division oracle on random data") {
  Xoshiro256ss rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<double> m(n), a(n);
    for (auto& x : m) x = rng.uniform(0.0, 10.0);
    for (auto& x : a) x = rng.uniform(0.1, 5.0);
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (m[i] / a[i] < m[best] / a[best]) best = i;
    const auto r = kernels::min_ratio(m.data(), a.data(), n);
    REQUIRE(r.index == best);
    REQUIRE(r.value == m[best] / a[best]);
    REQUIRE(r.m_star == m[best]);
    REQUIRE(r.a_star == a[best]);
  }
}

TEST_CASE("min_ratio_basis equals min_ratio over the materialized basis") {
  Xoshiro256ss rng(104);
  const double eps = 1e-6;
  for (auto [H, W] : {std::pair<std::size_t, std::size_t>{64, 64}, {3, 8}}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> M(H * W), eo(H), ed(W), basis(H * W);
      for (auto& x : M) x = rng.uniform(0.0, 4.0);
      for (auto& x : eo) x = rng.uniform(0.0, 2.0);
      for (auto& x : ed) x = rng.uniform(0.0, 2.0);
      for (std::size_t p = 0; p < H; ++p)
        for (std::size_t q = 0; q < W; ++q)
          basis[p * W + q] = eo[p] * ed[q] + eps;
      const auto fused =
          kernels::min_ratio_basis(M.data(), eo.data(), ed.data(), H, W, eps);
      const auto flat = kernels::min_ratio(M.data(), basis.data(), H * W);
      REQUIRE(scan_equal(fused, flat));
    }
  }
}

TEST_CASE("batch_min_ratio_basis matches per-edge scans, serial and parallel") {
  Xoshiro256ss rng(105);
  const std::size_t H = 64, W = 64, n_nodes = 19, n_edges = 137;
  const double eps = 1e-6;
  std::vector<double> M(H * W);
  for (auto& x : M) x = rng.uniform(0.0, 3.0);
  Tensor Eo(n_nodes, H), Ed(n_nodes, W);
  for (auto& x : Eo.v) x = rng.uniform(0.0, 2.0);
  for (auto& x : Ed.v) x = rng.uniform(0.0, 2.0);
  std::vector<std::uint32_t> orow(n_edges), drow(n_edges);
  for (auto& x : orow) x = static_cast<std::uint32_t>(rng.below(n_nodes));
  for (auto& x : drow) x = static_cast<std::uint32_t>(rng.below(n_nodes));

  std::vector<MinRatio> ser(n_edges), par(n_edges);
  kernels::batch_min_ratio_basis(M.data(), H, W, Eo.data(), H, Ed.data(), W,
                                 orow.data(), drow.data(), n_edges, eps,
                                 ser.data(), Exec::serial);
  kernels::batch_min_ratio_basis(M.data(), H, W, Eo.data(), H, Ed.data(), W,
                                 orow.data(), drow.data(), n_edges, eps,
                                 par.data(), Exec::parallel);
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto one = kernels::min_ratio_basis(M.data(), Eo.data() + orow[e] * H,
                                              Ed.data() + drow[e] * W, H, W, eps);
    REQUIRE(scan_equal(ser[e], one));
    REQUIRE(scan_equal(par[e], one));
  }
}

TEST_CASE("outer_axpy adds coef*(u v^T + eps) with the documented rounding") {
  Xoshiro256ss rng(106);
  const std::size_t H = 9, W = 13;
  Tensor M = random_tensor(H, W, rng), u = random_tensor(H, 1, rng),
         v = random_tensor(1, W, rng);
  Tensor want = M;
  const double coef = 0.75, eps = 1e-6;
  const double ce = coef * eps;
  for (std::size_t p = 0; p < H; ++p) {
    const double cu = coef * u.v[p];
    for (std::size_t q = 0; q < W; ++q) want.v[p * W + q] += cu * v.v[q] + ce;
  }
  kernels::outer_axpy(M.data(), u.data(), v.data(), H, W, coef, eps,
                      Exec::serial);
  REQUIRE(bytes_equal(M, want));
}

TEST_CASE("outer_axpy parallel is bit-identical to serial") {
  Xoshiro256ss rng(107);
  const std::size_t H = 128, W = 128;  // H*W >= 2^14 takes the parallel path
  Tensor m_ser = random_tensor(H, W, rng);
  Tensor m_par = m_ser;
  const Tensor u = random_tensor(H, 1, rng), v = random_tensor(1, W, rng);
  kernels::outer_axpy(m_ser.data(), u.data(), v.data(), H, W, 1.25, 1e-6,
                      Exec::serial);
  kernels::outer_axpy(m_par.data(), u.data(), v.data(), H, W, 1.25, 1e-6,
                      Exec::parallel);
  REQUIRE(bytes_equal(m_ser, m_par));
}

TEST_CASE("route_outer_grad matches its documented accumulation order") {
  Xoshiro256ss rng(108);
  const std::size_t H = 6, W = 70;  // W > 64 exercises the heap scratch
  const Tensor G = random_tensor(H, W, rng), eo = random_tensor(H, 1, rng),
               ed = random_tensor(1, W, rng);
  Tensor deo = random_tensor(H, 1, rng), ded = random_tensor(1, W, rng);
  Tensor want_o = deo, want_d = ded;
  const double coef = -0.6;

  std::vector<double> gd(W, 0.0);
  for (std::size_t p = 0; p < H; ++p) {
    double acc = 0.0;
    const double cu = coef * eo.v[p];
    for (std::size_t q = 0; q < W; ++q) {
      acc += G.v[p * W + q] * ed.v[q];
      gd[q] += cu * G.v[p * W + q];
    }
    want_o.v[p] += coef * acc;
  }
  for (std::size_t q = 0; q < W; ++q) want_d.v[q] += gd[q];

  kernels::route_outer_grad(G.data(), H, W, eo.data(), ed.data(), coef,
                            deo.data(), ded.data());
  REQUIRE(bytes_equal(deo, want_o));
  REQUIRE(bytes_equal(ded, want_d));
}

TEST_CASE("batch_route_outer_grad: parallel, serial, and per-edge loop agree") {
  Xoshiro256ss rng(109);
  const std::size_t H = 64, W = 64, n_nodes = 11, n_edges = 200;
  const Tensor G = random_tensor(H, W, rng);
  Tensor Eo = random_tensor(n_nodes, H, rng), Ed = random_tensor(n_nodes, W, rng);
  std::vector<std::uint32_t> orow(n_edges), drow(n_edges);
  std::vector<double> coef(n_edges);
  for (auto& x : orow) x = static_cast<std::uint32_t>(rng.below(n_nodes));
  for (auto& x : drow) x = static_cast<std::uint32_t>(rng.below(n_nodes));
  for (auto& x : coef) x = rng.uniform(-2.0, 2.0);

  Tensor deo_loop(n_nodes, H), ded_loop(n_nodes, W);
  for (std::size_t e = 0; e < n_edges; ++e)
    kernels::route_outer_grad(G.data(), H, W, Eo.data() + orow[e] * H,
                              Ed.data() + drow[e] * W, coef[e],
                              deo_loop.data() + orow[e] * H,
                              ded_loop.data() + drow[e] * W);

  Tensor deo_ser(n_nodes, H), ded_ser(n_nodes, W);
  kernels::batch_route_outer_grad(G.data(), H, W, Eo.data(), H, Ed.data(), W,
                                  orow.data(), drow.data(), coef.data(),
                                  n_edges, deo_ser.data(), ded_ser.data(),
                                  Exec::serial);
  Tensor deo_par(n_nodes, H), ded_par(n_nodes, W);
  kernels::batch_route_outer_grad(G.data(), H, W, Eo.data(), H, Ed.data(), W,
                                  orow.data(), drow.data(), coef.data(),
                                  n_edges, deo_par.data(), ded_par.data(),
                                  Exec::parallel);
  REQUIRE(bytes_equal(deo_ser, deo_loop));
  REQUIRE(bytes_equal(ded_ser, ded_loop));
  REQUIRE(bytes_equal(deo_par, deo_loop));
  REQUIRE(bytes_equal(ded_par, ded_loop));
}
