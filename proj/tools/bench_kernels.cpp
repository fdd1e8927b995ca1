// Micro-benchmark: serial reference kernels vs the OpenMP versions, checking
// bit-identical outputs while timing both.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "crane/kernels.hpp"
#include "crane/rng.hpp"
#include "crane/tensor.hpp"

using namespace crane;
using kernels::Exec;

namespace {

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class F>
double time_best(F&& fn, int reps = 5) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now();
    fn();
    best = std::min(best, now() - t0);
  }
  return best;
}

void report(const char* name, std::size_t n_items, double ts, double tp,
            bool identical) {
  std::printf("%-24s %10zu items  serial %8.3f ms  parallel %8.3f ms  x%.2f  %s\n",
              name, n_items, ts * 1e3, tp * 1e3, ts / tp,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  Xoshiro256ss rng(42);
  constexpr std::size_t D = 64;

  {  // gemm: (n x 36) @ (36 x 64), the encoder's widest matmul shape
    const std::size_t n = 20000, k = 36;
    Tensor A(n, k), B(k, D), C1(n, D), C2(n, D);
    for (auto& x : A.v) x = rng.uniform(-1.0, 1.0);
    for (auto& x : B.v) x = rng.uniform(-1.0, 1.0);
    const double ts = time_best([&] {
      kernels::gemm(A.data(), B.data(), C1.data(), n, k, D, false, false,
                    false, Exec::serial);
    });
    const double tp = time_best([&] {
      kernels::gemm(A.data(), B.data(), C2.data(), n, k, D, false, false,
                    false, Exec::parallel);
    });
    report("gemm 20000x36x64", n * k * D,
           ts, tp, std::memcmp(C1.data(), C2.data(), C1.numel() * 8) == 0);
  }

  const std::size_t n_edges = 20000, n_nodes = 4000;
  Tensor Eo(n_nodes, D), Ed(n_nodes, D), M(D, D);
  for (auto& x : Eo.v) x = rng.uniform(0.0, 1.0);
  for (auto& x : Ed.v) x = rng.uniform(0.0, 1.0);
  for (auto& x : M.v) x = rng.uniform(0.0, 50.0);
  std::vector<std::uint32_t> orow(n_edges), drow(n_edges);
  std::vector<double> coef(n_edges);
  for (std::size_t i = 0; i < n_edges; ++i) {
    orow[i] = static_cast<std::uint32_t>(rng.below(n_nodes));
    drow[i] = static_cast<std::uint32_t>(rng.below(n_nodes));
    coef[i] = rng.uniform(0.1, 2.0);
  }

  {  // batched min-ratio scans (the query hot loop)
    std::vector<kernels::MinRatio> r1(n_edges), r2(n_edges);
    const double ts = time_best([&] {
      kernels::batch_min_ratio_basis(M.data(), D, D, Eo.data(), D, Ed.data(),
                                     D, orow.data(), drow.data(), n_edges,
                                     1e-6, r1.data(), Exec::serial);
    });
    const double tp = time_best([&] {
      kernels::batch_min_ratio_basis(M.data(), D, D, Eo.data(), D, Ed.data(),
                                     D, orow.data(), drow.data(), n_edges,
                                     1e-6, r2.data(), Exec::parallel);
    });
    bool same = true;
    for (std::size_t i = 0; i < n_edges; ++i)
      same = same && r1[i].index == r2[i].index &&
             std::memcmp(&r1[i].value, &r2[i].value, 8) == 0;
    report("batch_min_ratio_basis", n_edges, ts, tp, same);
  }

  {  // rank-one accumulation (the store hot loop)
    Tensor M1(D, D), M2(D, D);
    const double ts = time_best([&] {
      for (std::size_t i = 0; i < n_edges; ++i)
        kernels::outer_axpy(M1.data(), Eo.data() + orow[i] * D,
                            Ed.data() + drow[i] * D, D, D, coef[i], 1e-6,
                            Exec::serial);
    }, 3);
    const double tp = time_best([&] {
      for (std::size_t i = 0; i < n_edges; ++i)
        kernels::outer_axpy(M2.data(), Eo.data() + orow[i] * D,
                            Ed.data() + drow[i] * D, D, D, coef[i], 1e-6,
                            Exec::parallel);
    }, 3);
    report("outer_axpy x20000", n_edges, ts, tp,
           std::memcmp(M1.data(), M2.data(), M1.numel() * 8) == 0);
  }

  {  // batched gradient routing (the backward hot loop)
    Tensor G(D, D);
    for (auto& x : G.v) x = rng.uniform(-1.0, 1.0);
    Tensor dEo1(n_nodes, D), dEd1(n_nodes, D), dEo2(n_nodes, D), dEd2(n_nodes, D);
    const double ts = time_best([&] {
      std::fill(dEo1.v.begin(), dEo1.v.end(), 0.0);
      std::fill(dEd1.v.begin(), dEd1.v.end(), 0.0);
      kernels::batch_route_outer_grad(G.data(), D, D, Eo.data(), D, Ed.data(),
                                      D, orow.data(), drow.data(), coef.data(),
                                      n_edges, dEo1.data(), dEd1.data(),
                                      Exec::serial);
    });
    const double tp = time_best([&] {
      std::fill(dEo2.v.begin(), dEo2.v.end(), 0.0);
      std::fill(dEd2.v.begin(), dEd2.v.end(), 0.0);
      kernels::batch_route_outer_grad(G.data(), D, D, Eo.data(), D, Ed.data(),
                                      D, orow.data(), drow.data(), coef.data(),
                                      n_edges, dEo2.data(), dEd2.data(),
                                      Exec::parallel);
    });
    const bool same =
        std::memcmp(dEo1.data(), dEo2.data(), dEo1.numel() * 8) == 0 &&
        std::memcmp(dEd1.data(), dEd2.data(), dEd1.numel() * 8) == 0;
    report("batch_route_outer_grad", n_edges, ts, tp, same);
  }

  return 0;
}
