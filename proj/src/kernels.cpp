#include "crane/kernels.hpp"

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace crane::kernels {

namespace {

// Four independent champion chains give the compiler ILP/SLP room while the
// strict < per chain keeps the first-seen winner. Cross-multiplication keeps
// the scan division-free; sign-safe because a > 0 and comparisons multiply by
// positive denominators.
struct Champ {
  double m, a;
  std::size_t idx;
};

inline void champ_update(Champ& c, double m, double a, std::size_t idx) {
  if (m * c.a < c.m * a) c = {m, a, idx};
}

inline MinRatio champ_finish(const Champ* lanes, int n_lanes) {
  Champ best = lanes[0];
  for (int j = 1; j < n_lanes; ++j) {
    const Champ& c = lanes[j];
    const double lhs = c.m * best.a, rhs = best.m * c.a;
    if (lhs < rhs || (lhs == rhs && c.idx < best.idx)) best = c;
  }
  return {best.m / best.a, best.idx, best.m, best.a};
}

}  // namespace

MinRatio min_ratio(const double* m, const double* a, std::size_t n) {
  Champ lanes[4] = {{m[0], a[0], 0}, {m[0], a[0], 0}, {m[0], a[0], 0},
                    {m[0], a[0], 0}};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (int j = 0; j < 4; ++j) champ_update(lanes[j], m[i + j], a[i + j], i + j);
  for (int j = 0; i < n; ++i, ++j) champ_update(lanes[j], m[i], a[i], i);
  return champ_finish(lanes, 4);
}

MinRatio min_ratio_basis(const double* M, const double* eo, const double* ed,
                         std::size_t H, std::size_t W, double eps) {
  Champ lanes[4] = {{M[0], eo[0] * ed[0] + eps, 0},
                    {M[0], eo[0] * ed[0] + eps, 0},
                    {M[0], eo[0] * ed[0] + eps, 0},
                    {M[0], eo[0] * ed[0] + eps, 0}};
  for (std::size_t p = 0; p < H; ++p) {
    const double up = eo[p];
    const double* mrow = M + p * W;
    const std::size_t base = p * W;
    std::size_t q = 0;
    for (; q + 4 <= W; q += 4)
      for (int j = 0; j < 4; ++j)
        champ_update(lanes[j], mrow[q + j], up * ed[q + j] + eps, base + q + j);
    for (int j = 0; q < W; ++q, ++j)
      champ_update(lanes[j], mrow[q], up * ed[q] + eps, base + q);
  }
  return champ_finish(lanes, 4);
}

void batch_min_ratio_basis(const double* M, std::size_t H, std::size_t W,
                           const double* Eo, std::size_t eo_stride,
                           const double* Ed, std::size_t ed_stride,
                           const std::uint32_t* orow, const std::uint32_t* drow,
                           std::size_t n_edges, double eps, MinRatio* out,
                           Exec ex) {
#ifdef _OPENMP
  if (ex == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(n_edges); ++e)
      out[e] = min_ratio_basis(M, Eo + orow[e] * eo_stride,
                               Ed + drow[e] * ed_stride, H, W, eps);
    return;
  }
#else
  (void)ex;
#endif
  for (std::size_t e = 0; e < n_edges; ++e)
    out[e] = min_ratio_basis(M, Eo + orow[e] * eo_stride,
                             Ed + drow[e] * ed_stride, H, W, eps);
}

void outer_axpy(double* M, const double* u, const double* v, std::size_t H,
                std::size_t W, double coef, double eps, Exec ex) {
#ifdef _OPENMP
  if (ex == Exec::parallel && H * W >= 1u << 14) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(H); ++p) {
      double* row = M + p * W;
      const double cu = coef * u[p], ce = coef * eps;
      for (std::size_t q = 0; q < W; ++q) row[q] += cu * v[q] + ce;
    }
    return;
  }
#else
  (void)ex;
#endif
  const double ce = coef * eps;
  for (std::size_t p = 0; p < H; ++p) {
    double* row = M + p * W;
    const double cu = coef * u[p];
    for (std::size_t q = 0; q < W; ++q) row[q] += cu * v[q] + ce;
  }
}

void route_outer_grad(const double* G, std::size_t H, std::size_t W,
                      const double* eo, const double* ed, double coef,
                      double* d_eo, double* d_ed) {
  // d_ed accumulates into a local buffer first and lands with one add per
  // entry, the same association the batched parallel path uses, so both
  // paths stay bit-identical.
  constexpr std::size_t kStack = 64;
  double stack_buf[kStack];
  std::vector<double> heap_buf;
  double* gd = stack_buf;
  if (W > kStack) {
    heap_buf.resize(W);
    gd = heap_buf.data();
  }
  for (std::size_t q = 0; q < W; ++q) gd[q] = 0.0;
  for (std::size_t p = 0; p < H; ++p) {
    const double* grow = G + p * W;
    double acc = 0.0;
    const double cu = coef * eo[p];
    for (std::size_t q = 0; q < W; ++q) {
      acc += grow[q] * ed[q];
      gd[q] += cu * grow[q];
    }
    d_eo[p] += coef * acc;
  }
  for (std::size_t q = 0; q < W; ++q) d_ed[q] += gd[q];
}

void batch_route_outer_grad(const double* G, std::size_t H, std::size_t W,
                            const double* Eo, std::size_t eo_stride,
                            const double* Ed, std::size_t ed_stride,
                            const std::uint32_t* orow,
                            const std::uint32_t* drow, const double* coef,
                            std::size_t n_edges, double* dEo, double* dEd,
                            Exec ex) {
#ifdef _OPENMP
  if (ex == Exec::parallel && n_edges >= 64) {
    // Parallel matvec phase into per-edge scratch, serial in-order scatter:
    // edges share embedding rows, so the accumulate must stay ordered to be
    // bit-identical to the serial path.
    constexpr std::size_t kChunk = 2048;
    std::vector<double> scratch(kChunk * (H + W));
    for (std::size_t c0 = 0; c0 < n_edges; c0 += kChunk) {
      const std::size_t cn = std::min(kChunk, n_edges - c0);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cn); ++i) {
        const std::size_t e = c0 + i;
        double* go = scratch.data() + i * (H + W);
        double* gd = go + H;
        const double* eo = Eo + orow[e] * eo_stride;
        const double* ed = Ed + drow[e] * ed_stride;
        for (std::size_t p = 0; p < H; ++p) {
          const double* grow = G + p * W;
          double acc = 0.0;
          for (std::size_t q = 0; q < W; ++q) acc += grow[q] * ed[q];
          go[p] = coef[e] * acc;
        }
        for (std::size_t q = 0; q < W; ++q) gd[q] = 0.0;
        for (std::size_t p = 0; p < H; ++p) {
          const double* grow = G + p * W;
          const double cu = coef[e] * eo[p];
          for (std::size_t q = 0; q < W; ++q) gd[q] += cu * grow[q];
        }
      }
      for (std::size_t i = 0; i < cn; ++i) {
        const std::size_t e = c0 + i;
        const double* go = scratch.data() + i * (H + W);
        const double* gd = go + H;
        double* deo = dEo + orow[e] * eo_stride;
        double* ded = dEd + drow[e] * ed_stride;
        for (std::size_t p = 0; p < H; ++p) deo[p] += go[p];
        for (std::size_t q = 0; q < W; ++q) ded[q] += gd[q];
      }
    }
    return;
  }
#else
  (void)ex;
#endif
  for (std::size_t e = 0; e < n_edges; ++e)
    route_outer_grad(G, H, W, Eo + orow[e] * eo_stride, Ed + drow[e] * ed_stride,
                     coef[e], dEo + orow[e] * eo_stride,
                     dEd + drow[e] * ed_stride);
}

namespace {

template <bool TA, bool TB>
void gemm_rows(const double* A, const double* B, double* C, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate, std::size_t i0,
               std::size_t i1) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* crow = C + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    if constexpr (!TB) {
      // stream over rows of B; inner j-loop is contiguous and vectorizes
      for (std::size_t l = 0; l < k; ++l) {
        const double a = TA ? A[l * m + i] : A[i * k + l];
        const double* brow = B + l * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = B + j * k;
        double acc = 0.0;
        if constexpr (!TA) {
          const double* arow = A + i * k;
          for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
        } else {
          for (std::size_t l = 0; l < k; ++l) acc += A[l * m + i] * brow[l];
        }
        crow[j] += acc;
      }
    }
  }
}

}  // namespace

void gemm(const double* A, const double* B, double* C, std::size_t m,
          std::size_t k, std::size_t n, bool transA, bool transB,
          bool accumulate, Exec ex) {
  auto run = [&](std::size_t i0, std::size_t i1) {
    if (!transA && !transB)
      gemm_rows<false, false>(A, B, C, m, k, n, accumulate, i0, i1);
    else if (!transA && transB)
      gemm_rows<false, true>(A, B, C, m, k, n, accumulate, i0, i1);
    else if (transA && !transB)
      gemm_rows<true, false>(A, B, C, m, k, n, accumulate, i0, i1);
    else
      gemm_rows<true, true>(A, B, C, m, k, n, accumulate, i0, i1);
  };
#ifdef _OPENMP
  if (ex == Exec::parallel && m >= 32) {
#pragma omp parallel
    {
      const int nt = omp_get_num_threads(), t = omp_get_thread_num();
      const std::size_t lo = m * t / nt, hi = m * (t + 1) / nt;
      run(lo, hi);
    }
    return;
  }
#else
  (void)ex;
#endif
  run(0, m);
}

}  // namespace crane::kernels
