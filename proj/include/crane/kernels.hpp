#pragma once
// Hot-loop kernels, each in a serial reference version and an OpenMP version
// selected by Exec. Both produce bit-identical results for any thread count:
// parallel loops only ever split over independent output slots, and every
// floating-point reduction keeps a fixed association order.

#include <cstddef>
#include <cstdint>

namespace crane::kernels {

enum class Exec { serial, parallel };

// Result of a min-ratio scan: value = m*/a* at the winning cell.
// Comparisons are division-free (cross-multiplication of non-negative
// numerators against positive denominators); exact product ties resolve to
// the first cell in row-major order. One division at the end.
struct MinRatio {
  double value = 0.0;
  std::size_t index = 0;
  double m_star = 0.0;
  double a_star = 1.0;
};

// C (m x n) = op(A) @ op(B), accumulating into C if accumulate is set.
// op(A) is m x k, op(B) is k x n; A and B are row-major as stored.
void gemm(const double* A, const double* B, double* C, std::size_t m,
          std::size_t k, std::size_t n, bool transA, bool transB,
          bool accumulate, Exec ex);

// min over i of m[i]/a[i]; every a[i] must be > 0 (caller-checked).
MinRatio min_ratio(const double* m, const double* a, std::size_t n);

// Fused scan of M (H x W) against the rank-one basis eo edᵀ + eps without
// materializing the basis.
MinRatio min_ratio_basis(const double* M, const double* eo, const double* ed,
                         std::size_t H, std::size_t W, double eps);

// One scan per edge against a shared memory; Eo/Ed are row-major embedding
// matrices indexed by orow/drow.
void batch_min_ratio_basis(const double* M, std::size_t H, std::size_t W,
                           const double* Eo, std::size_t eo_stride,
                           const double* Ed, std::size_t ed_stride,
                           const std::uint32_t* orow, const std::uint32_t* drow,
                           std::size_t n_edges, double eps, MinRatio* out,
                           Exec ex);

// M += coef * (u vᵀ + eps)
void outer_axpy(double* M, const double* u, const double* v, std::size_t H,
                std::size_t W, double coef, double eps, Exec ex);

// d_eo += coef * (G @ ed); d_ed += coef * (Gᵀ @ eo)
void route_outer_grad(const double* G, std::size_t H, std::size_t W,
                      const double* eo, const double* ed, double coef,
                      double* d_eo, double* d_ed);

// Batched gradient routing for many rank-one contributions into shared
// embedding-gradient matrices. Rows may repeat across edges, so the scatter
// into dEo/dEd runs serially in edge order; only the per-edge matvecs fan out.
void batch_route_outer_grad(const double* G, std::size_t H, std::size_t W,
                            const double* Eo, std::size_t eo_stride,
                            const double* Ed, std::size_t ed_stride,
                            const std::uint32_t* orow,
                            const std::uint32_t* drow, const double* coef,
                            std::size_t n_edges, double* dEo, double* dEd,
                            Exec ex);

}  // namespace crane::kernels
