#pragma once

// Dense inner loops used by the tensor engine and graph construction.
//
// Each kernel exists twice: a serial reference in lgg::kernels::serial and an
// OpenMP version in lgg::kernels::omp. Both variants accumulate every output
// element in the same order, so their results are bit-identical for any thread
// count. The unqualified entry points dispatch to the OpenMP version when the
// problem is large enough to amortize a parallel region.

#include <cstddef>
#include <span>

namespace lgg::kernels {

enum class Trans { no, yes };

/// Shape of C = op(A) * op(B) where op(A) is m x k and op(B) is k x n.
struct GemmShape {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
};

namespace serial {

// C is overwritten. A is stored row-major as m x k (or k x m when transposed),
// B as k x n (or n x k when transposed).
void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape);

/// D_ij = sum_p (x_ip - x_jp)^2 for the rows of a rows x dim matrix.
void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out);

/// Writes 1 into mask(i, j) for the k largest off-diagonal entries of row i of
/// the square matrix s, 0 elsewhere. Ties go to the lower column index.
void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask);

}  // namespace serial

namespace omp {

void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape);
void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out);
void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask);

}  // namespace omp

void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape);
void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out);
void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask);

/// Number of threads the OpenMP variants may use (1 when built without OpenMP).
int max_threads();

}  // namespace lgg::kernels
