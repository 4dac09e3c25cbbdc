#include "lgg/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lgg::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

namespace omp {

void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape) {
  const auto [m, k, n] = shape;
  const auto rows = static_cast<std::int64_t>(m);
  const bool big = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    // Row-streaming form; each c(i, j) still accumulates p = 0..k-1 in order.
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta == Trans::no ? a[i * k + p] : a[p * m + i];
      if (tb == Trans::no) {
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows);
  const bool big = rows * rows * dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t si = 0; si < n; ++si) {
    const auto i = static_cast<std::size_t>(si);
    const double* xi = x.data() + i * dim;
    for (std::size_t j = 0; j < rows; ++j) {
      const double* xj = x.data() + j * dim;
      double sum = 0.0;
      for (std::size_t p = 0; p < dim; ++p) {
        const double diff = xi[p] - xj[p];
        sum += diff * diff;
      }
      out[i * rows + j] = sum;
    }
  }
}

void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask) {
  const auto rows = static_cast<std::int64_t>(n);
  const bool big = n * n >= kParallelWork / 8;
#pragma omp parallel if (big)
  {
    std::vector<std::size_t> cand;
    cand.reserve(n);
#pragma omp for schedule(static)
    for (std::int64_t si = 0; si < rows; ++si) {
      const auto i = static_cast<std::size_t>(si);
      unsigned char* mrow = mask.data() + i * n;
      std::fill(mrow, mrow + n, static_cast<unsigned char>(0));
      cand.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) cand.push_back(j);
      const double* srow = s.data() + i * n;
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                        [srow](std::size_t x, std::size_t y) {
                          if (srow[x] != srow[y]) return srow[x] > srow[y];
                          return x < y;
                        });
      for (std::size_t r = 0; r < k; ++r) mrow[cand[r]] = 1;
    }
  }
}

}  // namespace omp

void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape) {
  omp::gemm(a, ta, b, tb, c, shape);
}

void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out) {
  omp::pairwise_sq_dist(x, rows, dim, out);
}

void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask) {
  omp::knn_select(s, n, k, mask);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace lgg::kernels
