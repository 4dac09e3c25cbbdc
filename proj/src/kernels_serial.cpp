#include "lgg/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace lgg::kernels::serial {

void gemm(std::span<const double> a, Trans ta, std::span<const double> b, Trans tb,
          std::span<double> c, GemmShape shape) {
  const auto [m, k, n] = shape;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::no ? b[p * n + j] : b[j * k + p];
        sum += av * bv;
      }
      c[i * n + j] = sum;
    }
  }
}

void pairwise_sq_dist(std::span<const double> x, std::size_t rows, std::size_t dim,
                      std::span<double> out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < rows; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < dim; ++p) {
        const double diff = x[i * dim + p] - x[j * dim + p];
        sum += diff * diff;
      }
      out[i * rows + j] = sum;
    }
  }
}

void knn_select(std::span<const double> s, std::size_t n, std::size_t k,
                std::span<unsigned char> mask) {
  std::fill(mask.begin(), mask.end(), static_cast<unsigned char>(0));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Move self to the back so it is never selected.
    std::swap(order[i], order[n - 1]);
    std::stable_sort(order.begin(), order.end() - 1, [&](std::size_t x, std::size_t y) {
      const double vx = s[i * n + x];
      const double vy = s[i * n + y];
      if (vx != vy) return vx > vy;
      return x < y;
    });
    for (std::size_t r = 0; r < k; ++r) mask[i * n + order[r]] = 1;
  }
}

}  // namespace lgg::kernels::serial
