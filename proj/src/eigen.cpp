#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgg/errors.hpp"
#include "lgg/graph.hpp"

namespace lgg::graph {

SymmetricEigen jacobi_eigen(std::span<const double> input, std::size_t n, int max_sweeps) {
  if (input.size() != n * n) throw ShapeError("jacobi_eigen: expected an n x n matrix");
  std::vector<double> a(input.begin(), input.end());
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_diagonal = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return s;
  };
  double total = 0.0;
  for (double x : a) total += x * x;
  const double tol = std::max(total, 1e-300) * 1e-30;

  SymmetricEigen out;
  int sweep = 0;
  for (; sweep < max_sweeps && off_diagonal() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        // Rotation angle zeroing a(p, q), computed in the stable form.
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a[r * n + p], arq = a[r * n + q];
          a[r * n + p] = c * arp - s * arq;
          a[r * n + q] = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a[p * n + r], aqr = a[q * n + r];
          a[p * n + r] = c * apr - s * aqr;
          a[q * n + r] = s * apr + c * aqr;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v[r * n + p], vrq = v[r * n + q];
          v[r * n + p] = c * vrp - s * vrq;
          v[r * n + q] = s * vrp + c * vrq;
        }
      }
    }
  }
  if (off_diagonal() > tol) {
    throw NumericError("jacobi_eigen: no convergence after " + std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] < a[y * n + y]; });
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a[order[c] * n + order[c]];
    for (std::size_t r = 0; r < n; ++r) out.vectors[r * n + c] = v[r * n + order[c]];
  }
  out.sweeps = sweep;
  return out;
}

Eigenmap eigenmap_coords(const LatentGraph& g, std::size_t dim) {
  const std::size_t b = g.size();
  if (dim < 1 || b < dim + 1) {
    throw UsageError("eigenmap: need at least dim + 1 = " + std::to_string(dim + 1) + " vertices");
  }
  ad::NoTapeScope values_only;
  LatentGraph values = g;
  values.adjacency = g.adjacency.detach();
  const ad::Tensor lap = laplacian(values);
  const SymmetricEigen eig = jacobi_eigen(lap.data(), b);

  double scale = 1.0;
  for (double x : eig.values) scale = std::max(scale, std::fabs(x));
  const double zero_tol = 1e-9 * scale;

  Eigenmap out;
  out.spectrum = eig.values;
  while (out.zero_multiplicity < b && std::fabs(eig.values[out.zero_multiplicity]) <= zero_tol) {
    ++out.zero_multiplicity;
  }
  if (b - out.zero_multiplicity < dim) {
    throw DegenerateInputError("eigenmap: only " + std::to_string(b - out.zero_multiplicity) +
                               " nonzero eigenvalues, " + std::to_string(dim) + " requested");
  }
  std::vector<double> coords(b * dim);
  for (std::size_t c = 0; c < dim; ++c) {
    const std::size_t col = out.zero_multiplicity + c;
    out.eigenvalues.push_back(eig.values[col]);
    std::size_t arg = 0;
    for (std::size_t r = 1; r < b; ++r) {
      if (std::fabs(eig.vectors[r * b + col]) > std::fabs(eig.vectors[arg * b + col])) arg = r;
    }
    const double sign = eig.vectors[arg * b + col] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < b; ++r) coords[r * dim + c] = sign * eig.vectors[r * b + col];
  }
  out.coords = ad::Tensor::matrix(b, dim, std::move(coords));
  return out;
}

}  // namespace lgg::graph
