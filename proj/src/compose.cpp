#include "lgg/compose.hpp"

#include "lgg/errors.hpp"

namespace lgg::ad {

Tensor row_sums(const Tensor& x) { return matmul(x, Tensor::ones({x.cols(), 1})); }

Tensor repeat_cols(const Tensor& column, std::size_t n) {
  return matmul(column, Tensor::ones({1, n}));
}

Tensor repeat_rows(const Tensor& row, std::size_t m) { return matmul(Tensor::ones({m, 1}), row); }

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  return add(x, repeat_rows(bias, x.rows()));
}

Tensor diag(const Tensor& column) {
  const std::size_t n = column.rows();
  return mul(repeat_cols(column, n), Tensor::identity(n));
}

Tensor square(const Tensor& x) { return mul(x, x); }

Tensor frobenius_norm(const Tensor& x) { return sqrt(sum(square(x))); }

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> v(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw UsageError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes) + ")");
    }
    v[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::matrix(labels.size(), num_classes, std::move(v));
}

}  // namespace lgg::ad
