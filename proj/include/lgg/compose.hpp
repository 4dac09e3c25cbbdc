#pragma once

// Shape-alignment helpers expressed with primitives only, so they are
// differentiable without any broadcasting support in the engine.

#include <span>

#include "lgg/tensor.hpp"

namespace lgg::ad {

/// B x n -> B x 1.
Tensor row_sums(const Tensor& x);
/// B x 1 -> B x n, each row repeating its single value.
Tensor repeat_cols(const Tensor& column, std::size_t n);
/// 1 x n -> m x n.
Tensor repeat_rows(const Tensor& row, std::size_t m);
/// x + 1 * bias for a 1 x n bias.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
/// Square matrix with the given B x 1 column on its diagonal.
Tensor diag(const Tensor& column);
/// Plain (unsquared) Frobenius norm.
Tensor frobenius_norm(const Tensor& x);
Tensor square(const Tensor& x);
/// Constant B x C one-hot matrix.
Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace lgg::ad
