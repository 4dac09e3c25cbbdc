#pragma once

// Differentiable training objectives built on latent geometry graphs.

#include <span>
#include <utility>
#include <vector>

#include "lgg/graph.hpp"
#include "lgg/tensor.hpp"

namespace lgg::obj {

struct ObjectiveWeights {
  double lambda_kd = 1.0;
  double gamma = 1.0;

  /// Throws UsageError unless both are finite and >= 0.
  void validate() const;
};

/// (teacher block, student block) pairs, 1-based block indices into the
/// respective activation traces (0 is the input).
struct LayerPairing {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  /// Throws UsageError unless indices are in [1, blocks] and strictly
  /// increasing in both coordinates.
  void validate(std::size_t teacher_blocks, std::size_t student_blocks) const;

  /// Hidden-block pairing. Equal depth pairs block l with block l; otherwise
  /// student block l pairs with teacher block round(l * teacher / student).
  static LayerPairing automatic(std::size_t teacher_hidden, std::size_t student_hidden);
};

/// Mean over the batch of -log softmax(logits)_y, with max subtraction.
ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::span<const int> labels);

/// |A_T - A_S|_F between two graphs on the same batch.
ad::Tensor gkd_loss(const graph::LatentGraph& teacher, const graph::LatentGraph& student);

/// task + lambda_kd * sum(kd). With lambda_kd == 0 the task loss is returned
/// unchanged.
ad::Tensor distillation_objective(const ad::Tensor& task_loss, std::span<const ad::Tensor> kd_losses,
                                  const ObjectiveWeights& weights);

/// Label variation of the graph built on the embeddings. Throws
/// DegenerateInputError when the batch holds a single class.
ad::Tensor label_variation_loss(const ad::Tensor& embeddings, std::span<const int> labels,
                                const graph::GraphParams& params);

struct RegularizerResult {
  ad::Tensor value;
  /// Label variation of every representation, in trace order.
  std::vector<double> sigmas;
};

/// sum over consecutive representations of |sigma^{l+1} - sigma^l|, one graph
/// per representation. A nonempty `bandwidths` overrides the gaussian width of
/// each representation's graph. Throws UsageError with fewer than 2
/// representations.
RegularizerResult smoothness_regularizer(std::span<const ad::Tensor> representations,
                                         std::span<const int> labels,
                                         const graph::GraphParams& params,
                                         std::span<const double> bandwidths = {});

}  // namespace lgg::obj
