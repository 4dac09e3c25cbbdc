#include "lgg/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"

namespace lgg::obj {

using ad::Tensor;

void ObjectiveWeights::validate() const {
  if (!std::isfinite(lambda_kd) || lambda_kd < 0.0) throw UsageError("lambda_kd must be finite and >= 0");
  if (!std::isfinite(gamma) || gamma < 0.0) throw UsageError("gamma must be finite and >= 0");
}

void LayerPairing::validate(std::size_t teacher_blocks, std::size_t student_blocks) const {
  if (pairs.empty()) throw UsageError("layer pairing is empty");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [t, s] = pairs[i];
    if (t < 1 || t > teacher_blocks || s < 1 || s > student_blocks) {
      throw UsageError("layer pair (" + std::to_string(t) + ", " + std::to_string(s) +
                       ") outside teacher [1, " + std::to_string(teacher_blocks) + "], student [1, " +
                       std::to_string(student_blocks) + "]");
    }
    if (i > 0 && (t <= pairs[i - 1].first || s <= pairs[i - 1].second)) {
      throw UsageError("layer pairs must be strictly increasing in both coordinates");
    }
  }
}

LayerPairing LayerPairing::automatic(std::size_t teacher_hidden, std::size_t student_hidden) {
  if (teacher_hidden == 0 || student_hidden == 0) {
    throw UsageError("automatic pairing needs hidden blocks in both networks");
  }
  LayerPairing p;
  for (std::size_t l = 1; l <= student_hidden; ++l) {
    const double ratio = static_cast<double>(l * teacher_hidden) / static_cast<double>(student_hidden);
    const auto t = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(ratio)), 1, teacher_hidden);
    if (!p.pairs.empty() && t <= p.pairs.back().first) continue;
    p.pairs.emplace_back(t, l);
  }
  return p;
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be B x C");
  const std::size_t b = logits.rows(), c = logits.cols();
  if (c < 2) throw UsageError("cross_entropy: needs at least 2 classes");
  if (labels.size() != b) {
    throw UsageError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw UsageError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " >= " + std::to_string(c) + " classes");
    }
  }
  // Row maxima are constants; softmax is invariant to them.
  std::vector<double> shift(b * c);
  for (std::size_t i = 0; i < b; ++i) {
    double m = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits.at(i, j));
    std::fill(shift.begin() + static_cast<std::ptrdiff_t>(i * c),
              shift.begin() + static_cast<std::ptrdiff_t>((i + 1) * c), m);
  }
  const Tensor z = ad::sub(logits, Tensor::matrix(b, c, std::move(shift)));
  const Tensor log_norm = ad::log(ad::row_sums(ad::exp(z)));
  const Tensor picked = ad::row_sums(ad::mul(z, ad::one_hot(labels, c)));
  return ad::mean(ad::sub(log_norm, picked));
}

Tensor gkd_loss(const graph::LatentGraph& teacher, const graph::LatentGraph& student) {
  if (teacher.size() != student.size()) {
    throw UsageError("gkd_loss: teacher graph has " + std::to_string(teacher.size()) +
                     " vertices, student graph " + std::to_string(student.size()));
  }
  return ad::frobenius_norm(ad::sub(teacher.adjacency, student.adjacency));
}

Tensor distillation_objective(const Tensor& task_loss, std::span<const Tensor> kd_losses,
                              const ObjectiveWeights& weights) {
  weights.validate();
  if (weights.lambda_kd == 0.0 || kd_losses.empty()) return task_loss;
  Tensor kd = kd_losses[0];
  for (std::size_t i = 1; i < kd_losses.size(); ++i) kd = ad::add(kd, kd_losses[i]);
  return ad::add(task_loss, ad::scale(kd, weights.lambda_kd));
}

namespace {

void require_two_classes(const graph::LabelIndicatorMatrix& v, std::string_view what) {
  if (v.classes_present() < 2) {
    throw DegenerateInputError(std::string(what) + ": batch holds a single class");
  }
}

}  // namespace

Tensor label_variation_loss(const Tensor& embeddings, std::span<const int> labels,
                            const graph::GraphParams& params) {
  if (embeddings.rank() != 2 || embeddings.rows() != labels.size()) {
    throw UsageError("label_variation_loss: need one label per embedding row");
  }
  if (labels.size() < 2) throw DegenerateInputError("label_variation_loss: batch needs B >= 2");
  const graph::LabelIndicatorMatrix v(labels);
  require_two_classes(v, "label_variation_loss");
  const auto g = graph::build_lgg(embeddings, params);
  return graph::label_variation_trace(g, v);
}

RegularizerResult smoothness_regularizer(std::span<const Tensor> representations,
                                         std::span<const int> labels,
                                         const graph::GraphParams& params,
                                         std::span<const double> bandwidths) {
  if (representations.size() < 2) {
    throw UsageError("smoothness_regularizer: needs at least 2 representations, got " +
                     std::to_string(representations.size()));
  }
  const graph::LabelIndicatorMatrix v(labels);
  require_two_classes(v, "smoothness_regularizer");
  if (!bandwidths.empty() && bandwidths.size() != representations.size()) {
    throw UsageError("smoothness_regularizer: expected one bandwidth per representation");
  }
  RegularizerResult out;
  std::vector<Tensor> sigmas;
  for (std::size_t l = 0; l < representations.size(); ++l) {
    const Tensor& x = representations[l];
    if (x.rank() != 2 || x.rows() != labels.size()) {
      throw UsageError("smoothness_regularizer: representation of shape " + ad::to_string(x.shape()) +
                       " does not match " + std::to_string(labels.size()) + " labels");
    }
    graph::GraphParams p = params;
    if (!bandwidths.empty()) p.bandwidth = bandwidths[l];
    sigmas.push_back(graph::label_variation_trace(graph::build_lgg(x, p), v));
    out.sigmas.push_back(sigmas.back().item());
  }
  Tensor total = ad::abs(ad::sub(sigmas[1], sigmas[0]));
  for (std::size_t l = 2; l < sigmas.size(); ++l) {
    total = ad::add(total, ad::abs(ad::sub(sigmas[l], sigmas[l - 1])));
  }
  out.value = total;
  return out;
}

}  // namespace lgg::obj
