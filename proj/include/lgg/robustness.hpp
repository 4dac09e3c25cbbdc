#pragma once

// Classifier heads, FGSM attacks, feature-space corruptions and relative MCE.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lgg/config.hpp"
#include "lgg/data.hpp"
#include "lgg/mlp.hpp"

namespace lgg::harness {

/// A network plus the rule turning its output into class scores. The softmax
/// head reads the output as logits; the centroid head scores class c by
/// -|f(x) - mu_c|^2 with mu_c the mean train embedding of class c.
struct Classifier {
  model::Mlp net;
  HeadKind head = HeadKind::softmax;
  /// classes x output_dim, centroid head only.
  ad::Tensor centroids;

  /// Tape-aware class scores, B x C.
  ad::Tensor scores(const ad::Tensor& x) const;
  /// Arg-max of the scores, lowest index on ties.
  std::vector<int> predict(const ad::Tensor& x) const;
  std::size_t classes() const;
};

Classifier softmax_classifier(model::Mlp net);
/// Throws DegenerateInputError if a class has no sample in `train`.
Classifier centroid_classifier(model::Mlp net, const data::Batch& train, std::size_t classes);

double accuracy(const Classifier& c, const data::Batch& batch);

struct ClipRange {
  std::vector<double> lo, hi;
};

/// Per-feature [min, max] of the rows.
ClipRange feature_range(const ad::Tensor& x);
/// Mean over features of the per-feature standard deviation.
double mean_feature_std(const ad::Tensor& x);

/// x + eps * sign(grad_x cross_entropy(scores(x), y)), clipped per feature
/// when a range is given. sign(0) = 0. Coordinates of x outside the range
/// widen it to include x, so |x_adv - x| <= eps always holds.
ad::Tensor fgsm_attack(const Classifier& c, const ad::Tensor& x, std::span<const int> y, double epsilon,
                       const ClipRange* clip = nullptr);

enum class CorruptionKind { gaussian_noise, uniform_noise, feature_dropout };

struct Corruption {
  std::string name;
  CorruptionKind kind;
  /// Noise standard deviation in units of the feature std, or dropout rate.
  std::vector<double> severities;
};

/// Gaussian and uniform noise at {0.1, 0.2, 0.4} feature std, feature dropout
/// at {5%, 10%, 20%}.
std::vector<Corruption> default_corruption_suite();

/// One draw of the corruption at the given severity level.
ad::Tensor corrupt(const ad::Tensor& x, CorruptionKind kind, double severity, double feature_std,
                   std::uint64_t seed);

struct CorruptionTable {
  std::vector<Corruption> suite;
  double clean_error = 0.0;
  /// errors[c][s], fractions in [0, 1].
  std::vector<std::vector<double>> errors;
};

/// Throws UsageError on an empty suite.
CorruptionTable corruption_eval(const Classifier& c, const data::Batch& test, std::span<const Corruption> suite,
                                double feature_std, std::uint64_t seed);

/// 100 * mean over corruptions of sum_s E_model / sum_s E_baseline. Throws
/// UsageError if the suites differ, DegenerateInputError if a baseline row
/// sums to zero.
double relative_mce(const CorruptionTable& model, const CorruptionTable& baseline);

/// "corruption,severity,error" rows; severity 0 is the clean error.
void write_corruption_table(std::ostream& os, const CorruptionTable& t);

}  // namespace lgg::harness
