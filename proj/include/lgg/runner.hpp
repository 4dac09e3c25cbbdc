#pragma once

// Training, distillation, evaluation and layer inspection pipelines. Every
// pipeline has an in-memory form and a run_* form that also writes the run
// directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgg/config.hpp"
#include "lgg/data.hpp"
#include "lgg/graph.hpp"
#include "lgg/mlp.hpp"
#include "lgg/objectives.hpp"
#include "lgg/robustness.hpp"

namespace lgg::harness {

struct EpochMetrics {
  std::size_t epoch = 0;
  /// Sample-weighted mean of the batch objectives.
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  /// Batch-averaged label variation per representation (regularized runs).
  std::vector<double> sigmas;
};

struct TrainOptions {
  ObjectiveKind objective = ObjectiveKind::cross_entropy;
  HeadKind head = HeadKind::softmax;
  obj::ObjectiveWeights weights;
  graph::GraphParams graph;
  OptimConfig optim;
  /// Drives batch order; initialization is the caller's.
  std::uint64_t seed = 1;
  /// Distillation only.
  const model::Mlp* teacher = nullptr;
  obj::LayerPairing pairing;
};

struct TrainResult {
  Classifier classifier;
  std::vector<EpochMetrics> metrics;
};

/// Plain SGD over stratified batches of the train split. Throws NumericError
/// naming the epoch and batch when the objective turns non-finite.
TrainResult fit(model::Mlp init, const data::Dataset& ds, const TrainOptions& opt);

/// Initial parameters for a run seed.
model::Mlp initial_network(std::vector<std::size_t> sizes, std::uint64_t seed);

/// Layer sizes input, hidden..., output.
std::vector<std::size_t> layer_sizes(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output);

data::Dataset load_dataset(const ExperimentConfig& cfg);

struct RobustnessReport {
  double clean_acc = 0.0;
  double fgsm_acc = 0.0;
  double epsilon = 0.0;
  CorruptionTable corruptions;
};

/// FGSM at eps_factor * mean feature std of the train split, clipped to the
/// train range, plus the default corruption suite on the test split.
RobustnessReport evaluate_robustness(const Classifier& c, const data::Dataset& ds, double eps_factor,
                                     std::uint64_t seed);

struct LayerReport {
  std::string name;
  graph::LatentGraph graph;
  graph::VariationValue sigma;
  graph::Eigenmap eigenmap;
};

/// per_class samples from each of the first `classes` classes (0: all) of
/// the test split, picked by seed, ordered by class.
std::vector<std::size_t> inspection_rows(const data::Dataset& ds, const InspectConfig& ic, std::uint64_t seed);

/// One unnormalized graph per representation (input, block 1, ...).
std::vector<LayerReport> inspect_layers(const model::Mlp& net, const data::Batch& sample,
                                        const graph::GraphParams& params);

struct RunRecord {
  std::filesystem::path out_dir;
  std::vector<EpochMetrics> metrics;
  std::optional<Classifier> classifier;
  /// key = value lines of summary.txt, in order.
  std::vector<std::pair<std::string, std::string>> summary;
};

RunRecord run_train(const ExperimentConfig& cfg);
RunRecord run_distill(const ExperimentConfig& cfg);
RunRecord run_evaluate(const ExperimentConfig& cfg);
RunRecord run_graph_inspect(const ExperimentConfig& cfg);

}  // namespace lgg::harness
