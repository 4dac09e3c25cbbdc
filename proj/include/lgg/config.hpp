#pragma once

// Experiment configuration: a flat "section.key = value" text file.
// docs/config.md lists every key, its default and its range.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgg/graph.hpp"
#include "lgg/objectives.hpp"

namespace lgg::harness {

enum class ObjectiveKind { cross_entropy, label_variation, cross_entropy_regularized, distill };
enum class HeadKind { softmax, centroid };
enum class DataKind { blobs, rings, csv, idx };

std::string_view to_string(ObjectiveKind k);
std::string_view to_string(HeadKind k);

struct DataConfig {
  DataKind kind = DataKind::blobs;
  std::size_t classes = 4;
  std::size_t per_class = 100;
  std::size_t test_per_class = 0;
  std::size_t dim = 10;
  double separation = 4.0;
  double noise = 0.05;
  /// Dataset seed; defaults to the run seed.
  std::optional<std::uint64_t> seed;
  std::filesystem::path csv_train, csv_test;
  std::string label_column = "label";
  std::filesystem::path idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
};

struct OptimConfig {
  double lr = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  /// Every batch holds at least two classes; needed by the graph objectives.
  bool stratified = true;
  bool linear_decay = false;
  bool adversarial_training = false;
  /// In units of the mean per-feature standard deviation of the train split.
  double adversarial_epsilon = 0.3;
};

struct EvalConfig {
  double fgsm_epsilon = 0.3;
  std::filesystem::path baseline_weights;
  std::optional<HeadKind> baseline_head;
};

struct InspectConfig {
  std::size_t per_class = 5;
  /// Number of classes sampled; 0 means all.
  std::size_t classes = 4;
  bool inter_class_only = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";

  DataConfig data;

  std::vector<std::size_t> hidden{32, 32};
  /// 0 means the number of classes.
  std::size_t output_dim = 0;
  std::optional<HeadKind> head;
  std::filesystem::path weights;

  std::vector<std::size_t> teacher_hidden{128, 128};
  std::filesystem::path teacher_weights;

  ObjectiveKind objective = ObjectiveKind::cross_entropy;
  obj::ObjectiveWeights weights_kd;
  std::optional<obj::LayerPairing> pairing;
  bool student_baseline = false;

  graph::GraphParams graph;
  /// Unset: normalized for distillation, unnormalized otherwise.
  std::optional<bool> graph_normalize;

  OptimConfig optim;
  EvalConfig eval;
  InspectConfig inspect;

  bool checked = true;

  /// The raw text the config was parsed from, written back verbatim.
  std::string source_text;

  HeadKind resolved_head() const;
  bool resolved_normalize() const;
  graph::GraphParams resolved_graph() const;
};

/// Parses the text. Relative paths are resolved against base_dir. Throws
/// ConfigError naming the line for unknown keys, duplicates and bad values.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Checks cross-field constraints and that referenced input files exist for
/// the given command ("train", "distill", "evaluate", "graph-inspect").
void validate_config(const ExperimentConfig& cfg, std::string_view command);

}  // namespace lgg::harness
