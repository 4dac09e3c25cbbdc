#pragma once

// Datasets: synthetic generators, file loaders and stratified batching.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "lgg/tensor.hpp"

namespace lgg::data {

enum class Split : std::uint8_t { train, test };

struct Batch {
  ad::Tensor x;
  std::vector<int> y;
};

struct Dataset {
  /// N x d.
  ad::Tensor features;
  std::vector<int> labels;
  std::vector<Split> split;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::vector<std::size_t> indices(Split s) const;
  Batch gather(std::span<const std::size_t> rows) const;
  Batch subset(Split s) const { return gather(indices(s)); }

  /// Throws ValidationError if any class lacks a sample in either split or
  /// the row counts disagree.
  void validate() const;
};

/// Rows of b appended to a. Class counts take the larger of the two.
Dataset concat(const Dataset& a, const Dataset& b);

enum class CenterLayout { simplex, random };

struct BlobsSpec {
  std::size_t classes = 4;
  /// Samples per class in the train split.
  std::size_t per_class = 100;
  /// Samples per class in the test split; 0 means per_class.
  std::size_t test_per_class = 0;
  std::size_t dim = 10;
  double separation = 4.0;
  CenterLayout layout = CenterLayout::simplex;
  std::uint64_t seed = 0;
};

/// Unit-variance isotropic Gaussian classes centered at separation * u_c, with
/// u_c the vertices of a regular simplex (unit norm, centered at the origin).
/// Throws UsageError if the simplex does not fit (classes > dim + 1).
Dataset make_blobs(const BlobsSpec& spec);
Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                   std::uint64_t seed);

/// Unit-norm class centers used by make_blobs, classes x dim.
std::vector<double> class_centers(const BlobsSpec& spec);

struct RingsSpec {
  std::size_t per_class = 100;
  std::size_t test_per_class = 0;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Two concentric circles in the plane, radii 1 (class 0) and 2 (class 1),
/// with Gaussian radial noise.
Dataset make_rings(const RingsSpec& spec);

/// Comma-separated file with a header row. Every column except the label
/// column (and an optional "split" column holding train/test) is a feature.
/// Rows without a split column are tagged default_split. Throws FormatError
/// with the line number on parse failures.
Dataset load_csv_dataset(const std::filesystem::path& path, std::string_view label_column,
                         Split default_split = Split::train);

/// Big-endian IDX pair (magic 0x00000803 images, 0x00000801 labels); pixels
/// are scaled to [0, 1]. Throws FormatError with the byte offset on failure.
Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      Split split = Split::train);

/// Class-stratified mini-batches of one split. Each epoch deals every sample
/// of the split exactly once; every batch holds at least two classes.
class StratifiedBatches {
 public:
  /// Throws UsageError if batch_size < 2 * num_classes, DegenerateInputError
  /// if the split holds fewer than two classes. With stratified = false the
  /// split is shuffled and cut into near-equal batches with no class guarantee.
  StratifiedBatches(const Dataset& ds, Split split, std::size_t batch_size, std::uint64_t seed,
                    bool stratified = true);

  /// Row indices into the dataset for every batch of the given epoch.
  std::vector<std::vector<std::size_t>> epoch(std::size_t index) const;
  std::size_t batches_per_epoch() const { return batches_; }

 private:
  std::vector<std::vector<std::size_t>> by_class_;
  std::size_t batches_ = 1;
  std::uint64_t seed_ = 0;
};

}  // namespace lgg::data
