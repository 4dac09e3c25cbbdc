#pragma once

// Latent geometry graphs: k-nearest-neighbor similarity graphs whose vertices
// are the samples of a batch, and the variation measures defined on them.
//
// Construction is differentiable with respect to the representations. The
// k-NN mask is computed from the similarity values and then held constant, as
// is a median-rule bandwidth; gradients flow through the retained similarity
// values and through degree normalization.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgg/tensor.hpp"

namespace lgg::graph {

enum class Similarity {
  cosine,
  gaussian,
  /// Cosine for nonnegative data without zero rows, gaussian otherwise.
  automatic,
};

std::string_view to_string(Similarity s);
/// Accepts "cosine", "gaussian", "auto". Throws UsageError otherwise.
Similarity parse_similarity(std::string_view s);

struct GraphParams {
  Similarity similarity = Similarity::gaussian;
  std::size_t k = 5;
  bool normalize = false;
  /// Gaussian kernel width; nullopt selects the median pairwise distance.
  std::optional<double> bandwidth;
};

/// S_ij = <x_i, x_j> / (|x_i| |x_j|). Throws DegenerateInputError naming the
/// first zero-norm row.
ad::Tensor cosine_similarity_matrix(const ad::Tensor& x);

/// S_ij = exp(-|x_i - x_j|^2 / (2 h^2)). With no bandwidth the median of the
/// B(B-1)/2 pairwise distances is used, held constant for differentiation.
ad::Tensor gaussian_similarity_matrix(const ad::Tensor& x, std::optional<double> bandwidth = {});

/// Median of the pairwise Euclidean distances between rows.
double median_bandwidth(const ad::Tensor& x);

struct LatentGraph {
  /// Symmetric, nonnegative, zero diagonal. Tracked when built from tracked data.
  ad::Tensor adjacency;
  /// Row-major B x B retained-edge indicator after union symmetrization.
  std::vector<unsigned char> edges;
  std::size_t k = 0;
  Similarity similarity = Similarity::gaussian;
  bool normalized = false;
  /// Bandwidth used by a gaussian graph.
  std::optional<double> bandwidth;

  std::size_t size() const { return adjacency.rows(); }
  bool has_edge(std::size_t i, std::size_t j) const { return edges[i * size() + j] != 0; }
};

/// Steps: full similarity matrix, per-row top-k off-diagonal (ties to the
/// lower index), union symmetrization keeping weight S_ij, then optional
/// D^{-1/2} A D^{-1/2}. Throws UsageError unless 1 <= k <= B-1.
LatentGraph build_lgg(const ad::Tensor& x, std::size_t k, Similarity similarity, bool normalize,
                      std::optional<double> bandwidth = {});
LatentGraph build_lgg(const ad::Tensor& x, const GraphParams& params);

/// Graph from an explicit symmetric nonnegative adjacency (zero diagonal).
LatentGraph graph_from_adjacency(const ad::Tensor& adjacency, bool normalized = false);

/// Degree vector as a B x 1 tensor.
ad::Tensor degrees(const LatentGraph& g);
/// Combinatorial Laplacian D - A.
ad::Tensor laplacian(const LatentGraph& g);

class LabelIndicatorMatrix {
 public:
  /// num_classes == 0 uses max(class_of) + 1.
  explicit LabelIndicatorMatrix(std::span<const int> class_of, std::size_t num_classes = 0);

  const ad::Tensor& values() const { return values_; }
  std::span<const int> class_of() const { return class_of_; }
  std::size_t rows() const { return class_of_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  /// Number of distinct classes actually present.
  std::size_t classes_present() const;

 private:
  std::vector<int> class_of_;
  std::size_t num_classes_ = 0;
  ad::Tensor values_;
};

struct VariationValue {
  double raw = 0.0;
  std::optional<double> normalized;
};

/// tr(S^T L S) as a differentiable scalar.
ad::Tensor variation_trace(const LatentGraph& g, const ad::Tensor& signals);
VariationValue signal_variation(const LatentGraph& g, const ad::Tensor& signals);

/// tr(V^T L V) as a differentiable scalar.
ad::Tensor label_variation_trace(const LatentGraph& g, const LabelIndicatorMatrix& v);
VariationValue label_variation(const LatentGraph& g, const LabelIndicatorMatrix& v);

/// Label variation divided by its value on the graph joining every
/// distinct-class pair with weight 1. Only defined for unnormalized graphs
/// with weights in [0, 1] and batches holding at least two classes.
VariationValue normalized_label_variation(const LatentGraph& g, const LabelIndicatorMatrix& v);

struct SymmetricEigen {
  /// Ascending.
  std::vector<double> values;
  /// Row-major n x n; column c is the eigenvector of values[c].
  std::vector<double> vectors;
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Throws
/// NumericError if the off-diagonal mass does not vanish within max_sweeps.
SymmetricEigen jacobi_eigen(std::span<const double> a, std::size_t n, int max_sweeps = 100);

struct Eigenmap {
  /// B x dim.
  ad::Tensor coords;
  /// Eigenvalues belonging to the returned columns.
  std::vector<double> eigenvalues;
  /// Full ascending spectrum of L.
  std::vector<double> spectrum;
  /// Number of (numerically) zero eigenvalues, i.e. connected components.
  std::size_t zero_multiplicity = 0;
};

/// Laplacian eigenmap on the eigenvectors of the dim smallest nonzero
/// eigenvalues. Each column is signed so its largest-magnitude entry is
/// positive.
Eigenmap eigenmap_coords(const LatentGraph& g, std::size_t dim = 2);

/// "src\tdst\tweight" header then one line per edge i < j with nonzero weight,
/// weight printed with 9 significant digits. With inter_class_only, only edges
/// joining distinct classes are written (class_of must then be provided).
void write_edge_list(std::ostream& os, const LatentGraph& g, std::span<const int> class_of = {},
                     bool inter_class_only = false);

/// "index\tclass\tx\ty" header then one row per vertex.
void write_eigenmap(std::ostream& os, const Eigenmap& map, std::span<const int> class_of);

/// printf-style %.<digits>g formatting.
std::string format_sig(double v, int digits);

}  // namespace lgg::graph
