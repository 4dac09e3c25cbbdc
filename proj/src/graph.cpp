#include "lgg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"
#include "lgg/kernels.hpp"

namespace lgg::graph {

using ad::Tensor;

std::string_view to_string(Similarity s) {
  switch (s) {
    case Similarity::cosine: return "cosine";
    case Similarity::gaussian: return "gaussian";
    case Similarity::automatic: return "auto";
  }
  return "?";
}

Similarity parse_similarity(std::string_view s) {
  if (s == "cosine") return Similarity::cosine;
  if (s == "gaussian") return Similarity::gaussian;
  if (s == "auto") return Similarity::automatic;
  throw UsageError("unknown similarity '" + std::string(s) + "' (expected cosine, gaussian or auto)");
}

Tensor cosine_similarity_matrix(const Tensor& x) {
  const Tensor xn = ad::row_normalize(x);
  return ad::matmul(xn, ad::transpose(xn));
}

double median_bandwidth(const Tensor& x) {
  const std::size_t b = x.rows(), d = x.cols();
  if (b < 2) throw UsageError("median bandwidth needs at least 2 rows");
  std::vector<double> d2(b * b);
  kernels::pairwise_sq_dist(x.data(), b, d, d2);
  std::vector<double> dist;
  dist.reserve(b * (b - 1) / 2);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) dist.push_back(std::sqrt(d2[i * b + j]));
  std::sort(dist.begin(), dist.end());
  const std::size_t m = dist.size();
  const double med = m % 2 ? dist[m / 2] : 0.5 * (dist[m / 2 - 1] + dist[m / 2]);
  if (!(med > 0.0)) {
    throw DegenerateInputError("median bandwidth: pairwise distances have a zero median");
  }
  return med;
}

Tensor gaussian_similarity_matrix(const Tensor& x, std::optional<double> bandwidth) {
  const std::size_t b = x.rows();
  if (b < 2) throw UsageError("gaussian similarity needs at least 2 rows");
  const double h = bandwidth ? *bandwidth : median_bandwidth(x);
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw UsageError("gaussian bandwidth must be positive and finite, got " + format_sig(h, 6));
  }
  // |x_i - x_j|^2 = r_i + r_j - 2 <x_i, x_j>; relu removes rounding below zero.
  const Tensor r = ad::row_sums(ad::square(x));
  const Tensor rr = ad::repeat_cols(r, b);
  const Tensor gram = ad::matmul(x, ad::transpose(x));
  const Tensor d2 = ad::relu(ad::sub(ad::add(rr, ad::transpose(rr)), ad::scale(gram, 2.0)));
  return ad::exp(ad::scale(d2, -1.0 / (2.0 * h * h)));
}

namespace {

bool nonnegative_without_zero_rows(const Tensor& x) {
  const std::size_t b = x.rows(), d = x.cols();
  for (std::size_t i = 0; i < b; ++i) {
    bool nonzero = false;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x.at(i, j);
      if (v < 0.0) return false;
      if (v > 0.0) nonzero = true;
    }
    if (!nonzero) return false;
  }
  return true;
}

}  // namespace

LatentGraph build_lgg(const Tensor& x, std::size_t k, Similarity similarity, bool normalize,
                      std::optional<double> bandwidth) {
  if (x.rank() != 2) throw ShapeError("build_lgg: expected a B x d batch, got " + ad::to_string(x.shape()));
  const std::size_t b = x.rows();
  if (b < 2) throw UsageError("build_lgg: batch needs at least 2 samples");
  if (k < 1 || k > b - 1) {
    throw UsageError("build_lgg: k = " + std::to_string(k) + " outside [1, " + std::to_string(b - 1) + "]");
  }

  LatentGraph g;
  g.k = k;
  g.normalized = normalize;
  g.similarity = similarity == Similarity::automatic
                     ? (nonnegative_without_zero_rows(x) ? Similarity::cosine : Similarity::gaussian)
                     : similarity;

  Tensor s;
  if (g.similarity == Similarity::cosine) {
    // Negative cosines (possible only for signed data) carry no affinity.
    s = ad::relu(cosine_similarity_matrix(x));
  } else {
    g.bandwidth = bandwidth ? *bandwidth : median_bandwidth(x);
    s = gaussian_similarity_matrix(x, g.bandwidth);
  }

  std::vector<unsigned char> selected(b * b);
  kernels::knn_select(s.data(), b, k, selected);
  g.edges.assign(b * b, 0);
  std::vector<double> mask(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (i != j && (selected[i * b + j] || selected[j * b + i])) {
        g.edges[i * b + j] = 1;
        mask[i * b + j] = 1.0;
      }
    }
  }
  const Tensor masked = ad::mul(s, Tensor::matrix(b, b, std::move(mask)));
  // Average with the transpose so symmetry holds structurally, values and gradients alike.
  Tensor a = ad::scale(ad::add(masked, ad::transpose(masked)), 0.5);

  if (normalize) {
    const Tensor deg = ad::row_sums(a);
    for (std::size_t i = 0; i < b; ++i) {
      if (!(deg.at(i) > 0.0)) {
        throw DegenerateInputError("build_lgg: vertex " + std::to_string(i) +
                                   " has zero degree, cannot normalize");
      }
    }
    const Tensor inv_sqrt = ad::exp(ad::scale(ad::log(deg), -0.5));
    a = ad::mul(a, ad::matmul(inv_sqrt, ad::transpose(inv_sqrt)));
  }
  g.adjacency = std::move(a);
  return g;
}

LatentGraph build_lgg(const Tensor& x, const GraphParams& params) {
  return build_lgg(x, params.k, params.similarity, params.normalize, params.bandwidth);
}

LatentGraph graph_from_adjacency(const Tensor& adjacency, bool normalized) {
  const std::size_t b = adjacency.rows();
  if (adjacency.cols() != b) {
    throw ShapeError("adjacency must be square, got " + ad::to_string(adjacency.shape()));
  }
  LatentGraph g;
  g.normalized = normalized;
  g.edges.assign(b * b, 0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double v = adjacency.at(i, j);
      if (v != adjacency.at(j, i)) throw UsageError("adjacency is not symmetric");
      if (v < 0.0) throw UsageError("adjacency has a negative entry");
      if (i == j && v != 0.0) throw UsageError("adjacency has a nonzero diagonal");
      g.edges[i * b + j] = v != 0.0;
    }
  }
  g.adjacency = adjacency;
  return g;
}

Tensor degrees(const LatentGraph& g) { return ad::row_sums(g.adjacency); }

Tensor laplacian(const LatentGraph& g) { return ad::sub(ad::diag(degrees(g)), g.adjacency); }

// ---------------------------------------------------------------- labels

LabelIndicatorMatrix::LabelIndicatorMatrix(std::span<const int> class_of, std::size_t num_classes)
    : class_of_(class_of.begin(), class_of.end()) {
  if (class_of_.empty()) throw UsageError("label indicator matrix needs at least one row");
  int top = 0;
  for (int c : class_of_) {
    if (c < 0) throw UsageError("negative class index " + std::to_string(c));
    top = std::max(top, c);
  }
  num_classes_ = num_classes ? num_classes : static_cast<std::size_t>(top) + 1;
  values_ = ad::one_hot(class_of_, num_classes_);
}

std::size_t LabelIndicatorMatrix::classes_present() const {
  std::vector<bool> seen(num_classes_, false);
  for (int c : class_of_) seen[static_cast<std::size_t>(c)] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

// ---------------------------------------------------------------- variation

Tensor variation_trace(const LatentGraph& g, const Tensor& signals) {
  if (signals.rank() != 2 || signals.rows() != g.size()) {
    throw UsageError("signal matrix of shape " + ad::to_string(signals.shape()) +
                     " does not have one row per vertex (" + std::to_string(g.size()) + ")");
  }
  return ad::sum(ad::mul(signals, ad::matmul(laplacian(g), signals)));
}

VariationValue signal_variation(const LatentGraph& g, const Tensor& signals) {
  ad::NoTapeScope values_only;
  // PSD quadratic form; clamp rounding residue below zero.
  return {std::max(0.0, variation_trace(g, signals.detach()).item()), std::nullopt};
}

Tensor label_variation_trace(const LatentGraph& g, const LabelIndicatorMatrix& v) {
  if (v.rows() != g.size()) {
    throw UsageError("label indicator matrix has " + std::to_string(v.rows()) + " rows, graph has " +
                     std::to_string(g.size()) + " vertices");
  }
  // Equal to the Laplacian form with V as signals, but summed over the
  // inter-class mask so it is exactly zero when no edge crosses classes.
  const std::size_t b = g.size();
  const auto cls = v.class_of();
  std::vector<double> mask(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) mask[i * b + j] = cls[i] != cls[j] ? 1.0 : 0.0;
  return ad::sum(ad::mul(g.adjacency, Tensor::matrix(b, b, std::move(mask))));
}

VariationValue label_variation(const LatentGraph& g, const LabelIndicatorMatrix& v) {
  ad::NoTapeScope values_only;
  LatentGraph values = g;
  values.adjacency = g.adjacency.detach();
  return {std::max(0.0, label_variation_trace(values, v).item()), std::nullopt};
}

VariationValue normalized_label_variation(const LatentGraph& g, const LabelIndicatorMatrix& v) {
  if (g.normalized) {
    throw UsageError("normalized label variation is undefined on degree-normalized graphs");
  }
  const std::size_t b = g.size();
  constexpr double kSlack = 1e-12;
  for (double w : g.adjacency.data()) {
    if (w < 0.0 || w > 1.0 + kSlack) {
      throw UsageError("normalized label variation needs edge weights in [0, 1], found " +
                       format_sig(w, 9));
    }
  }
  auto value = label_variation(g, v);
  std::size_t pairs = 0;
  const auto cls = v.class_of();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) pairs += cls[i] != cls[j];
  if (pairs == 0) {
    throw DegenerateInputError("normalized label variation: batch holds a single class");
  }
  value.normalized = std::clamp(value.raw / (2.0 * static_cast<double>(pairs)), 0.0, 1.0);
  return value;
}

// ---------------------------------------------------------------- export

std::string format_sig(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_edge_list(std::ostream& os, const LatentGraph& g, std::span<const int> class_of,
                     bool inter_class_only) {
  const std::size_t b = g.size();
  if (inter_class_only && class_of.size() != b) {
    throw UsageError("inter-class edge filter needs one class per vertex");
  }
  os << "src\tdst\tweight\n";
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double w = g.adjacency.at(i, j);
      if (w == 0.0) continue;
      if (inter_class_only && class_of[i] == class_of[j]) continue;
      os << i << '\t' << j << '\t' << format_sig(w, 9) << '\n';
    }
  }
}

void write_eigenmap(std::ostream& os, const Eigenmap& map, std::span<const int> class_of) {
  const std::size_t b = map.coords.rows();
  const std::size_t dim = map.coords.cols();
  if (class_of.size() != b) throw UsageError("eigenmap export needs one class per vertex");
  os << "index\tclass\tx\ty\n";
  for (std::size_t i = 0; i < b; ++i) {
    os << i << '\t' << class_of[i] << '\t' << format_sig(map.coords.at(i, 0), 9) << '\t'
       << format_sig(dim > 1 ? map.coords.at(i, 1) : 0.0, 9) << '\n';
  }
}

}  // namespace lgg::graph
