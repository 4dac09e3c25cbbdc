#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lgg/errors.hpp"
#include "lgg/graph.hpp"

using namespace lgg;
using namespace lgg::graph;
using ad::Tensor;

namespace {

Tensor random_batch(std::size_t b, std::size_t d, std::mt19937_64& rng, bool nonnegative = false) {
  std::normal_distribution<double> g;
  std::vector<double> v(b * d);
  for (auto& x : v) x = nonnegative ? std::fabs(g(rng)) + 0.01 : g(rng);
  return Tensor::matrix(b, d, v);
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

std::vector<int> random_labels(std::size_t b, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(b);
  for (auto& c : y) c = u(rng);
  return y;
}

Tensor cycle4() {
  return Tensor::from_rows({{0, 1, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}, {1, 0, 1, 0}});
}

}  // namespace

TEST(Similarity, CosineExamples) {
  EXPECT_DOUBLE_EQ(cosine_similarity_matrix(Tensor::from_rows({{2, 3}, {2, 3}})).at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity_matrix(Tensor::from_rows({{1, 0}, {0, 1}})).at(0, 1), 0.0);
  EXPECT_NEAR(cosine_similarity_matrix(Tensor::from_rows({{1, 1}, {1, 0}})).at(0, 1), 1 / std::sqrt(2.0), 1e-15);
}

TEST(Similarity, CosineZeroRowNamed) {
  try {
    cosine_similarity_matrix(Tensor::from_rows({{1, 1}, {0, 0}, {1, 0}}));
    FAIL() << "expected DegenerateInputError";
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Similarity, GaussianExamples) {
  const double h = 0.7;
  const Tensor x = Tensor::from_rows({{0, 0}, {0, 0}, {h * std::sqrt(2.0), 0}});
  const Tensor s = gaussian_similarity_matrix(x, h);
  EXPECT_DOUBLE_EQ(s.at(0, 1), 1.0);
  EXPECT_NEAR(s.at(0, 2), std::exp(-1.0), 1e-15);
}

TEST(Similarity, GaussianTranslationInvariant) {
  std::mt19937_64 rng(1);
  const Tensor x = random_batch(9, 4, rng);
  std::vector<double> shifted(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 3.0 - 0.5 * static_cast<double>(i % 4);
  const Tensor a = gaussian_similarity_matrix(x);
  const Tensor b = gaussian_similarity_matrix(Tensor::matrix(9, 4, shifted));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
}

TEST(Similarity, MedianOfZeroDistancesIsDegenerate) {
  EXPECT_THROW(gaussian_similarity_matrix(Tensor::from_rows({{1, 2}, {1, 2}, {1, 2}})), DegenerateInputError);
  EXPECT_THROW(median_bandwidth(Tensor::from_rows({{1, 2}})), UsageError);
}

TEST(Similarity, MedianBandwidthByHand) {
  // Distances 1, 2, 3 between three collinear points.
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::from_rows({{0}, {1}, {3}})), 2.0);
  // Four points: six distances, median is the mean of the middle two.
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::from_rows({{0}, {1}, {3}, {10}})), (3.0 + 7.0) / 2);
}

TEST(Similarity, ParseNames) {
  EXPECT_EQ(parse_similarity("cosine"), Similarity::cosine);
  EXPECT_EQ(parse_similarity("gaussian"), Similarity::gaussian);
  EXPECT_EQ(parse_similarity("auto"), Similarity::automatic);
  EXPECT_THROW(parse_similarity("rbf"), UsageError);
}

TEST(BuildLgg, FullKGivesCompleteGraph) {
  std::mt19937_64 rng(2);
  const auto g = build_lgg(random_batch(3, 2, rng), 2, Similarity::gaussian, false);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.has_edge(i, j), i != j);
}

TEST(BuildLgg, UnionSymmetrizationKeepsOneSidedEdges) {
  // 1-D points 0, 1, 3, 10 with k = 1: rows pick 0->1, 1->0, 3->1, 10->3.
  const Tensor x = Tensor::from_rows({{0}, {1}, {3}, {10}});
  const auto g = build_lgg(x, 1, Similarity::gaussian, false);
  const Tensor s = gaussian_similarity_matrix(x, g.bandwidth);
  const std::vector<std::pair<int, int>> expected{{0, 1}, {1, 2}, {2, 3}};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const bool want = std::find(expected.begin(), expected.end(), std::pair<int, int>(std::min(i, j), std::max(i, j))) !=
                        expected.end();
      EXPECT_EQ(g.has_edge(i, j), want) << i << "," << j;
      EXPECT_EQ(g.adjacency.at(i, j), want ? s.at(i, j) : 0.0);
    }
  }
}

TEST(BuildLgg, OrRuleAgainstBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 4 + trial % 10, k = 1 + trial % (b - 1);
    const Tensor x = random_batch(b, 3, rng);
    const auto g = build_lgg(x, k, Similarity::gaussian, false);
    const Tensor s = gaussian_similarity_matrix(x, g.bandwidth);
    auto in_topk = [&](std::size_t i, std::size_t j) {
      std::size_t better = 0;
      for (std::size_t c = 0; c < b; ++c) {
        if (c == i || c == j) continue;
        if (s.at(i, c) > s.at(i, j) || (s.at(i, c) == s.at(i, j) && c < j)) ++better;
      }
      return better < k;
    };
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        ASSERT_EQ(g.has_edge(i, j), i != j && (in_topk(i, j) || in_topk(j, i))) << trial;
  }
}

TEST(BuildLgg, UniformDegreeNormalizationDividesByDegree) {
  // Eight points evenly spaced on a circle, k = 2: a cycle with equal weights.
  std::vector<double> v;
  for (int i = 0; i < 8; ++i) {
    v.push_back(std::cos(i * M_PI / 4));
    v.push_back(std::sin(i * M_PI / 4));
  }
  const Tensor x = Tensor::matrix(8, 2, v);
  const auto plain = build_lgg(x, 2, Similarity::gaussian, false);
  const auto norm = build_lgg(x, 2, Similarity::gaussian, true);
  const double c = degrees(plain).at(0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(degrees(plain).at(i), c, 1e-14);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(norm.adjacency.at(i), plain.adjacency.at(i) / c, 1e-14);
}

TEST(BuildLgg, KOutOfRange) {
  std::mt19937_64 rng(4);
  const Tensor x = random_batch(5, 2, rng);
  EXPECT_THROW(build_lgg(x, 0, Similarity::gaussian, false), UsageError);
  EXPECT_THROW(build_lgg(x, 5, Similarity::gaussian, false), UsageError);
  EXPECT_NO_THROW(build_lgg(x, 4, Similarity::gaussian, false));
}

TEST(BuildLgg, AutoPicksCosineForNonnegativeData) {
  std::mt19937_64 rng(5);
  EXPECT_EQ(build_lgg(random_batch(6, 3, rng, true), 2, Similarity::automatic, false).similarity, Similarity::cosine);
  EXPECT_EQ(build_lgg(random_batch(6, 3, rng), 2, Similarity::automatic, false).similarity, Similarity::gaussian);
}

TEST(Laplacian, TwoNodes) {
  const auto g = graph_from_adjacency(Tensor::from_rows({{0, 1}, {1, 0}}));
  EXPECT_EQ(laplacian(g).values(), (std::vector<double>{1, -1, -1, 1}));
}

TEST(Laplacian, RowSumsZeroAndPositiveSemidefinite) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + trial % 15;
    const auto g = build_lgg(random_batch(b, 4, rng), 1 + trial % (b - 1), Similarity::gaussian, false);
    const Tensor l = laplacian(g);
    for (std::size_t i = 0; i < b; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < b; ++j) row += l.at(i, j);
      EXPECT_NEAR(row, 0.0, 1e-12);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(l));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Variation, HandExamples) {
  const auto edge = graph_from_adjacency(Tensor::from_rows({{0, 1}, {1, 0}}));
  EXPECT_DOUBLE_EQ(signal_variation(edge, Tensor::matrix(2, 1, {0, 1})).raw, 1.0);
  const int distinct[] = {0, 1};
  EXPECT_DOUBLE_EQ(label_variation(edge, LabelIndicatorMatrix(distinct)).raw, 2.0);
  const int same[] = {1, 1};
  EXPECT_DOUBLE_EQ(label_variation(edge, LabelIndicatorMatrix(same, 2)).raw, 0.0);
}

TEST(Variation, ConstantSignalIsZero) {
  std::mt19937_64 rng(7);
  const auto g = build_lgg(random_batch(10, 3, rng), 4, Similarity::gaussian, false);
  EXPECT_NEAR(signal_variation(g, Tensor::filled({10, 2}, 3.5)).raw, 0.0, 1e-12);
}

TEST(Variation, RowMismatchIsUsageError) {
  std::mt19937_64 rng(8);
  const auto g = build_lgg(random_batch(5, 3, rng), 2, Similarity::gaussian, false);
  EXPECT_THROW(signal_variation(g, Tensor::zeros({4, 1})), UsageError);
  const int labels[] = {0, 1, 0};
  EXPECT_THROW(label_variation(g, LabelIndicatorMatrix(labels)), UsageError);
}

TEST(Variation, TraceEqualsHalfPairSumAndTwiceInterClassWeight) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + trial % 15;
    const auto g = build_lgg(random_batch(b, 3, rng), 1 + trial % (b - 1),
                             trial % 2 ? Similarity::cosine : Similarity::gaussian, trial % 6 == 0);
    const Tensor s = random_batch(b, 3, rng);
    double pair = 0;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t c = 0; c < 3; ++c) pair += g.adjacency.at(i, j) * std::pow(s.at(i, c) - s.at(j, c), 2);
    EXPECT_NEAR(signal_variation(g, s).raw, 0.5 * pair, 1e-10);

    const auto y = random_labels(b, 3, rng);
    double inter = 0;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = i + 1; j < b; ++j) inter += y[i] != y[j] ? g.adjacency.at(i, j) : 0.0;
    const double lv = label_variation(g, LabelIndicatorMatrix(y, 3)).raw;
    EXPECT_NEAR(lv, 2 * inter, 1e-10);
    EXPECT_GE(lv, 0.0);
  }
}

TEST(Variation, NormalizedBounds) {
  const int labels[] = {0, 0, 1, 1};
  // Complete graph with unit weights attains the maximum.
  const auto complete = graph_from_adjacency(
      Tensor::from_rows({{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}}));
  EXPECT_DOUBLE_EQ(*normalized_label_variation(complete, LabelIndicatorMatrix(labels)).normalized, 1.0);
  // Only intra-class edges: zero.
  const auto intra = graph_from_adjacency(
      Tensor::from_rows({{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}}));
  EXPECT_DOUBLE_EQ(*normalized_label_variation(intra, LabelIndicatorMatrix(labels)).normalized, 0.0);
  const int single[] = {2, 2, 2, 2};
  EXPECT_THROW(normalized_label_variation(complete, LabelIndicatorMatrix(single)), DegenerateInputError);
  std::mt19937_64 rng(10);
  const auto normalized = build_lgg(random_batch(4, 2, rng), 2, Similarity::gaussian, true);
  EXPECT_THROW(normalized_label_variation(normalized, LabelIndicatorMatrix(labels)), UsageError);
}

TEST(Variation, NormalizedInUnitInterval) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 4 + trial % 12;
    auto y = random_labels(b, 3, rng);
    y[0] = 0;
    y[1] = 1;
    const auto g = build_lgg(random_batch(b, 4, rng, trial % 2), 1 + trial % (b - 1),
                             trial % 2 ? Similarity::cosine : Similarity::gaussian, false);
    const double n = *normalized_label_variation(g, LabelIndicatorMatrix(y)).normalized;
    EXPECT_GE(n, 0.0);
    EXPECT_LE(n, 1.0);
  }
}

TEST(LabelIndicator, RowsSumToOne) {
  const int labels[] = {2, 0, 2, 1};
  const LabelIndicatorMatrix v(labels);
  EXPECT_EQ(v.num_classes(), 3u);
  EXPECT_EQ(v.classes_present(), 3u);
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0;
    for (std::size_t c = 0; c < 3; ++c) row += v.values().at(i, c);
    EXPECT_EQ(row, 1.0);
    EXPECT_EQ(v.values().at(i, static_cast<std::size_t>(labels[i])), 1.0);
  }
}

TEST(Eigenmap, FourCycleSpectrum) {
  const auto map = eigenmap_coords(graph_from_adjacency(cycle4()), 3);
  ASSERT_EQ(map.eigenvalues.size(), 3u);
  EXPECT_NEAR(map.eigenvalues[0], 2.0, 1e-8);
  EXPECT_NEAR(map.eigenvalues[1], 2.0, 1e-8);
  EXPECT_NEAR(map.eigenvalues[2], 4.0, 1e-8);
  EXPECT_EQ(map.zero_multiplicity, 1u);
}

TEST(Eigenmap, DisconnectedGraphReportsZeroMultiplicity) {
  // Two disjoint triangles.
  std::vector<double> a(36, 0.0);
  for (int block = 0; block < 2; ++block)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) a[(block * 3 + i) * 6 + block * 3 + j] = 1.0;
  const auto map = eigenmap_coords(graph_from_adjacency(Tensor::matrix(6, 6, a)), 2);
  EXPECT_EQ(map.zero_multiplicity, 2u);
  EXPECT_NEAR(map.spectrum[1], 0.0, 1e-12);
  EXPECT_NEAR(map.eigenvalues[0], 3.0, 1e-8);
}

TEST(Eigenmap, BitReproducibleWithSignConvention) {
  std::mt19937_64 rng(12);
  const auto g = build_lgg(random_batch(20, 5, rng), 5, Similarity::gaussian, false);
  const auto a = eigenmap_coords(g, 2);
  const auto b = eigenmap_coords(g, 2);
  EXPECT_EQ(a.coords.values(), b.coords.values());
  for (std::size_t c = 0; c < 2; ++c) {
    double best = 0;
    for (std::size_t i = 0; i < 20; ++i)
      if (std::fabs(a.coords.at(i, c)) > std::fabs(best)) best = a.coords.at(i, c);
    EXPECT_GT(best, 0.0);
  }
}

TEST(Eigenmap, JacobiAgreesWithEigen) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial;
    const Tensor r = random_batch(n, n, rng);
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] = r.at(i, j) + r.at(j, i);
    const auto mine = jacobi_eigen(a, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::Map<Eigen::MatrixXd>(a.data(), n, n));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(mine.values[i], es.eigenvalues()(i), 1e-10);
    // A v = lambda v for every returned column.
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0;
        for (std::size_t j = 0; j < n; ++j) av += a[i * n + j] * mine.vectors[j * n + c];
        EXPECT_NEAR(av, mine.values[c] * mine.vectors[i * n + c], 1e-9);
      }
    }
  }
}

TEST(GraphProperties, SymmetryDegreeBoundsAndSpectrumOnRandomInputs) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 3 + trial % 14, k = 1 + trial % (b - 1);
    const bool cosine = trial % 2 == 0;
    const Tensor x = random_batch(b, 1 + trial % 6, rng, cosine);
    const auto g = build_lgg(x, k, cosine ? Similarity::cosine : Similarity::gaussian, false);
    const auto gn = build_lgg(x, k, cosine ? Similarity::cosine : Similarity::gaussian, true);
    for (std::size_t i = 0; i < b; ++i) {
      EXPECT_EQ(g.adjacency.at(i, i), 0.0);
      std::size_t nonzero = 0;
      for (std::size_t j = 0; j < b; ++j) {
        ASSERT_EQ(g.adjacency.at(i, j), g.adjacency.at(j, i));
        ASSERT_EQ(gn.adjacency.at(i, j), gn.adjacency.at(j, i));
        EXPECT_GE(g.adjacency.at(i, j), 0.0);
        if (cosine) {
          EXPECT_LE(g.adjacency.at(i, j), 1.0 + 1e-15);
        }
        nonzero += g.adjacency.at(i, j) != 0.0;
      }
      EXPECT_GE(nonzero, k);
      EXPECT_LE(nonzero, b - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(gn.adjacency));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1.0 - 1e-12);
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(GraphProperties, PermutationEquivariance) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 4 + trial % 12, d = 3;
    const Tensor x = random_batch(b, d, rng);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> px(b * d);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < d; ++c) px[i * d + c] = x.at(perm[i], c);
    const auto y = random_labels(b, 3, rng);
    std::vector<int> py(b);
    for (std::size_t i = 0; i < b; ++i) py[i] = y[perm[i]];
    const auto g = build_lgg(x, 2, Similarity::gaussian, false);
    const auto pg = build_lgg(Tensor::matrix(b, d, px), 2, Similarity::gaussian, false);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) ASSERT_NEAR(pg.adjacency.at(i, j), g.adjacency.at(perm[i], perm[j]), 1e-14);
    EXPECT_NEAR(label_variation(g, LabelIndicatorMatrix(y, 3)).raw, label_variation(pg, LabelIndicatorMatrix(py, 3)).raw,
                1e-12);
  }
}

TEST(GraphProperties, ScaleInvariance) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> f(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 4 + trial % 10, d = 4;
    const Tensor x = random_batch(b, d, rng, true);
    std::vector<double> per_row(b * d), global(b * d);
    const double s = f(rng);
    for (std::size_t i = 0; i < b; ++i) {
      const double r = f(rng);
      for (std::size_t c = 0; c < d; ++c) {
        per_row[i * d + c] = r * x.at(i, c);
        global[i * d + c] = s * x.at(i, c);
      }
    }
    const auto c0 = build_lgg(x, 2, Similarity::cosine, false);
    const auto c1 = build_lgg(Tensor::matrix(b, d, per_row), 2, Similarity::cosine, false);
    const auto g0 = build_lgg(x, 2, Similarity::gaussian, false);
    const auto g1 = build_lgg(Tensor::matrix(b, d, global), 2, Similarity::gaussian, false);
    for (std::size_t i = 0; i < b * b; ++i) {
      ASSERT_NEAR(c0.adjacency.at(i), c1.adjacency.at(i), 1e-12);
      ASSERT_NEAR(g0.adjacency.at(i), g1.adjacency.at(i), 1e-12);
    }
  }
}

TEST(Export, EdgeListMatchesAdjacency) {
  std::mt19937_64 rng(17);
  const auto g = build_lgg(random_batch(12, 3, rng), 3, Similarity::gaussian, false);
  const auto y = random_labels(12, 3, rng);
  for (bool inter : {false, true}) {
    std::ostringstream os;
    write_edge_list(os, g, y, inter);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "src\tdst\tweight");
    std::size_t rows = 0;
    std::size_t i = 0, j = 0;
    double w = 0;
    while (is >> i >> j >> w) {
      ++rows;
      EXPECT_LT(i, j);
      EXPECT_NEAR(w, g.adjacency.at(i, j), 1e-8 * g.adjacency.at(i, j));
      if (inter) {
        EXPECT_NE(y[i], y[j]);
      }
    }
    std::size_t expected = 0;
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t b = a + 1; b < 12; ++b)
        expected += g.adjacency.at(a, b) != 0.0 && (!inter || y[a] != y[b]);
    EXPECT_EQ(rows, expected);
  }
}

TEST(Export, EigenmapHeader) {
  const auto map = eigenmap_coords(graph_from_adjacency(cycle4()), 2);
  const int labels[] = {0, 1, 0, 1};
  std::ostringstream os;
  write_eigenmap(os, map, labels);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "index\tclass\tx\ty");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_EQ(format_sig(1.0 / 3.0, 9), "0.333333333");
}
