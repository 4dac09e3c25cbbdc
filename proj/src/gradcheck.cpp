#include "lgg/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"
#include "lgg/graph.hpp"
#include "lgg/mlp.hpp"
#include "lgg/objectives.hpp"
#include "lgg/tensor.hpp"

namespace lgg::harness {

using ad::Tensor;

GradCheckScope parse_gradcheck_scope(std::string_view s) {
  if (s == "primitives") return GradCheckScope::primitives;
  if (s == "objectives") return GradCheckScope::objectives;
  if (s == "all") return GradCheckScope::all;
  throw UsageError("unknown gradcheck scope '" + std::string(s) + "' (primitives, objectives, all)");
}

namespace {

constexpr double kObjectiveStep = 1e-5;
constexpr double kPrimitiveStep = 1e-6;
constexpr std::size_t kB = 8, kD = 5, kK = 3, kClasses = 4;
// Similarity gap between the k-th and (k+1)-th neighbor of every row, and the
// distance of every ReLU / abs argument from its kink.
constexpr double kMargin = 1e-3;
constexpr int kMaxDraws = 10000;

Tensor normal(std::mt19937_64& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& e : v) e = n(rng);
  return Tensor::matrix(r, c, std::move(v));
}

Tensor uniform(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& e : v) e = u(rng);
  return Tensor::matrix(r, c, std::move(v));
}

/// Entries with magnitude in [0.05, 1.5] and random sign.
Tensor away_from_zero(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(0.05, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(r * c);
  for (auto& e : v) e = sign(rng) ? u(rng) : -u(rng);
  return Tensor::matrix(r, c, std::move(v));
}

/// Cosine inputs: positive entries, as after a ReLU.
Tensor positive(std::mt19937_64& rng, std::size_t r, std::size_t c) { return uniform(rng, r, c, 0.1, 2.0); }

std::vector<int> labels_with_two_classes(std::mt19937_64& rng, std::size_t b, std::size_t classes) {
  std::uniform_int_distribution<int> u(0, static_cast<int>(classes) - 1);
  while (true) {
    std::vector<int> y(b);
    for (auto& v : y) v = u(rng);
    if (std::any_of(y.begin(), y.end(), [&](int v) { return v != y.front(); })) return y;
  }
}

std::size_t dim(std::mt19937_64& rng) { return std::uniform_int_distribution<std::size_t>(1, 6)(rng); }

graph::GraphParams params_for(graph::Similarity sim, bool normalize) {
  graph::GraphParams p;
  p.similarity = sim;
  p.k = kK;
  p.normalize = normalize;
  return p;
}

/// Similarity with a bandwidth fixed at the base point.
graph::GraphParams frozen(graph::GraphParams p, const Tensor& x) {
  if (p.similarity == graph::Similarity::gaussian) p.bandwidth = graph::median_bandwidth(x);
  return p;
}

/// True when every row's k-th and (k+1)-th largest similarity are kMargin
/// apart, so small perturbations cannot change the k-NN selection.
bool tie_free(const Tensor& x, const graph::GraphParams& p) {
  ad::NoTapeScope quiet;
  const Tensor s = p.similarity == graph::Similarity::cosine ? graph::cosine_similarity_matrix(x)
                                                             : graph::gaussian_similarity_matrix(x, p.bandwidth);
  const std::size_t b = x.rows();
  if (p.k + 1 >= b) return true;
  std::vector<double> row;
  for (std::size_t i = 0; i < b; ++i) {
    row.clear();
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) row.push_back(s.at(i, j));
    }
    std::sort(row.begin(), row.end(), std::greater<>());
    if (row[p.k - 1] - row[p.k] < kMargin) return false;
    if (p.similarity == graph::Similarity::cosine && row[p.k - 1] < kMargin) return false;
  }
  return true;
}

/// ReLU arguments of the hidden blocks stay kMargin away from 0.
bool relu_clear(const model::Mlp& net, const Tensor& x) {
  ad::NoTapeScope quiet;
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < net.blocks(); ++l) {
    const Tensor pre = ad::add_row_bias(ad::matmul(h, net.weight(l)), net.bias(l));
    for (double v : pre.data()) {
      if (std::abs(v) < kMargin) return false;
    }
    h = ad::relu(pre);
  }
  return true;
}

/// Max finite-difference error over every parameter tensor of the network.
double parameter_error(const model::Mlp& net, const std::function<Tensor(const model::Mlp&)>& objective) {
  const auto params = net.parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto f = [&](const Tensor& w) {
      auto ps = params;
      ps[p] = w;
      return objective(net.with_parameters(ps));
    };
    worst = std::max(worst, ad::finite_diff_check(f, params[p], kObjectiveStep));
  }
  return worst;
}

template <class Draw>
auto draw_until(std::mt19937_64& rng, const char* what, Draw&& draw) {
  for (int t = 0; t < kMaxDraws; ++t) {
    try {
      if (auto inst = draw(rng)) return *inst;
    } catch (const DegenerateInputError&) {
      // e.g. a dead ReLU layer with zero median distance; draw again.
    }
  }
  throw DegenerateInputError(std::string(what) + ": no admissible random instance found");
}

// ------------------------------------------------------------- primitive cases

using Unary = std::function<Tensor(const Tensor&)>;

/// sum(op(x) * R) with a random constant R, so every output coordinate of op
/// contributes to the checked gradient.
GradCheckCase unary_case(std::string name, Unary op, std::function<Tensor(std::mt19937_64&, std::size_t, std::size_t)> gen) {
  GradCheckCase c;
  c.name = std::move(name);
  c.instances = 100;
  c.tolerance = 1e-6;
  c.instance_error = [op, gen](std::mt19937_64& rng) {
    const std::size_t r = dim(rng), k = dim(rng);
    const Tensor x = gen(rng, r, k);
    Tensor probe;
    {
      ad::NoTapeScope quiet;
      probe = op(x);
    }
    const Tensor w = normal(rng, probe.size(), 1).reshaped(probe.shape());
    return ad::finite_diff_check([&](const Tensor& v) { return ad::sum(ad::mul(op(v), w)); }, x, kPrimitiveStep);
  };
  return c;
}

using Binary = std::function<Tensor(const Tensor&, const Tensor&)>;

GradCheckCase binary_case(std::string name, Binary op, bool matmul_shapes) {
  GradCheckCase c;
  c.name = std::move(name);
  c.instances = 100;
  c.tolerance = 1e-6;
  c.instance_error = [op, matmul_shapes](std::mt19937_64& rng) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Tensor a = normal(rng, m, k);
    const Tensor b = matmul_shapes ? normal(rng, k, n) : normal(rng, m, k);
    Tensor probe;
    {
      ad::NoTapeScope quiet;
      probe = op(a, b);
    }
    const Tensor w = normal(rng, probe.size(), 1).reshaped(probe.shape());
    const double ea = ad::finite_diff_check([&](const Tensor& v) { return ad::sum(ad::mul(op(v, b), w)); }, a,
                                            kPrimitiveStep);
    const double eb = ad::finite_diff_check([&](const Tensor& v) { return ad::sum(ad::mul(op(a, v), w)); }, b,
                                            kPrimitiveStep);
    const double both =
        matmul_shapes ? 0.0
                      : ad::finite_diff_check([&](const Tensor& v) { return ad::sum(ad::mul(op(v, v), w)); }, a,
                                              kPrimitiveStep);
    return std::max({ea, eb, both});
  };
  return c;
}

std::vector<GradCheckCase> primitive_cases() {
  auto any = [](std::mt19937_64& rng, std::size_t r, std::size_t c) { return normal(rng, r, c); };
  auto kinkless = [](std::mt19937_64& rng, std::size_t r, std::size_t c) { return away_from_zero(rng, r, c); };
  auto pos = [](std::mt19937_64& rng, std::size_t r, std::size_t c) { return uniform(rng, r, c, 0.5, 3.0); };
  auto bounded = [](std::mt19937_64& rng, std::size_t r, std::size_t c) { return uniform(rng, r, c, -2.0, 2.0); };
  return {
      binary_case("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); }, false),
      binary_case("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); }, false),
      binary_case("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); }, false),
      binary_case("matmul", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); }, true),
      unary_case("relu", [](const Tensor& x) { return ad::relu(x); }, kinkless),
      unary_case("exp", [](const Tensor& x) { return ad::exp(x); }, bounded),
      unary_case("log", [](const Tensor& x) { return ad::log(x); }, pos),
      unary_case("sqrt", [](const Tensor& x) { return ad::sqrt(x); }, pos),
      unary_case("sum", [](const Tensor& x) { return ad::sum(x); }, any),
      unary_case("mean", [](const Tensor& x) { return ad::mean(x); }, any),
      unary_case("transpose", [](const Tensor& x) { return ad::transpose(x); }, any),
      unary_case("row_normalize", [](const Tensor& x) { return ad::row_normalize(x); }, kinkless),
      unary_case("abs", [](const Tensor& x) { return ad::abs(x); }, kinkless),
      unary_case("scale", [](const Tensor& x) { return ad::scale(x, -1.75); }, any),
  };
}

// ------------------------------------------------------------- objective cases

GradCheckCase objective_case(std::string name, std::function<double(std::mt19937_64&)> f) {
  GradCheckCase c;
  c.name = std::move(name);
  c.instances = 50;
  c.tolerance = 1e-4;
  c.instance_error = std::move(f);
  return c;
}

double cross_entropy_instance(std::mt19937_64& rng) {
  const Tensor z = normal(rng, kB, kClasses, 2.0);
  const auto y = labels_with_two_classes(rng, kB, kClasses);
  return ad::finite_diff_check([&](const Tensor& v) { return obj::cross_entropy_loss(v, y); }, z, kObjectiveStep);
}

double gkd_instance(std::mt19937_64& rng, graph::Similarity sim, bool normalize) {
  struct Inst {
    Tensor t, s;
    graph::GraphParams pt, ps;
  };
  const auto inst = draw_until(rng, "gkd_loss", [&](std::mt19937_64& r) -> std::optional<Inst> {
    const bool cos = sim == graph::Similarity::cosine;
    Tensor t = cos ? positive(r, kB, 7) : normal(r, kB, 7);
    Tensor s = cos ? positive(r, kB, kD) : normal(r, kB, kD);
    auto pt = frozen(params_for(sim, normalize), t);
    auto ps = frozen(params_for(sim, normalize), s);
    if (!tie_free(t, pt) || !tie_free(s, ps)) return std::nullopt;
    return Inst{t, s, pt, ps};
  });
  const auto gt = graph::build_lgg(inst.t, inst.pt);
  return ad::finite_diff_check([&](const Tensor& v) { return obj::gkd_loss(gt, graph::build_lgg(v, inst.ps)); },
                               inst.s, kObjectiveStep);
}

double label_variation_instance(std::mt19937_64& rng, graph::Similarity sim) {
  struct Inst {
    Tensor x;
    graph::GraphParams p;
    std::vector<int> y;
  };
  const auto inst = draw_until(rng, "label_variation_loss", [&](std::mt19937_64& r) -> std::optional<Inst> {
    Tensor x = sim == graph::Similarity::cosine ? positive(r, kB, kD) : normal(r, kB, kD);
    auto p = frozen(params_for(sim, false), x);
    if (!tie_free(x, p)) return std::nullopt;
    return Inst{x, p, labels_with_two_classes(r, kB, kClasses)};
  });
  return ad::finite_diff_check([&](const Tensor& v) { return obj::label_variation_loss(v, inst.y, inst.p); },
                               inst.x, kObjectiveStep);
}

struct NetInstance {
  model::Mlp net;
  Tensor x;
  std::vector<int> y;
  std::vector<double> bandwidths;
};

/// A small MLP and batch whose every representation graph is tie-free and
/// whose consecutive label variations differ by more than kMargin.
NetInstance regularizer_instance(std::mt19937_64& rng, const char* what) {
  const graph::GraphParams base = params_for(graph::Similarity::gaussian, false);
  return draw_until(rng, what, [&](std::mt19937_64& r) -> std::optional<NetInstance> {
    auto net = model::Mlp::initialize({kD, 6, 6, kClasses}, r());
    const Tensor x = normal(r, kB, kD);
    const auto y = labels_with_two_classes(r, kB, kClasses);
    if (!relu_clear(net, x)) return std::nullopt;
    ad::NoTapeScope quiet;
    const auto trace = model::forward_traced(net, x);
    NetInstance inst{net, x, y, {}};
    std::vector<double> sig;
    const graph::LabelIndicatorMatrix v(y);
    for (const auto& rep : trace.representations) {
      const auto p = frozen(base, rep);
      if (!tie_free(rep, p)) return std::nullopt;
      inst.bandwidths.push_back(*p.bandwidth);
      sig.push_back(graph::label_variation(graph::build_lgg(rep, p), v).raw);
    }
    for (std::size_t l = 1; l < sig.size(); ++l) {
      if (std::abs(sig[l] - sig[l - 1]) < kMargin) return std::nullopt;
    }
    return inst;
  });
}

double smoothness_instance(std::mt19937_64& rng) {
  const auto inst = regularizer_instance(rng, "smoothness_regularizer");
  const auto p = params_for(graph::Similarity::gaussian, false);
  return parameter_error(inst.net, [&](const model::Mlp& net) {
    const auto trace = model::forward_traced(net, inst.x);
    return obj::smoothness_regularizer(trace.representations, inst.y, p, inst.bandwidths).value;
  });
}

double regularized_objective_instance(std::mt19937_64& rng) {
  const auto inst = regularizer_instance(rng, "cross-entropy+regularizer");
  const auto p = params_for(graph::Similarity::gaussian, false);
  const double gamma = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
  return parameter_error(inst.net, [&](const model::Mlp& net) {
    const auto trace = model::forward_traced(net, inst.x);
    const auto reg = obj::smoothness_regularizer(trace.representations, inst.y, p, inst.bandwidths);
    return ad::add(obj::cross_entropy_loss(trace.output(), inst.y), ad::scale(reg.value, gamma));
  });
}

double distillation_instance(std::mt19937_64& rng) {
  struct Inst {
    model::Mlp teacher, student;
    Tensor x;
    std::vector<int> y;
    std::vector<graph::LatentGraph> teacher_graphs;
    std::vector<graph::GraphParams> student_params;
    obj::LayerPairing pairing;
  };
  const auto base = params_for(graph::Similarity::gaussian, true);
  const auto inst = draw_until(rng, "distillation_objective", [&](std::mt19937_64& r) -> std::optional<Inst> {
    auto teacher = model::Mlp::initialize({kD, 10, 10, kClasses}, r());
    auto student = model::Mlp::initialize({kD, 6, kClasses}, r());
    const Tensor x = normal(r, kB, kD);
    if (!relu_clear(student, x)) return std::nullopt;
    ad::NoTapeScope quiet;
    const auto tt = model::forward_traced(teacher, x);
    const auto st = model::forward_traced(student, x);
    Inst inst{teacher, student, x, labels_with_two_classes(r, kB, kClasses), {}, {},
              obj::LayerPairing::automatic(teacher.hidden_blocks(), student.hidden_blocks())};
    for (const auto& [t, s] : inst.pairing.pairs) {
      const auto pt = frozen(base, tt.block(t));
      const auto ps = frozen(base, st.block(s));
      if (!tie_free(tt.block(t), pt) || !tie_free(st.block(s), ps)) return std::nullopt;
      inst.teacher_graphs.push_back(graph::build_lgg(tt.block(t), pt));
      inst.student_params.push_back(ps);
    }
    return inst;
  });
  obj::ObjectiveWeights w;
  w.lambda_kd = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
  return parameter_error(inst.student, [&](const model::Mlp& net) {
    const auto trace = model::forward_traced(net, inst.x);
    std::vector<Tensor> kd;
    for (std::size_t i = 0; i < inst.pairing.pairs.size(); ++i) {
      const auto gs = graph::build_lgg(trace.block(inst.pairing.pairs[i].second), inst.student_params[i]);
      kd.push_back(obj::gkd_loss(inst.teacher_graphs[i], gs));
    }
    return obj::distillation_objective(obj::cross_entropy_loss(trace.output(), inst.y), kd, w);
  });
}

std::vector<GradCheckCase> objective_cases() {
  using graph::Similarity;
  return {
      objective_case("cross_entropy_loss", cross_entropy_instance),
      objective_case("gkd_loss[gaussian,normalized]",
                     [](std::mt19937_64& r) { return gkd_instance(r, Similarity::gaussian, true); }),
      objective_case("gkd_loss[cosine]", [](std::mt19937_64& r) { return gkd_instance(r, Similarity::cosine, false); }),
      objective_case("label_variation_loss[gaussian]",
                     [](std::mt19937_64& r) { return label_variation_instance(r, Similarity::gaussian); }),
      objective_case("label_variation_loss[cosine]",
                     [](std::mt19937_64& r) { return label_variation_instance(r, Similarity::cosine); }),
      objective_case("smoothness_regularizer", smoothness_instance),
      objective_case("cross_entropy+regularizer", regularized_objective_instance),
      objective_case("distillation_objective", distillation_instance),
  };
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases(GradCheckScope scope) {
  std::vector<GradCheckCase> out;
  if (scope != GradCheckScope::objectives) out = primitive_cases();
  if (scope != GradCheckScope::primitives) {
    auto obj = objective_cases();
    out.insert(out.end(), obj.begin(), obj.end());
  }
  return out;
}

GradCheckCase corrupted_gradient_case() {
  GradCheckCase c;
  c.name = "mul[fixture:dropped-operand-gradient]";
  c.instances = 10;
  c.tolerance = 1e-6;
  c.instance_error = [](std::mt19937_64& rng) {
    const Tensor x = normal(rng, 3, 3);
    // The detached operand hides half of d(x*x)/dx from the tape.
    return ad::finite_diff_check([](const Tensor& v) { return ad::sum(ad::mul(v, v.detach())); }, x,
                                 kPrimitiveStep);
  };
  return c;
}

GradCheckReport run_gradcheck_case(const GradCheckCase& c, std::uint64_t seed) {
  std::seed_seq ss(c.name.begin(), c.name.end());
  std::uint32_t salt[2];
  ss.generate(salt, salt + 2);
  std::mt19937_64 rng(seed ^ ((static_cast<std::uint64_t>(salt[0]) << 32) | salt[1]));

  GradCheckReport r;
  r.name = c.name;
  r.instances = c.instances;
  r.tolerance = c.tolerance;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < c.instances; ++i) {
    const double e = c.instance_error(rng);
    r.max_error = std::max(r.max_error, e);
    r.passed += e <= c.tolerance;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<GradCheckReport> run_gradcheck(std::span<const GradCheckCase> cases, std::uint64_t seed) {
  std::vector<GradCheckReport> out;
  for (const auto& c : cases) out.push_back(run_gradcheck_case(c, seed));
  return out;
}

void write_gradcheck_report(std::ostream& os, std::span<const GradCheckReport> reports) {
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%s %-40s %3zu/%-3zu max_rel_err=%.3e tol=%.0e %.2fs\n", r.ok() ? "PASS" : "FAIL",
                  r.name.c_str(), r.passed, r.instances, r.max_error, r.tolerance, r.seconds);
    os << line;
  }
}

}  // namespace lgg::harness
