#include "lgg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lgg/errors.hpp"
#include "lgg/kernels.hpp"

namespace lgg::ad {

namespace {

thread_local Tape* g_active = nullptr;
thread_local bool g_checked = true;
std::atomic<std::uint64_t> g_next_tape_id{1};

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void accumulate(GradBuffers& grads, std::size_t node, std::span<const double> g) {
  auto& dst = grads[node];
  if (dst.empty()) dst.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank2(std::string_view op, const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + to_string(x.shape()));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
  if (element_count(shape_) != values.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " +
                     std::to_string(element_count(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  if (!all_finite(values)) throw NumericError("tensor created with a non-finite value");
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor::Tensor(Unchecked, Shape shape, std::shared_ptr<const std::vector<double>> data)
    : shape_(std::move(shape)), data_(std::move(data)) {}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::filled(Shape shape, double v) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> v;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(v));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const { return Tensor(Unchecked{}, shape_, data_); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(Unchecked{}, std::move(shape), data_);
}

// ---------------------------------------------------------------- Tape

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

std::size_t Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tensor Tape::variable(const Tensor& value) {
  Tensor out = value.detach();
  out.node_ = push(Node{"variable", value.shape(), {}, {}});
  out.tape_id_ = id_;
  return out;
}

Gradients Tape::backward(const Tensor& root) const {
  if (root.size() != 1) {
    throw UsageError("backward: root must be scalar, got shape " + to_string(root.shape()));
  }
  if (!root.tracked() || root.tape_id() != id_) {
    throw UsageError("backward: root was not recorded on this tape");
  }
  Gradients out;
  out.tape_id_ = id_;
  out.grads_.resize(nodes_.size());
  out.shapes_.reserve(nodes_.size());
  for (const auto& n : nodes_) out.shapes_.push_back(n.shape);

  const std::size_t r = *root.node();
  out.grads_[r].assign(1, 1.0);
  for (std::size_t i = r + 1; i-- > 0;) {
    if (out.grads_[i].empty() || !nodes_[i].backward) continue;
    // Copy: the callback may append to parent buffers, never to its own.
    const std::vector<double> upstream = out.grads_[i];
    nodes_[i].backward(upstream, out.grads_);
  }
  for (std::size_t i = 0; i <= r; ++i) {
    if (out.grads_[i].empty()) out.grads_[i].assign(element_count(nodes_[i].shape), 0.0);
  }
  return out;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active) { g_active = nullptr; }
NoTapeScope::~NoTapeScope() { g_active = previous_; }

Tape* active_tape() { return g_active; }

Tensor Gradients::of(const Tensor& t) const {
  if (!t.tracked() || t.tape_id() != tape_id_) {
    throw UsageError("gradient requested for a tensor not recorded on this tape");
  }
  const auto n = *t.node();
  if (n >= grads_.size() || grads_[n].empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), grads_[n]);
}

void set_checked(bool on) { g_checked = on; }
bool checked() { return g_checked; }

// ---------------------------------------------------------------- recording

// Builds the result of an operation and, when appropriate, records it.
struct OpRecorder {
  static std::shared_ptr<const std::vector<double>> storage(const Tensor& t) { return t.data_; }

  static Tensor finish(std::string_view op, Shape shape, std::vector<double> values,
                       std::initializer_list<const Tensor*> operands,
                       const std::function<BackwardFn(const std::vector<std::optional<std::size_t>>&)>&
                           make_backward) {
    if (g_checked && !all_finite(values)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
    Tensor out(Tensor::Unchecked{}, shape,
               std::make_shared<const std::vector<double>>(std::move(values)));
    Tape* tape = g_active;
    if (tape == nullptr) return out;

    std::vector<std::optional<std::size_t>> parents;
    std::vector<std::size_t> parent_ids;
    bool any = false;
    for (const Tensor* t : operands) {
      if (t->tracked() && t->tape_id() == tape->id()) {
        parents.push_back(t->node());
        parent_ids.push_back(*t->node());
        any = true;
      } else {
        parents.push_back(std::nullopt);
      }
    }
    if (!any) return out;
    out.node_ = tape->push(Tape::Node{op, std::move(shape), std::move(parent_ids),
                                      make_backward(parents)});
    out.tape_id_ = tape->id();
    return out;
  }
};

namespace {

using Parents = std::vector<std::optional<std::size_t>>;
using Values = std::shared_ptr<const std::vector<double>>;

// Shares storage; tensors are immutable so capturing by pointer is safe.
Values values_of(const Tensor& t) { return OpRecorder::storage(t); }

template <class F>
Tensor unary(std::string_view op, const Tensor& x, F&& f,
             std::function<double(double x, double y)> dydx) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x.at(i));
  Values xv = values_of(x);
  auto yv = std::make_shared<std::vector<double>>(y);
  return OpRecorder::finish(op, x.shape(), std::move(y), {&x}, [&](const Parents& p) -> BackwardFn {
    const auto px = *p[0];
    return [px, xv, yv, dydx](std::span<const double> g, GradBuffers& grads) {
      std::vector<double> gx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dydx((*xv)[i], (*yv)[i]);
      accumulate(grads, px, gx);
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + b.at(i);
  return OpRecorder::finish("add", a.shape(), std::move(v), {&a, &b}, [](const Parents& p) -> BackwardFn {
    return [p](std::span<const double> g, GradBuffers& grads) {
      if (p[0]) accumulate(grads, *p[0], g);
      if (p[1]) accumulate(grads, *p[1], g);
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("subtract", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) - b.at(i);
  return OpRecorder::finish("subtract", a.shape(), std::move(v), {&a, &b},
                            [](const Parents& p) -> BackwardFn {
                              return [p](std::span<const double> g, GradBuffers& grads) {
                                if (p[0]) accumulate(grads, *p[0], g);
                                if (p[1]) {
                                  std::vector<double> neg(g.begin(), g.end());
                                  for (auto& x : neg) x = -x;
                                  accumulate(grads, *p[1], neg);
                                }
                              };
                            });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("multiply", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * b.at(i);
  Values av = values_of(a), bv = values_of(b);
  return OpRecorder::finish("multiply", a.shape(), std::move(v), {&a, &b},
                            [&](const Parents& p) -> BackwardFn {
                              return [p, av, bv](std::span<const double> g, GradBuffers& grads) {
                                std::vector<double> t(g.size());
                                if (p[0]) {
                                  for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * (*bv)[i];
                                  accumulate(grads, *p[0], t);
                                }
                                if (p[1]) {
                                  for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * (*av)[i];
                                  accumulate(grads, *p[1], t);
                                }
                              };
                            });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n);
  kernels::gemm(a.data(), kernels::Trans::no, b.data(), kernels::Trans::no, c, {m, k, n});
  Values av = values_of(a), bv = values_of(b);
  return OpRecorder::finish(
      "matmul", {m, n}, std::move(c), {&a, &b}, [&](const Parents& p) -> BackwardFn {
        return [p, av, bv, m, k, n](std::span<const double> g, GradBuffers& grads) {
          using kernels::Trans;
          if (p[0]) {  // dA = G * B^T
            std::vector<double> ga(m * k);
            kernels::gemm(g, Trans::no, *bv, Trans::yes, ga, {m, n, k});
            accumulate(grads, *p[0], ga);
          }
          if (p[1]) {  // dB = A^T * G
            std::vector<double> gb(k * n);
            kernels::gemm(*av, Trans::yes, g, Trans::no, gb, {k, m, n});
            accumulate(grads, *p[1], gb);
          }
        };
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "absolute-value", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor scale(const Tensor& x, double factor) {
  if (!std::isfinite(factor)) throw NumericError("scalar-scale: non-finite factor");
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) * factor;
  return OpRecorder::finish("scalar-scale", x.shape(), std::move(v), {&x},
                            [factor](const Parents& p) -> BackwardFn {
                              const auto px = *p[0];
                              return [px, factor](std::span<const double> g, GradBuffers& grads) {
                                std::vector<double> t(g.size());
                                for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * factor;
                                accumulate(grads, px, t);
                              };
                            });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.size();
  return OpRecorder::finish("sum", {}, {s}, {&x}, [n](const Parents& p) -> BackwardFn {
    const auto px = *p[0];
    return [px, n](std::span<const double> g, GradBuffers& grads) {
      accumulate(grads, px, std::vector<double>(n, g[0]));
    };
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.size();
  const double inv = 1.0 / static_cast<double>(n);
  return OpRecorder::finish("mean", {}, {s * inv}, {&x}, [n, inv](const Parents& p) -> BackwardFn {
    const auto px = *p[0];
    return [px, n, inv](std::span<const double> g, GradBuffers& grads) {
      accumulate(grads, px, std::vector<double>(n, g[0] * inv));
    };
  });
}

Tensor transpose(const Tensor& x) {
  require_rank2("transpose", x);
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = x.at(i * c + j);
  return OpRecorder::finish("transpose", {c, r}, std::move(v), {&x}, [r, c](const Parents& p) -> BackwardFn {
    const auto px = *p[0];
    return [px, r, c](std::span<const double> g, GradBuffers& grads) {
      std::vector<double> t(r * c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t[i * c + j] = g[j * r + i];
      accumulate(grads, px, t);
    };
  });
}

Tensor row_normalize(const Tensor& x) {
  require_rank2("row-normalize", x);
  const std::size_t r = x.rows(), c = x.cols();
  auto norms = std::make_shared<std::vector<double>>(r);
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += x.at(i * c + j) * x.at(i * c + j);
    const double nrm = std::sqrt(ss);
    if (!(nrm > 0.0)) {
      throw DegenerateInputError("row-normalize: row " + std::to_string(i) + " has zero norm");
    }
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = x.at(i * c + j) / nrm;
  }
  auto yv = std::make_shared<const std::vector<double>>(y);
  return OpRecorder::finish(
      "row-normalize", x.shape(), std::move(y), {&x}, [&](const Parents& p) -> BackwardFn {
        const auto px = *p[0];
        return [px, yv, norms, r, c](std::span<const double> g, GradBuffers& grads) {
          // d(x/|x|) = (g - y (y . g)) / |x|
          std::vector<double> t(r * c);
          for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += (*yv)[i * c + j] * g[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
              t[i * c + j] = (g[i * c + j] - (*yv)[i * c + j] * dot) / (*norms)[i];
          }
          accumulate(grads, px, t);
        };
      });
}

// ---------------------------------------------------------------- checks

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step) {
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor v = tape.variable(x);
    const Tensor y = f(v);
    if (!y.tracked()) {
      // Output does not depend on x on this tape: gradient is zero.
      analytic.assign(x.size(), 0.0);
    } else {
      analytic = tape.backward(y).of(v).values();
    }
  }
  NoTapeScope no_tape;
  double worst = 0.0;
  std::vector<double> probe = x.values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig - step;
    const double fm = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_check: non-finite function value while probing coordinate " +
                         std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace lgg::ad
