#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is an immutable value. When a Tape is active on the current thread
// (see TapeScope) and an operation receives at least one operand tracked on
// that tape, the result is recorded and carries a node identity; otherwise the
// operation is a plain value computation. There is no implicit broadcasting:
// the only operation that mixes shapes is scale() with a host scalar.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lgg::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tape;
class Gradients;

class Tensor {
 public:
  /// Scalar zero.
  Tensor();
  /// Throws ShapeError if the element count does not match, NumericError on
  /// non-finite values.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor filled(Shape shape, double v);
  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return filled(std::move(shape), 1.0); }
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  /// Rank-2 accessors; throw ShapeError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return *data_; }
  const std::vector<double>& values() const { return *data_; }
  double at(std::size_t flat) const { return (*data_)[flat]; }
  double at(std::size_t i, std::size_t j) const { return (*data_)[i * shape_.back() + j]; }
  /// Value of a single-element tensor.
  double item() const;

  bool tracked() const { return node_.has_value(); }
  std::optional<std::size_t> node() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

  /// Same values, no tape identity.
  Tensor detach() const;
  /// Same values reinterpreted with a new shape of equal element count. Not
  /// differentiable; use on constants only.
  Tensor reshaped(Shape shape) const;

 private:
  friend class Tape;
  friend struct OpRecorder;

  struct Unchecked {};
  Tensor(Unchecked, Shape shape, std::shared_ptr<const std::vector<double>> data);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::optional<std::size_t> node_;
  std::uint64_t tape_id_ = 0;
};

using GradBuffers = std::vector<std::vector<double>>;
/// Receives the upstream gradient of a node and adds its contribution into the
/// buffers of the node's parents.
using BackwardFn = std::function<void(std::span<const double> upstream, GradBuffers& grads)>;

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf. The returned tensor shares the values of `value`.
  Tensor variable(const Tensor& value);

  /// Reverse sweep from a scalar root. Throws UsageError if root is not a
  /// scalar or was not recorded on this tape.
  Gradients backward(const Tensor& root) const;

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };
  const Node& node(std::size_t i) const { return nodes_[i]; }

 private:
  friend struct OpRecorder;
  std::size_t push(Node node);

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

/// Makes a tape the active one on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Suspends recording for the scope's lifetime (values only).
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

class Gradients {
 public:
  /// Gradient of the root with respect to t, same shape as t. Zero when t is
  /// not an ancestor of the root. Throws UsageError if t is not on this tape.
  Tensor of(const Tensor& t) const;
  std::uint64_t tape_id() const { return tape_id_; }

 private:
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::vector<Shape> shapes_;
  GradBuffers grads_;
};

/// Checked mode: every operation result is scanned for NaN/Inf. Thread-local,
/// enabled by default.
void set_checked(bool on);
bool checked();

// Primitive operations. All shapes must conform exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Rank-2 matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// The derivative at 0 is taken to be 0.
Tensor sqrt(const Tensor& x);
/// Sum of all elements, scalar result.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Rank-2 transpose.
Tensor transpose(const Tensor& x);
/// Divides each row of a rank-2 tensor by its Euclidean norm. Throws
/// DegenerateInputError naming the first zero row.
Tensor row_normalize(const Tensor& x);
/// The derivative at 0 is taken to be 0.
Tensor abs(const Tensor& x);
Tensor scale(const Tensor& x, double factor);

/// Max over coordinates of |g_analytic - g_numeric| / max(1, |g_numeric|) with
/// central differences of the given step.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step);

}  // namespace lgg::ad
