#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"
#include "lgg/tensor.hpp"

using namespace lgg;
using namespace lgg::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Values bounded away from 0 so relu/abs/sqrt kinks are not straddled by the
// finite-difference stencil.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  std::vector<double> v(t.data().begin(), t.data().end());
  for (auto& x : v) x = x < 0 ? x - 0.1 : x + 0.1;
  return Tensor(t.shape(), v);
}

double err_of(const std::function<Tensor(const Tensor&)>& op, const Tensor& x, std::mt19937_64& rng) {
  Tape probe;
  Tensor r;
  {
    TapeScope scope(probe);
    r = op(probe.variable(x)).detach();
  }
  const Tensor weights = random_tensor(r.shape(), rng);
  return finite_diff_check([&](const Tensor& v) { return sum(mul(op(v), weights)); }, x, 1e-6);
}

}  // namespace

TEST(Tensor, RejectsBadShapesAndNonFiniteValues) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({0}, {}), ShapeError);
  EXPECT_THROW(Tensor({1}, {NAN}), NumericError);
  EXPECT_THROW(Tensor({1}, {INFINITY}), NumericError);
}

TEST(Tensor, ReluDefinition) {
  const Tensor r = relu(Tensor::vector({-1, 0, 2}));
  EXPECT_EQ(r.values(), (std::vector<double>{0, 0, 2}));
}

TEST(Tensor, IdentityMatmul) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 5}, rng);
  EXPECT_EQ(matmul(Tensor::identity(3), x).values(), x.values());
}

TEST(Tensor, DotProductByHand) {
  EXPECT_DOUBLE_EQ(sum(mul(Tensor::vector({1, 2}), Tensor::vector({3, 4}))).item(), 11.0);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(3,2)"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(transpose(Tensor::zeros({3})), ShapeError);
}

TEST(Tensor, CheckedModeNamesTheOperation) {
  try {
    log(Tensor::vector({0.0}));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
  }
  EXPECT_THROW(exp(Tensor::vector({1000.0})), NumericError);
}

TEST(Tensor, UncheckedModeLetsInfinityThrough) {
  set_checked(false);
  const Tensor r = exp(Tensor::vector({1000.0}));
  set_checked(true);
  EXPECT_TRUE(std::isinf(r.at(0)));
}

TEST(Tensor, RowNormalizeNamesZeroRow) {
  try {
    row_normalize(Tensor::from_rows({{1, 0}, {0, 0}}));
    FAIL() << "expected DegenerateInputError";
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({1, 2, 3}));
  const auto g = tape.backward(sum(x));
  EXPECT_EQ(g.of(x).values(), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, ReluSubgradientAtNegativeAndPositive) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({-1, 2}));
  const auto g = tape.backward(sum(relu(x)));
  EXPECT_EQ(g.of(x).values(), (std::vector<double>{0, 1}));
}

TEST(Backward, KinksHaveZeroSubgradient) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({0.0, 0.0}));
  const auto g = tape.backward(add(sum(relu(x)), add(sum(abs(x)), sum(sqrt(x)))));
  EXPECT_EQ(g.of(x).values(), (std::vector<double>{0, 0}));
}

TEST(Backward, MatmulAgainstFiniteDifferences) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor({4, 3}, rng);
  const Tensor b = random_tensor({3, 2}, rng);
  EXPECT_LE(finite_diff_check([&](const Tensor& v) { return sum(matmul(v, b)); }, a, 1e-5), 1e-6);
  EXPECT_LE(finite_diff_check([&](const Tensor& v) { return sum(matmul(a, v)); }, b, 1e-5), 1e-6);
}

TEST(Backward, AdditiveOverFanOut) {
  std::mt19937_64 rng(5);
  const Tensor value = random_tensor({3, 4}, rng);
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(value);
  const auto once = tape.backward(sum(mul(x, x))).of(x);
  const Tensor y = mul(x, x);
  const auto twice = tape.backward(add(sum(y), sum(y))).of(x);
  for (std::size_t i = 0; i < value.size(); ++i) EXPECT_DOUBLE_EQ(twice.at(i), 2 * once.at(i));
}

TEST(Backward, UsageErrors) {
  Tape tape;
  Tape other;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), UsageError);
  EXPECT_THROW(other.backward(sum(x)), UsageError);
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), UsageError);
  const auto g = tape.backward(sum(x));
  EXPECT_THROW(g.of(Tensor::vector({1, 2})), UsageError);
}

TEST(Backward, UnreachedNodeHasZeroGradient) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({1, 2}));
  const Tensor y = tape.variable(Tensor::vector({3, 4}));
  const auto g = tape.backward(sum(x));
  EXPECT_EQ(g.of(y).values(), (std::vector<double>{0, 0}));
}

TEST(Backward, NoTapeScopeSuspendsRecording) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor x = tape.variable(Tensor::vector({1, 2}));
  const std::size_t before = tape.size();
  {
    NoTapeScope off;
    const Tensor y = mul(x, x);
    EXPECT_FALSE(y.tracked());
  }
  EXPECT_EQ(tape.size(), before);
  EXPECT_TRUE(mul(x, x).tracked());
  EXPECT_FALSE(mul(x.detach(), x.detach()).tracked());
}

TEST(Backward, ReplayIsBitIdentical) {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor({5, 4}, rng);
  const Tensor b = random_tensor({4, 3}, rng);
  auto grad = [&] {
    Tape tape;
    TapeScope scope(tape);
    const Tensor x = tape.variable(a);
    const Tensor loss = sum(exp(scale(matmul(row_normalize(x), b), 0.5)));
    return tape.backward(loss).of(x).values();
  };
  EXPECT_EQ(grad(), grad());
}

TEST(FiniteDiff, SumOfSquares) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({5}, rng);
  EXPECT_LE(finite_diff_check([](const Tensor& v) { return sum(mul(v, v)); }, x, 1e-5), 1e-8);
}

TEST(FiniteDiff, ConstantFunctionHasZeroError) {
  EXPECT_EQ(finite_diff_check([](const Tensor&) { return Tensor::scalar(3.0); }, Tensor::vector({1, 2}), 1e-5),
            0.0);
}

TEST(FiniteDiff, NonFiniteProbeIsNumericError) {
  EXPECT_THROW(finite_diff_check([](const Tensor& v) { return sum(log(v)); }, Tensor::vector({1e-7}), 1e-5),
               NumericError);
}

// Each primitive's Jacobian-vector product on 100 random instances, shapes up
// to 8 per dimension.
TEST(FiniteDiff, EveryPrimitiveOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  const std::vector<std::pair<std::string, std::function<double()>>> cases{
      {"add", [&] { auto s = Shape{dim(rng), dim(rng)}; auto b = random_tensor(s, rng);
                    return err_of([&](const Tensor& v) { return add(v, b); }, random_tensor(s, rng), rng); }},
      {"sub", [&] { auto s = Shape{dim(rng), dim(rng)}; auto b = random_tensor(s, rng);
                    return err_of([&](const Tensor& v) { return sub(b, v); }, random_tensor(s, rng), rng); }},
      {"mul", [&] { auto s = Shape{dim(rng), dim(rng)}; auto b = random_tensor(s, rng);
                    return err_of([&](const Tensor& v) { return mul(v, b); }, random_tensor(s, rng), rng); }},
      {"matmul", [&] { auto m = dim(rng), k = dim(rng), n = dim(rng); auto b = random_tensor({k, n}, rng);
                       return err_of([&](const Tensor& v) { return matmul(v, b); }, random_tensor({m, k}, rng), rng); }},
      {"relu", [&] { return err_of([](const Tensor& v) { return relu(v); }, away_from_zero({dim(rng), dim(rng)}, rng), rng); }},
      {"exp", [&] { return err_of([](const Tensor& v) { return exp(v); }, random_tensor({dim(rng), dim(rng)}, rng), rng); }},
      {"log", [&] { return err_of([](const Tensor& v) { return log(v); }, random_tensor({dim(rng), dim(rng)}, rng, 0.5, 2.0), rng); }},
      {"sqrt", [&] { return err_of([](const Tensor& v) { return sqrt(v); }, random_tensor({dim(rng), dim(rng)}, rng, 0.5, 2.0), rng); }},
      {"sum", [&] { return err_of([](const Tensor& v) { return sum(v); }, random_tensor({dim(rng), dim(rng)}, rng), rng); }},
      {"mean", [&] { return err_of([](const Tensor& v) { return mean(v); }, random_tensor({dim(rng), dim(rng)}, rng), rng); }},
      {"transpose", [&] { return err_of([](const Tensor& v) { return transpose(v); }, random_tensor({dim(rng), dim(rng)}, rng), rng); }},
      {"row_normalize", [&] { return err_of([](const Tensor& v) { return row_normalize(v); }, away_from_zero({dim(rng), dim(rng)}, rng), rng); }},
      {"abs", [&] { return err_of([](const Tensor& v) { return abs(v); }, away_from_zero({dim(rng), dim(rng)}, rng), rng); }},
      {"scale", [&] { const double f = std::uniform_real_distribution<double>(-3, 3)(rng);
                      return err_of([&](const Tensor& v) { return scale(v, f); }, random_tensor({dim(rng), dim(rng)}, rng), rng); }},
  };
  for (const auto& [name, instance] : cases) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, instance());
    EXPECT_LE(worst, 1e-6) << name;
  }
}

TEST(Compose, HelpersMatchDirectEvaluation) {
  const Tensor x = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(row_sums(x).values(), (std::vector<double>{6, 15}));
  EXPECT_EQ(repeat_cols(Tensor::matrix(2, 1, {7, 8}), 2).values(), (std::vector<double>{7, 7, 8, 8}));
  EXPECT_EQ(repeat_rows(Tensor::matrix(1, 2, {7, 8}), 2).values(), (std::vector<double>{7, 8, 7, 8}));
  EXPECT_EQ(add_row_bias(x, Tensor::matrix(1, 3, {1, 1, 1})).values(), (std::vector<double>{2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(diag(Tensor::matrix(2, 1, {3, 4})).values(), (std::vector<double>{3, 0, 0, 4}));
  EXPECT_DOUBLE_EQ(frobenius_norm(Tensor::from_rows({{3, 0}, {0, 4}})).item(), 5.0);
  const int labels[] = {1, 0};
  EXPECT_EQ(one_hot(labels, 3).values(), (std::vector<double>{0, 1, 0, 1, 0, 0}));
}

TEST(Compose, HelpersAreDifferentiable) {
  std::mt19937_64 rng(4);
  const Tensor x = away_from_zero({3, 4}, rng);
  const Tensor bias = random_tensor({1, 4}, rng);
  auto f = [&](const Tensor& v) {
    return add(frobenius_norm(add_row_bias(v, bias)), sum(mul(diag(row_sums(v)), repeat_cols(row_sums(v), 3))));
  };
  EXPECT_LE(finite_diff_check(f, x, 1e-6), 1e-6);
}
