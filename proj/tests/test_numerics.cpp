#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "pidamage/numerics.hpp"

using namespace pidamage;

namespace {

ParameterSet small_set() {
  ParameterSet p;
  p.add("w", Matrix(2, 3, {0.3, -0.2, 0.5, 0.1, 0.4, -0.6}), true);
  p.add("b", Matrix(2, 1, {0.05, -0.1}), true);
  p.add("alpha", Matrix(2, 1, {0.25, 0.3}), true);
  p.add("e", Matrix(1, 1, {2.5}), true);
  p.add("frozen", Matrix(1, 1, {1.7}), false);
  p.add("pick0", Matrix(1, 2, {1.0, 0.0}), false);
  p.add("pick1", Matrix(1, 2, {0.0, 1.0}), false);
  p.add("zero", Matrix(1, 1, {0.0}), false);
  return p;
}

// Every primitive in one scalar expression:
//   h = prelu(3·sigmoid(W x + b) - 1.5, α)
//   out = frozen · (clamp(h0) + sqrt(h1² + 1)^e + softplus(h0))
Var record_composite(Tape& t, const ParameterSet& p, const std::vector<double>& x) {
  Var z = t.sigmoid(t.affine(t.constant(x), p.index_of("w"), p.index_of("b")));
  z = t.add(t.scale(z, 3.0), t.constant(-1.5));
  Var h = t.prelu(z, p.index_of("alpha"));
  Var h0 = t.affine(h, p.index_of("pick0"), p.index_of("zero"));
  Var h1 = t.affine(h, p.index_of("pick1"), p.index_of("zero"));
  Var root = t.sqrt(t.add(t.mul(h1, h1), t.constant(1.0)));
  Var sum = t.add(t.add(t.clamp_nonnegative(h0), t.pow(root, t.parameter(p.index_of("e")))),
                  t.softplus(h0));
  return t.mul(t.parameter(p.index_of("frozen")), sum);
}

// The same expression on long doubles; t is the trainable vector in
// flatten_trainable() order (w, b, alpha, e).
long double composite_oracle(const std::vector<long double>& t, const std::vector<double>& x) {
  long double h[2];
  for (int i = 0; i < 2; ++i) {
    long double s = t[6 + i];
    for (int j = 0; j < 3; ++j) s += t[i * 3 + j] * x[j];
    const long double z = 3.0L / (1.0L + std::exp(-s)) - 1.5L;
    h[i] = z >= 0 ? z : t[8 + i] * z;
  }
  const long double clamp = h[0] > 0 ? h[0] : 0.0L;
  const long double soft = std::log1p(std::exp(h[0]));
  return 1.7L * (clamp + std::pow(std::sqrt(h[1] * h[1] + 1.0L), t[10]) + soft);
}

}  // namespace

TEST(Matrix, RejectsBadShapesAndNonFiniteEntries) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ContractViolation);
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, std::nan("")}), ContractViolation);
  Matrix m(2, 3, 0.5);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m(1, 2), 0.5);
}

TEST(Affine, MatchesHandComputation) {
  const Matrix w(2, 3, {1.0, 2.0, 3.0, -1.0, 0.5, 0.0});
  const std::vector<double> b{0.5, -2.0};
  const std::vector<double> x{1.0, -1.0, 2.0};
  const auto y = affine_forward(x, w, b);
  ASSERT_EQ(y.size(), 2u);
  EXPECT_DOUBLE_EQ(y[0], 1.0 - 2.0 + 6.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], -1.0 - 0.5 - 2.0);
}

TEST(Affine, DimensionMismatchIsAContractViolation) {
  const Matrix w(2, 3, 1.0);
  const std::vector<double> b(2, 0.0);
  EXPECT_THROW(affine_forward(std::vector<double>{1.0, 2.0}, w, b), ContractViolation);
  EXPECT_THROW(affine_forward(std::vector<double>{1.0, 2.0, 3.0}, w, std::vector<double>(3, 0.0)),
               ContractViolation);
}

TEST(Affine, BlockedKernelAgreesWithNaiveLoopForAllRowCounts) {
  for (std::size_t rows = 1; rows <= 9; ++rows) {
    std::vector<double> w(rows * 5), b(rows), x(5), y(rows);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + static_cast<double>(i));
    for (std::size_t i = 0; i < rows; ++i) b[i] = 0.1 * static_cast<double>(i);
    for (std::size_t j = 0; j < 5; ++j) x[j] = std::cos(static_cast<double>(j));
    detail::affine_kernel(w.data(), b.data(), x.data(), y.data(), rows, 5);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 5; ++j) acc += w[i * 5 + j] * x[j];
      EXPECT_EQ(y[i], acc + b[i]) << "row " << i;
    }
  }
}

TEST(Activations, SigmoidPreluSoftplus) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
  EXPECT_EQ(prelu(3.0, 0.25), 3.0);
  EXPECT_EQ(prelu(-4.0, 0.25), -1.0);
  EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_TRUE(std::isfinite(softplus(-800.0)));
}

TEST(SolveSpd, SolvesKnownSystemAndRejectsIndefinite) {
  Matrix a(3, 3, {4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0});
  const std::vector<double> x{1.0, -2.0, 0.5};
  std::vector<double> b(3, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) b[i] += a(i, j) * x[j];
  const auto got = solve_spd(a, b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], x[i], 1e-14);
  EXPECT_THROW(solve_spd(Matrix(2, 2, {1.0, 2.0, 2.0, 1.0}), {1.0, 1.0}), NumericalError);
}

TEST(ParameterSet, CountsFlattenAndAssign) {
  ParameterSet p = small_set();
  EXPECT_EQ(p.total_count(), 17u);
  EXPECT_EQ(p.trainable_count(), 11u);
  auto theta = p.flatten_trainable();
  ASSERT_EQ(theta.size(), 11u);
  for (double& v : theta) v += 1.0;
  p.assign_trainable(theta);
  EXPECT_EQ(p.flatten_trainable(), theta);
  EXPECT_EQ(p[p.index_of("frozen")].value.data()[0], 1.7);
  EXPECT_THROW(p.index_of("missing"), ContractViolation);
}

TEST(Tape, ForwardValueMatchesOracle) {
  const ParameterSet p = small_set();
  const std::vector<double> x{0.7, -1.2, 0.4};
  Tape t(p);
  Var out = record_composite(t, p, x);
  const auto theta = p.flatten_trainable();
  const std::vector<long double> tl(theta.begin(), theta.end());
  EXPECT_NEAR(t.scalar(out), static_cast<double>(composite_oracle(tl, x)), 1e-14);
}

TEST(Tape, CompositeGradientMatchesLongDoubleFiniteDifferences) {
  const ParameterSet p = small_set();
  for (const auto& x : {std::vector<double>{0.7, -1.2, 0.4}, std::vector<double>{-2.0, 0.3, 1.1},
                        std::vector<double>{3.0, 2.0, -1.0}}) {
    Tape t(p);
    Var out = record_composite(t, p, x);
    const auto g = t.backward(out, 1.0).flatten();
    const auto theta = p.flatten_trainable();
    const auto fd = finite_difference_gradient<long double>(
        [&](const std::vector<long double>& th) { return composite_oracle(th, x); },
        std::vector<long double>(theta.begin(), theta.end()), 1e-6L);
    ASSERT_EQ(g.size(), fd.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_NEAR(g[i], static_cast<double>(fd[i]), 1e-8 * std::max(1.0, std::abs(g[i])))
          << "coordinate " << i;
  }
}

TEST(Tape, SeedScalesAndRepeatedBackwardAccumulates) {
  const ParameterSet p = small_set();
  Tape t(p);
  Var out = record_composite(t, p, {0.7, -1.2, 0.4});
  const auto once = t.backward(out, 1.0).flatten();
  Gradients acc(p);
  t.backward(out, 1.0, acc);
  t.backward(out, 2.0, acc);
  const auto thrice = acc.flatten();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(thrice[i], 3.0 * once[i]);
}

TEST(Tape, NonTrainableBlocksReceiveNoGradient) {
  const ParameterSet p = small_set();
  Tape t(p);
  const auto g = t.backward(record_composite(t, p, {0.7, -1.2, 0.4}), 1.0);
  EXPECT_FALSE(g.has(p.index_of("frozen")));
  EXPECT_FALSE(g.has(p.index_of("pick0")));
  EXPECT_TRUE(g.has(p.index_of("w")));
}

TEST(Tape, ClampedBranchPassesNoGradient) {
  ParameterSet p;
  p.add("x", Matrix(1, 1, {-0.5}), true);
  Tape t(p);
  const auto g = t.backward(t.clamp_nonnegative(t.parameter(0)), 1.0);
  EXPECT_EQ(g[0][0], 0.0);
}

TEST(Tape, BackwardPreconditions) {
  const ParameterSet p = small_set();
  Tape t(p);
  EXPECT_THROW(t.backward(Var{0}, 1.0), ContractViolation);  // nothing recorded
  Var out = record_composite(t, p, {0.7, -1.2, 0.4});
  EXPECT_THROW(t.backward(Var{out.index + 100}, 1.0), ContractViolation);
  EXPECT_THROW(t.backward(out, std::numeric_limits<double>::infinity()), ContractViolation);
  ParameterSet other;
  other.add("q", Matrix(1, 1, 1.0), true);
  Gradients wrong(other);
  EXPECT_THROW(t.backward(out, 1.0, wrong), ContractViolation);
}

TEST(Tape, ShapeErrorsAreContractViolations) {
  const ParameterSet p = small_set();
  Tape t(p);
  EXPECT_THROW(t.affine(t.constant(1.0), p.index_of("w"), p.index_of("b")), ContractViolation);
  EXPECT_THROW(t.pow(t.constant(2.0), t.constant(std::vector<double>{1.0, 2.0})),
               ContractViolation);
}

TEST(Tape, ClearResetsRecording) {
  const ParameterSet p = small_set();
  Tape t(p);
  record_composite(t, p, {0.7, -1.2, 0.4});
  EXPECT_GT(t.node_count(), 0u);
  t.clear();
  EXPECT_TRUE(t.empty());
}

TEST(Gradients, NormScaleZeroAndFiniteness) {
  const ParameterSet p = small_set();
  Gradients g(p);
  g[p.index_of("w")][0] = 3.0;
  g[p.index_of("b")][1] = 4.0;
  EXPECT_DOUBLE_EQ(g.norm(), 5.0);
  g.scale(0.5);
  EXPECT_DOUBLE_EQ(g.norm(), 2.5);
  EXPECT_TRUE(g.all_finite());
  g[p.index_of("e")][0] = std::nan("");
  EXPECT_FALSE(g.all_finite());
  g.set_zero();
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(FiniteDifference, ExactOnQuadratics) {
  const auto g = finite_difference_gradient<double>(
      [](const std::vector<double>& v) { return 3.0 * v[0] * v[0] - 2.0 * v[0] * v[1]; },
      {1.0, 2.0}, 1e-3);
  EXPECT_NEAR(g[0], 6.0 - 4.0, 1e-9);
  EXPECT_NEAR(g[1], -2.0, 1e-9);
}
