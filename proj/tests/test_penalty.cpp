#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gridpart/penalty.hpp"
#include "gridpart/qubo.hpp"
#include "gridpart/rng.hpp"

using namespace gridpart;

namespace {

VariableRegistry make_registry(int count) {
  VariableRegistry registry;
  for (int i = 0; i < count; ++i) registry.add(slack_var(i, 0));
  return registry;
}

// Direct formula for the approximate penalty with an arbitrary scale factor;
// used as the oracle side of every check below.
double penalty_formula(double scale, double raw, double lower, std::uint64_t slack_level) {
  const double r = scale * (raw - lower) - static_cast<double>(slack_level);
  return r * r;
}

// Brute-force minimum of the penalty over all 2^K slack assignments.
double brute_force_slack_min(double scale, double raw, double lower, int k_bits) {
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t level = 0; level < (std::uint64_t{1} << k_bits); ++level)
    best = std::min(best, penalty_formula(scale, raw, lower, level));
  return best;
}

double dot(const std::vector<double>& a, std::uint32_t mask) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask & (1u << i)) acc += a[i];
  return acc;
}

// Builds the model holding only the inequality penalty for coefficients a and
// bound b, plus the registry layout: x variables first, slack bits after.
struct InequalityFixture {
  VariableRegistry registry;
  QuadraticModel model;
  SlackEncoding encoding;
  int n;
  int k;

  InequalityFixture(const std::vector<double>& a, double b, int k_bits)
      : registry(make_registry(static_cast<int>(a.size()) + k_bits)),
        n(static_cast<int>(a.size())),
        k(k_bits) {
    LinearConstraint constraint;
    constraint.sense = ConstraintSense::AtMost;
    constraint.bound = b;
    for (int i = 0; i < n; ++i) constraint.terms.push_back({static_cast<VarIndex>(i), a[i]});
    std::vector<VarIndex> slack;
    for (int i = 0; i < k_bits; ++i) slack.push_back(static_cast<VarIndex>(n + i));
    QuboBuilder builder(registry);
    encoding = append_inequality_penalty(builder, constraint, slack);
    model = builder.finalize();
  }

  // Evaluates the compiled penalty at (x mask, slack level).
  double at(std::uint32_t x_mask, std::uint64_t level) const {
    std::vector<std::uint8_t> bits(n + k, 0);
    for (int i = 0; i < n; ++i) bits[i] = (x_mask >> i) & 1;
    for (int i = 0; i < k; ++i) bits[n + i] = (level >> i) & 1;
    return model.evaluate(bits);
  }

  double min_over_slack(std::uint32_t x_mask) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t level = 0; level < (std::uint64_t{1} << k); ++level)
      best = std::min(best, at(x_mask, level));
    return best;
  }
};

}  // namespace

TEST_CASE("equality penalty vanishes exactly on the constraint", "[penalty]") {
  VariableRegistry registry = make_registry(2);
  LinearConstraint constraint{{{0, 1.0}, {1, 1.0}}, 1.0, ConstraintSense::Equality};
  QuboBuilder builder(registry);
  append_equality_penalty(builder, constraint);
  const QuadraticModel model = builder.finalize();

  CHECK(model.evaluate(std::vector<std::uint8_t>{1, 0}) == 0.0);
  CHECK(model.evaluate(std::vector<std::uint8_t>{1, 1}) == 1.0);
  CHECK(model.evaluate(std::vector<std::uint8_t>{0, 0}) == 1.0);

  LinearConstraint wrong = constraint;
  wrong.sense = ConstraintSense::AtMost;
  QuboBuilder other(registry);
  CHECK_THROWS_AS(append_equality_penalty(other, wrong), ModelError);
}

TEST_CASE("binary lower bound is the sum of negative coefficients", "[penalty]") {
  CHECK(binary_lower_bound(LinearConstraint{{{0, -0.3}, {1, 0.3}}, 0, {}}) == -0.3);
  CHECK(binary_lower_bound(LinearConstraint{{{0, 0.2}, {1, 0.5}}, 0, {}}) == 0.0);
  CHECK(binary_lower_bound(LinearConstraint{{{0, -1.0}, {1, -2.0}}, 0, {}}) == -3.0);
}

TEST_CASE("inequality penalty worked examples", "[penalty]") {
  // a=[1], b=0.5, K=1: c=0 and the scale is 3
  InequalityFixture fx({1.0}, 0.5, 1);
  CHECK(fx.encoding.scale == Catch::Approx(3.0));
  CHECK(fx.at(0b0, 0) == 0.0);
  CHECK(fx.min_over_slack(0b1) == Catch::Approx(4.0));  // enumerated over z in {0,1}
  // quarter + scale*eps + (scale*eps)^2 with eps = 0.5
  const double eps = 0.5;
  CHECK(fx.min_over_slack(0b1) ==
        Catch::Approx(0.25 + 3.0 * eps + (3.0 * eps) * (3.0 * eps)));
}

TEST_CASE("feasibility quarter test on a two-variable constraint", "[penalty]") {
  InequalityFixture fx({0.3, 0.4}, 0.5, 2);
  const std::vector<double> a{0.3, 0.4};
  for (std::uint32_t mask = 0; mask < 4; ++mask) {
    const bool feasible = dot(a, mask) <= 0.5;
    const double min_penalty = fx.min_over_slack(mask);
    CHECK(feasible == (min_penalty <= 0.25));
  }
}

TEST_CASE("inequality penalty rejects bad inputs", "[penalty]") {
  VariableRegistry registry = make_registry(25);
  LinearConstraint constraint{{{0, 1.0}}, -2.0, ConstraintSense::AtMost};  // b < c = 0
  std::vector<VarIndex> slack{1, 2};
  QuboBuilder builder(registry);
  CHECK_THROWS_AS(append_inequality_penalty(builder, constraint, slack), ModelError);

  LinearConstraint fine{{{0, 1.0}}, 0.5, ConstraintSense::AtMost};
  std::vector<VarIndex> too_many;
  for (int i = 0; i < 21; ++i) too_many.push_back(static_cast<VarIndex>(1 + i));
  CHECK_THROWS_AS(append_inequality_penalty(builder, fine, too_many), ModelError);
}

TEST_CASE("feasibility theorem holds exhaustively on random instances",
          "[penalty][property]") {
  Rng rng(42);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    const int k = 1 + static_cast<int>(rng.next_below(4));
    std::vector<double> a(n);
    double abs_sum = 0;
    for (double& coef : a) {
      coef = rng.next_double() * 2 - 1;
      abs_sum += std::abs(coef);
    }
    const double c = binary_lower_bound(LinearConstraint{
        [&] {
          std::vector<LinearTerm> terms;
          for (int i = 0; i < n; ++i) terms.push_back({static_cast<VarIndex>(i), a[i]});
          return terms;
        }(),
        0,
        {}});
    const double b = c + (abs_sum - c + 1e-6) * rng.next_double();
    if (!(b > c)) continue;

    InequalityFixture fx(a, b, k);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      const double raw = dot(a, mask);
      if (std::abs(raw - b) < 1e-12) continue;  // measure-zero boundary skipped
      const bool feasible = raw <= b;
      const double min_penalty = fx.min_over_slack(mask);
      REQUIRE(feasible == (min_penalty <= 0.25));
      // the model route agrees with the closed formula route
      REQUIRE(min_penalty ==
              Catch::Approx(brute_force_slack_min(fx.encoding.scale, raw, c, k)).margin(1e-9));
      if (!feasible) {
        const double eps = raw - b;
        const double scaled = fx.encoding.scale * eps;
        REQUIRE(min_penalty == Catch::Approx(0.25 + scaled + scaled * scaled).margin(1e-9));
      }
      ++checked;
    }
  }
  REQUIRE(checked > 500);
}

TEST_CASE("only the canonical scale separates feasible from infeasible",
          "[penalty][property]") {
  // case (i): scale above the canonical value, tight constraint a.x = b
  {
    const double b = 1.2;
    const int k = 2;
    const double canonical = (std::ldexp(1.0, k) - 0.5) / b;  // c = 0
    const double alpha = canonical * 1.5;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t z = 0; z < 4; ++z)
      best = std::min(best, penalty_formula(alpha, b, 0.0, z));
    CHECK(best > 0.25);
  }
  // case (ii): scale below the canonical value accepts a violating point
  {
    const double b = 1.2;
    const int k = 2;
    const double canonical = (std::ldexp(1.0, k) - 0.5) / b;
    const double alpha = 2.0;
    REQUIRE(alpha < canonical);
    const double raw = b + 1.0 / alpha;  // violates the constraint
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t z = 0; z < 4; ++z)
      best = std::min(best, penalty_formula(alpha, raw, 0.0, z));
    CHECK(best <= 0.25);
  }
}

TEST_CASE("integer slack penalty is exact", "[penalty]") {
  auto build = [&](const std::vector<double>& a, double b) {
    const int n = static_cast<int>(a.size());
    LinearConstraint constraint;
    constraint.sense = ConstraintSense::AtMost;
    constraint.bound = b;
    for (int i = 0; i < n; ++i) constraint.terms.push_back({static_cast<VarIndex>(i), a[i]});
    const int bits = integer_slack_bit_count(b - binary_lower_bound(constraint));
    VariableRegistry registry = make_registry(n + bits);
    std::vector<VarIndex> slack;
    for (int i = 0; i < bits; ++i) slack.push_back(static_cast<VarIndex>(n + i));
    QuboBuilder builder(registry);
    append_integer_slack_penalty(builder, constraint, slack);
    return std::tuple{builder.finalize(), n, bits};
  };

  auto [model, n, bits] = build({1.0, 2.0}, 2.0);
  REQUIRE(bits == 2);
  auto min_over_slack = [&](std::uint32_t mask) {
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t level = 0; level < (1u << bits); ++level) {
      std::vector<std::uint8_t> assignment(n + bits, 0);
      for (int i = 0; i < n; ++i) assignment[i] = (mask >> i) & 1;
      for (int i = 0; i < bits; ++i) assignment[n + i] = (level >> i) & 1;
      best = std::min(best, model.evaluate(assignment));
    }
    return best;
  };
  CHECK(min_over_slack(0b10) == 0.0);  // a.x = 2
  CHECK(min_over_slack(0b11) == 1.0);  // a.x = 3, one over
  CHECK(min_over_slack(0b00) == 0.0);

  // exhaustive exactness sweep on random integer instances
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int nn = 1 + static_cast<int>(rng.next_below(4));
    std::vector<double> a(nn);
    for (double& coef : a) coef = static_cast<double>(rng.next_below(9)) - 4.0;
    double lower = 0, upper = 0;
    for (double coef : a) (coef < 0 ? lower : upper) += coef;
    const double b = lower + 1.0 + static_cast<double>(rng.next_below(
                                       static_cast<std::uint64_t>(upper - lower) + 2));
    auto [m2, n2, bits2] = build(a, b);
    for (std::uint32_t mask = 0; mask < (1u << nn); ++mask) {
      double raw = 0;
      for (int i = 0; i < nn; ++i)
        if (mask & (1u << i)) raw += a[i];
      double best = std::numeric_limits<double>::infinity();
      for (std::uint64_t level = 0; level < (1u << bits2); ++level) {
        std::vector<std::uint8_t> assignment(n2 + bits2, 0);
        for (int i = 0; i < n2; ++i) assignment[i] = (mask >> i) & 1;
        for (int i = 0; i < bits2; ++i) assignment[n2 + i] = (level >> i) & 1;
        best = std::min(best, m2.evaluate(assignment));
      }
      REQUIRE((raw <= b) == (best == 0.0));
    }
  }
}

TEST_CASE("integer slack penalty rejects non-integer data and tiny ranges", "[penalty]") {
  VariableRegistry registry = make_registry(4);
  QuboBuilder builder(registry);
  LinearConstraint fractional{{{0, 0.5}}, 2.0, ConstraintSense::AtMost};
  std::vector<VarIndex> slack{1, 2};
  CHECK_THROWS_AS(append_integer_slack_penalty(builder, fractional, slack), ModelError);

  LinearConstraint tight{{{0, 1.0}}, 0.0, ConstraintSense::AtMost};  // b - c = 0
  CHECK_THROWS_AS(append_integer_slack_penalty(builder, tight, slack), ModelError);
}

TEST_CASE("degree reduction gadget truth table", "[penalty]") {
  VariableRegistry registry = make_registry(3);
  QuboBuilder builder(registry);
  append_product_gadget(builder, 0, 1, 2);
  const QuadraticModel model = builder.finalize();

  for (std::uint8_t x = 0; x < 2; ++x)
    for (std::uint8_t y = 0; y < 2; ++y)
      for (std::uint8_t z = 0; z < 2; ++z) {
        const double value = model.evaluate(std::vector<std::uint8_t>{x, y, z});
        CHECK(value >= 0.0);
        CHECK((value == 0.0) == (z == (x & y)));
      }
  CHECK(model.evaluate(std::vector<std::uint8_t>{1, 1, 0}) == 1.0);
  CHECK(model.evaluate(std::vector<std::uint8_t>{0, 0, 1}) == 3.0);
  CHECK(model.evaluate(std::vector<std::uint8_t>{1, 1, 1}) == 0.0);

  CHECK_THROWS_AS(append_product_gadget(builder, 0, 0, 2), ModelError);
  CHECK_THROWS_AS(append_product_gadget(builder, 0, 1, 1), ModelError);
}

TEST_CASE("closed-form slack minimum", "[penalty]") {
  // scale 1 corresponds to bound - lower = 2^K - 1/2
  const SlackEncoding encoding = make_slack_encoding(2, 0.0, 3.5);
  REQUIRE(encoding.scale == 1.0);

  CHECK(min_slack_value(encoding, 0.4).level == 0);
  CHECK(min_slack_value(encoding, 0.4).penalty == Catch::Approx(0.16));
  CHECK(min_slack_value(encoding, 3.6).level == 3);  // clamped to 2^K - 1
  CHECK(min_slack_value(encoding, 3.6).penalty == Catch::Approx(0.36));
  CHECK(min_slack_value(encoding, -0.2).level == 0);
  CHECK(min_slack_value(encoding, -0.2).penalty == Catch::Approx(0.04));
}

TEST_CASE("closed-form slack minimum equals brute force", "[penalty][property]") {
  Rng rng(99);
  for (int trial = 0; trial < 10000; ++trial) {
    const int k = 1 + static_cast<int>(rng.next_below(6));
    const double lower = rng.next_double() * 4 - 3;
    const double bound = lower + 0.05 + rng.next_double() * 5;
    const SlackEncoding encoding = make_slack_encoding(k, lower, bound);
    const double raw = lower - 0.5 + rng.next_double() * (bound - lower + 1.0);
    const SlackMin closed = min_slack_value(encoding, raw);
    const double brute = brute_force_slack_min(encoding.scale, raw, lower, k);
    REQUIRE(closed.penalty == Catch::Approx(brute).margin(1e-12));
  }
  // half-integer ties round to the even level
  const SlackEncoding encoding = make_slack_encoding(3, 0.0, 7.5);
  CHECK(min_slack_value(encoding, 2.5).level == 2);
  CHECK(min_slack_value(encoding, 3.5).level == 4);
}

TEST_CASE("slack bit count is capped", "[penalty]") {
  CHECK_THROWS_AS(make_slack_encoding(21, 0.0, 1.0), ModelError);
  CHECK_THROWS_AS(make_slack_encoding(0, 0.0, 1.0), ModelError);
  CHECK_THROWS_AS(make_slack_encoding(4, 1.0, 1.0), ModelError);
}
