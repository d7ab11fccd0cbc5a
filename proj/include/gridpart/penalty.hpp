#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/qubo.hpp"

namespace gridpart {

// Scales blow up exponentially in the slack bit count; past 20 bits the
// squared penalties stop being trustworthy in double precision.
inline constexpr int kMaxSlackBits = 20;

struct LinearTerm {
  VarIndex var;
  double coef;
};

enum class ConstraintSense { Equality, AtMost };

// a^T x {=, <=} bound over binary x.
struct LinearConstraint {
  std::vector<LinearTerm> terms;
  double bound = 0;
  ConstraintSense sense = ConstraintSense::Equality;
};

// Tight lower bound of a^T x over binary x: the sum of negative coefficients,
// or 0 when there are none.
inline double binary_lower_bound(std::span<const LinearTerm> terms) {
  double c = 0;
  for (const LinearTerm& t : terms) {
    if (!std::isfinite(t.coef)) throw ModelError("non-finite constraint coefficient");
    if (t.coef < 0) c += t.coef;
  }
  return c;
}

inline double binary_lower_bound(const LinearConstraint& constraint) {
  return binary_lower_bound(std::span<const LinearTerm>(constraint.terms));
}

// K-bit slack lattice for an inequality with range [lower, bound].
// scale is the unique factor making the quarter test of the feasibility
// theorem valid: scale = (2^K - 1/2) / (bound - lower).
struct SlackEncoding {
  int bit_count = 0;
  double lower = 0;
  double bound = 0;
  double scale = 0;

  std::uint64_t max_level() const { return (std::uint64_t{1} << bit_count) - 1; }
};

inline SlackEncoding make_slack_encoding(int bit_count, double lower, double bound) {
  if (bit_count < 1 || bit_count > kMaxSlackBits)
    throw ModelError("slack bit count must be in 1.." + std::to_string(kMaxSlackBits));
  if (!(bound > lower)) throw ModelError("degenerate constraint range: bound <= lower bound");
  const double scale =
      (std::ldexp(1.0, bit_count) - 0.5) / (bound - lower);
  return SlackEncoding{bit_count, lower, bound, scale};
}

// Emits multiplier * (constant + sum coef_i x_i)^2 into the builder, with
// x_i^2 = x_i folded into the linear part.
inline void append_affine_square(QuboBuilder& builder, double multiplier, double constant,
                                 std::span<const LinearTerm> terms) {
  if (multiplier == 0.0) return;
  builder.add_offset(multiplier * constant * constant);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& [vi, ci] = terms[i];
    builder.add_linear(vi, multiplier * (ci * ci + 2.0 * constant * ci));
    for (std::size_t j = i + 1; j < terms.size(); ++j)
      builder.add_quadratic(vi, terms[j].var, multiplier * 2.0 * ci * terms[j].coef);
  }
}

// Penalty for a^T x = b: zero iff the constraint holds, (a^T x - b)^2 otherwise.
inline void append_equality_penalty(QuboBuilder& builder, const LinearConstraint& constraint,
                                    double multiplier = 1.0) {
  if (constraint.sense != ConstraintSense::Equality)
    throw ModelError("equality penalty requires an equality constraint");
  append_affine_square(builder, multiplier, -constraint.bound, constraint.terms);
}

// Approximate penalty for a^T x <= b over the given fresh slack bits:
//   P(x,z) = (scale * (a^T x - c) - sum_i 2^i z_i)^2,  c = binary lower bound.
// Feasible x admit a z with P <= 1/4; infeasible x have P > 1/4 for every z.
inline SlackEncoding append_inequality_penalty(QuboBuilder& builder,
                                               const LinearConstraint& constraint,
                                               std::span<const VarIndex> slack_bits,
                                               double multiplier = 1.0) {
  if (constraint.sense != ConstraintSense::AtMost)
    throw ModelError("inequality penalty requires an at-most constraint");
  const double c = binary_lower_bound(constraint);
  const SlackEncoding encoding =
      make_slack_encoding(static_cast<int>(slack_bits.size()), c, constraint.bound);

  std::vector<LinearTerm> scaled;
  scaled.reserve(constraint.terms.size() + slack_bits.size());
  for (const LinearTerm& t : constraint.terms)
    scaled.push_back({t.var, encoding.scale * t.coef});
  for (std::size_t i = 0; i < slack_bits.size(); ++i)
    scaled.push_back({slack_bits[i], -std::ldexp(1.0, static_cast<int>(i))});
  append_affine_square(builder, multiplier, -encoding.scale * c, scaled);
  return encoding;
}

// Number of slack bits needed to represent gaps 0..range exactly.
inline int integer_slack_bit_count(double range) {
  int bits = 1;
  while (std::ldexp(1.0, bits) - 1.0 < range) ++bits;
  return bits;
}

// Exact slack penalty for integer-valued a and b:
//   P(x,z) = (a^T x - c - sum_{i<I-1} 2^i z_i - z_{I-1} w_top)^2
// with w_top = (b - c) - (2^{I-1} - 1), so the representable slack values are
// exactly 0..b-c and P = 0 iff the constraint is met.
inline void append_integer_slack_penalty(QuboBuilder& builder,
                                         const LinearConstraint& constraint,
                                         std::span<const VarIndex> slack_bits,
                                         double multiplier = 1.0) {
  if (constraint.sense != ConstraintSense::AtMost)
    throw ModelError("integer slack penalty requires an at-most constraint");
  auto integral = [](double v) { return std::nearbyint(v) == v && std::abs(v) < 0x1p53; };
  for (const LinearTerm& t : constraint.terms)
    if (!integral(t.coef))
      throw ModelError("integer slack penalty requires integer coefficients");
  if (!integral(constraint.bound))
    throw ModelError("integer slack penalty requires an integer bound");

  const double c = binary_lower_bound(constraint);
  const double range = constraint.bound - c;
  if (range < 1.0)
    throw ModelError("degenerate constraint range: b - c must be at least 1");
  const int bits = integer_slack_bit_count(range);
  if (bits > kMaxSlackBits) throw ModelError("constraint range needs too many slack bits");
  if (static_cast<int>(slack_bits.size()) != bits)
    throw ModelError("expected " + std::to_string(bits) + " slack bits, got " +
                     std::to_string(slack_bits.size()));

  std::vector<LinearTerm> terms(constraint.terms);
  for (int i = 0; i + 1 < bits; ++i)
    terms.push_back({slack_bits[i], -std::ldexp(1.0, i)});
  const double top = range - (std::ldexp(1.0, bits - 1) - 1.0);
  terms.push_back({slack_bits[bits - 1], -top});
  append_affine_square(builder, multiplier, -c, terms);
}

// Degree-reduction gadget M(x_i, x_j, z) = x_i x_j - 2 z (x_i + x_j) + 3 z.
// Non-negative everywhere, zero exactly when z = x_i * x_j.
inline void append_product_gadget(QuboBuilder& builder, VarIndex x_i, VarIndex x_j,
                                  VarIndex fresh_z, double multiplier = 1.0) {
  if (x_i == x_j) throw ModelError("product gadget requires distinct variables");
  if (fresh_z == x_i || fresh_z == x_j)
    throw ModelError("product gadget target aliases an input variable");
  builder.add_quadratic(x_i, x_j, multiplier);
  builder.add_quadratic(fresh_z, x_i, -2.0 * multiplier);
  builder.add_quadratic(fresh_z, x_j, -2.0 * multiplier);
  builder.add_linear(fresh_z, 3.0 * multiplier);
}

struct SlackMin {
  std::uint64_t level;  // best integer slack value
  double penalty;       // (scaled residual - level)^2
};

// Closed-form minimization over the slack lattice for a fixed raw value
// a^T x. Equals the exhaustive minimum over all 2^K slack assignments; ties
// resolve by round-half-to-even.
inline SlackMin min_slack_value(const SlackEncoding& encoding, double raw) {
  const double scaled = encoding.scale * (raw - encoding.lower);
  double level = std::nearbyint(scaled);
  if (level < 0) level = 0;
  const double max_level = static_cast<double>(encoding.max_level());
  if (level > max_level) level = max_level;
  const double residual = scaled - level;
  return SlackMin{static_cast<std::uint64_t>(level), residual * residual};
}

}  // namespace gridpart
