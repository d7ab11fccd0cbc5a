#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/format.hpp"

namespace gridpart {

using VarIndex = std::uint32_t;

// Variable families of the compiled models. The single-letter tags are the
// wire names used in decoded output and the text serialization.
enum class VarKind : std::uint8_t {
  Assignment,    // v(n,p): vertex n belongs to partition p
  Slack,         // x(a,p): slack bit a of partition p's balancing penalty
  Flow,          // f(n,m,p): edge {n,m} sends its transfer toward partition p
  EdgePair,      // a(n,m,p,q): product v(n,p)*v(m,q)
  FlowPair,      // y(n,m,p,q): product f(n,m,p)*a(n,m,p,q)
  FlowPairSwap,  // z(n,m,p,q): product f(n,m,p)*a(n,m,q,p)
};

inline constexpr int arity(VarKind kind) {
  switch (kind) {
    case VarKind::Assignment:
    case VarKind::Slack:
      return 2;
    case VarKind::Flow:
      return 3;
    default:
      return 4;
  }
}

inline constexpr char tag(VarKind kind) {
  switch (kind) {
    case VarKind::Assignment:
      return 'v';
    case VarKind::Slack:
      return 'x';
    case VarKind::Flow:
      return 'f';
    case VarKind::EdgePair:
      return 'a';
    case VarKind::FlowPair:
      return 'y';
    default:
      return 'z';
  }
}

struct VarName {
  VarKind kind;
  std::array<std::int32_t, 4> index{-1, -1, -1, -1};

  friend bool operator==(const VarName& a, const VarName& b) {
    return a.kind == b.kind && a.index == b.index;
  }
};

inline VarName assignment_var(std::int32_t n, std::int32_t p) {
  return {VarKind::Assignment, {n, p, -1, -1}};
}
inline VarName slack_var(std::int32_t a, std::int32_t p) {
  return {VarKind::Slack, {a, p, -1, -1}};
}
inline VarName flow_var(std::int32_t n, std::int32_t m, std::int32_t p) {
  return {VarKind::Flow, {n, m, p, -1}};
}
inline VarName edge_pair_var(std::int32_t n, std::int32_t m, std::int32_t p, std::int32_t q) {
  return {VarKind::EdgePair, {n, m, p, q}};
}
inline VarName flow_pair_var(std::int32_t n, std::int32_t m, std::int32_t p, std::int32_t q) {
  return {VarKind::FlowPair, {n, m, p, q}};
}
inline VarName flow_pair_swap_var(std::int32_t n, std::int32_t m, std::int32_t p,
                                  std::int32_t q) {
  return {VarKind::FlowPairSwap, {n, m, p, q}};
}

inline std::string to_string(const VarName& name) {
  std::string out(1, tag(name.kind));
  out += '(';
  for (int i = 0; i < arity(name.kind); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(name.index[i]);
  }
  out += ')';
  return out;
}

struct VarNameHash {
  std::size_t operator()(const VarName& name) const {
    std::uint64_t h = static_cast<std::uint64_t>(name.kind) + 1;
    for (int i = 0; i < 4; ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(name.index[i])) +
           0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

// Bijection between structured variable names and dense indices 0..V-1.
// Insertion order is the dense order and is stable.
class VariableRegistry {
 public:
  VarIndex add(const VarName& name) {
    auto [it, fresh] = lookup_.try_emplace(name, static_cast<VarIndex>(names_.size()));
    if (!fresh) throw ModelError("variable already registered: " + to_string(name));
    names_.push_back(name);
    return it->second;
  }

  VarIndex require(const VarName& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw ModelError("unregistered variable: " + to_string(name));
    return it->second;
  }

  bool contains(const VarName& name) const { return lookup_.count(name) != 0; }

  const VarName& name(VarIndex index) const { return names_.at(index); }

  std::size_t size() const { return names_.size(); }

  const std::vector<VarName>& names() const { return names_; }

 private:
  std::vector<VarName> names_;
  std::unordered_map<VarName, VarIndex, VarNameHash> lookup_;
};

// Finalized sparse quadratic form over binary variables:
//   E(x) = offset + sum_i linear[i] x_i + sum_{i<j} coef_ij x_i x_j.
// Quadratic storage is strictly upper triangular; diagonal contributions are
// folded into the linear part (x_i^2 = x_i for binary x). Immutable once
// built, safe to share across solver threads.
class QuadraticModel {
 public:
  struct Pair {
    VarIndex i, j;  // i < j
    double coef;
  };

  QuadraticModel() = default;
  QuadraticModel(std::size_t vars, double offset, std::vector<double> linear,
                 std::vector<Pair> pairs)
      : num_vars_(vars), offset_(offset), linear_(std::move(linear)), pairs_(std::move(pairs)) {
    build_adjacency();
  }

  std::size_t size() const { return num_vars_; }
  double offset() const { return offset_; }
  const std::vector<double>& linear() const { return linear_; }
  const std::vector<Pair>& pairs() const { return pairs_; }

  double evaluate(std::span<const std::uint8_t> bits) const {
    if (bits.size() != num_vars_)
      throw ModelError("assignment length " + std::to_string(bits.size()) +
                       " does not match variable count " + std::to_string(num_vars_));
    double acc = offset_;
    for (std::size_t i = 0; i < num_vars_; ++i)
      if (bits[i]) acc += linear_[i];
    for (const Pair& term : pairs_)
      if (bits[term.i] && bits[term.j]) acc += term.coef;
    return acc;
  }

  // Symmetric adjacency view used by incremental solvers.
  struct Neighbor {
    VarIndex var;
    double coef;
  };
  std::span<const Neighbor> neighbors(VarIndex i) const {
    return {adjacency_.data() + adj_offsets_[i], adj_offsets_[i + 1] - adj_offsets_[i]};
  }

  double mean_abs_coefficient() const {
    double sum = 0;
    std::size_t count = 0;
    for (double c : linear_)
      if (c != 0.0) {
        sum += std::abs(c);
        ++count;
      }
    for (const Pair& term : pairs_) {
      sum += std::abs(term.coef);
      ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }

  double min_abs_coefficient() const {
    double best = 0;
    auto consider = [&](double c) {
      if (c == 0.0) return;
      const double a = std::abs(c);
      if (best == 0.0 || a < best) best = a;
    };
    for (double c : linear_) consider(c);
    for (const Pair& term : pairs_) consider(term.coef);
    return best;
  }

  // Line-oriented text form for cross-checking against external tools:
  //   c <offset>
  //   l <i> <coef>
  //   q <i> <j> <coef>        (i < j)
  // Lines appear in that order, indices ascending.
  void serialize(std::ostream& out) const {
    out << "c " << format_double(offset_) << '\n';
    for (std::size_t i = 0; i < num_vars_; ++i)
      if (linear_[i] != 0.0) out << "l " << i << ' ' << format_double(linear_[i]) << '\n';
    for (const Pair& term : pairs_)
      out << "q " << term.i << ' ' << term.j << ' ' << format_double(term.coef) << '\n';
  }

 private:
  void build_adjacency() {
    adj_offsets_.assign(num_vars_ + 1, 0);
    for (const Pair& term : pairs_) {
      ++adj_offsets_[term.i + 1];
      ++adj_offsets_[term.j + 1];
    }
    for (std::size_t i = 0; i < num_vars_; ++i) adj_offsets_[i + 1] += adj_offsets_[i];
    adjacency_.resize(pairs_.size() * 2);
    std::vector<std::size_t> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
    for (const Pair& term : pairs_) {
      adjacency_[cursor[term.i]++] = {term.j, term.coef};
      adjacency_[cursor[term.j]++] = {term.i, term.coef};
    }
  }

  std::size_t num_vars_ = 0;
  double offset_ = 0;
  std::vector<double> linear_;
  std::vector<Pair> pairs_;
  std::vector<Neighbor> adjacency_;
  std::vector<std::size_t> adj_offsets_{0};
};

// Single-writer accumulator for quadratic models. Coefficients on repeated
// terms add; pair order is normalized; degree-0 terms land in the offset.
// Zero coefficients are pruned when finalizing.
class QuboBuilder {
 public:
  explicit QuboBuilder(const VariableRegistry& registry) : registry_(&registry) {}

  void add_offset(double coef) {
    check_finite(coef);
    offset_ += coef;
  }

  void add_linear(VarIndex i, double coef) {
    check_finite(coef);
    linear_[i] += coef;
  }

  void add_quadratic(VarIndex i, VarIndex j, double coef) {
    check_finite(coef);
    if (i == j) {
      linear_[i] += coef;  // binary idempotence
      return;
    }
    if (i > j) std::swap(i, j);
    quadratic_[pair_key(i, j)] += coef;
  }

  // Degree 0, 1 or 2 by name. Higher degrees must be reduced first.
  void add_term(std::span<const VarName> variables, double coef) {
    if (variables.size() > 2)
      throw ModelError("term degree " + std::to_string(variables.size()) +
                       " exceeds 2; apply degree reduction first");
    switch (variables.size()) {
      case 0:
        add_offset(coef);
        break;
      case 1:
        add_linear(registry_->require(variables[0]), coef);
        break;
      default:
        add_quadratic(registry_->require(variables[0]), registry_->require(variables[1]), coef);
    }
  }

  QuadraticModel finalize() const {
    const std::size_t vars = registry_->size();
    std::vector<double> linear(vars, 0.0);
    for (const auto& [i, coef] : linear_) {
      if (i >= vars) throw ModelError("linear term on unregistered index");
      if (coef != 0.0) linear[i] = coef;
    }
    std::vector<QuadraticModel::Pair> pairs;
    pairs.reserve(quadratic_.size());
    for (const auto& [key, coef] : quadratic_) {
      if (coef == 0.0) continue;
      const auto i = static_cast<VarIndex>(key >> 32);
      const auto j = static_cast<VarIndex>(key & 0xFFFFFFFFULL);
      if (j >= vars) throw ModelError("quadratic term on unregistered index");
      pairs.push_back({i, j, coef});
    }
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    return QuadraticModel(vars, offset_, std::move(linear), std::move(pairs));
  }

  const VariableRegistry& registry() const { return *registry_; }

 private:
  static void check_finite(double coef) {
    if (!std::isfinite(coef)) throw ModelError("non-finite coefficient");
  }
  static std::uint64_t pair_key(VarIndex i, VarIndex j) {
    return (static_cast<std::uint64_t>(i) << 32) | j;
  }

  const VariableRegistry* registry_;
  double offset_ = 0;
  std::unordered_map<VarIndex, double> linear_;
  std::unordered_map<std::uint64_t, double> quadratic_;
};

}  // namespace gridpart
