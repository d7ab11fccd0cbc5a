#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/penalty.hpp"
#include "gridpart/power_graph.hpp"
#include "gridpart/qubo.hpp"

namespace gridpart {

// The constrained formulation: minimize, over one-hot assignments of vertices
// to partitions,
//   sum_p [ alpha * size_p^2 + beta * (|E| - intra_p) ]
// subject to every partition's load sum_n v_np (w_n - k) being non-positive.
// The beta constant is counted once per partition, matching the objective as
// written; the cut-edges reading differs by the constant (P-1)*beta*|E| and
// has the same minimizers.
struct PartitionModel {
  PowerGraph graph;
  std::int32_t partition_count = 2;
  double alpha = 1.0;
  double beta = 10.0;
  double threshold = 0.5;  // self-sufficiency threshold k

  void validate() const {
    if (partition_count < 1) throw ModelError("partition count must be at least 1");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ModelError("alpha must be >= 0");
    if (!(beta >= 0) || !std::isfinite(beta)) throw ModelError("beta must be >= 0");
    if (!std::isfinite(threshold)) throw ModelError("threshold must be finite");
  }
};

// Compilation hyper-parameters: Lagrange multipliers and slack resolution.
struct PenaltyWeights {
  double onehot = 0;    // lambda_oh
  double balance = 0;   // lambda_bc
  double aux = 0;       // lambda_aux, sharing model only
  int slack_bits = 6;   // K

  void validate(bool sharing) const {
    if (!(onehot >= 0) || !std::isfinite(onehot))
      throw ModelError("one-hot weight must be >= 0");
    if (!(balance >= 0) || !std::isfinite(balance))
      throw ModelError("balancing weight must be >= 0");
    if (slack_bits < 1 || slack_bits > kMaxSlackBits)
      throw ModelError("slack bit count must be in 1.." + std::to_string(kMaxSlackBits));
    if (sharing) {
      if (!(aux > 0) || !std::isfinite(aux))
        throw ModelError("auxiliary weight must be > 0 for the sharing model");
    } else if (!(aux >= 0) || !std::isfinite(aux)) {
      throw ModelError("auxiliary weight must be >= 0");
    }
  }
};

struct CqmEvaluation {
  double objective = 0;
  int one_hot_violations = 0;
  int balancing_violations = 0;
  std::vector<double> partition_loads;

  bool feasible() const { return one_hot_violations == 0 && balancing_violations == 0; }
  int total_violations() const { return one_hot_violations + balancing_violations; }
};

// Evaluates the constrained model on assignment bits v, laid out as
// v[n * P + p]. Works on arbitrary bit vectors; violations are counted, not
// rejected.
inline CqmEvaluation evaluate_cqm(const PartitionModel& model,
                                  std::span<const std::uint8_t> v) {
  model.validate();
  const auto n_count = static_cast<std::size_t>(model.graph.vertex_count());
  const auto p_count = static_cast<std::size_t>(model.partition_count);
  if (v.size() != n_count * p_count)
    throw ModelError("assignment length " + std::to_string(v.size()) + " does not match N*P = " +
                     std::to_string(n_count * p_count));

  CqmEvaluation out;
  out.partition_loads.assign(p_count, 0.0);
  const double edge_total = static_cast<double>(model.graph.edge_count());
  double objective = 0;
  for (std::size_t p = 0; p < p_count; ++p) {
    double size = 0, load = 0, intra = 0;
    for (std::size_t n = 0; n < n_count; ++n) {
      if (!v[n * p_count + p]) continue;
      size += 1.0;
      load += model.graph.vertex(static_cast<std::uint32_t>(n)).surplus - model.threshold;
    }
    for (const GraphEdge& e : model.graph.edges())
      if (v[e.tail * p_count + p] && v[e.head * p_count + p]) intra += 1.0;
    objective += model.alpha * size * size + model.beta * (edge_total - intra);
    out.partition_loads[p] = load;
    if (load > 0) ++out.balancing_violations;
  }
  out.objective = objective;
  for (std::size_t n = 0; n < n_count; ++n) {
    int assigned = 0;
    for (std::size_t p = 0; p < p_count; ++p) assigned += v[n * p_count + p] ? 1 : 0;
    if (assigned != 1) ++out.one_hot_violations;
  }
  return out;
}

// Inter-partition flow F(v, f; p, q) of the sharing model:
//   sum_{edges} w_nm (f_nmp - f_nmq)(v_np v_mq + v_mp v_nq),
// antisymmetric in (p, q). f is laid out as f[e * P + p].
inline double flow_value(const PowerGraph& graph, std::span<const std::uint8_t> v,
                         std::span<const std::uint8_t> f, int p, int q, int partition_count) {
  const auto pc = static_cast<std::size_t>(partition_count);
  if (p < 0 || q < 0 || p >= partition_count || q >= partition_count)
    throw ModelError("partition index out of range");
  double total = 0;
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    const GraphEdge& edge = graph.edges()[e];
    const double df = static_cast<double>(f[e * pc + p]) - static_cast<double>(f[e * pc + q]);
    if (df == 0) continue;
    const double across =
        static_cast<double>(v[edge.tail * pc + p] & v[edge.head * pc + q]) +
        static_cast<double>(v[edge.head * pc + p] & v[edge.tail * pc + q]);
    total += edge.weight * df * across;
  }
  return total;
}

// One balancing penalty block: lambda * (constant + residual_terms . bits -
// sum_a 2^a x_a)^2. The slack bits of a partition appear in no other block, so
// exhaustive solvers may minimize each block in closed form.
struct SlackBlock {
  int partition = 0;
  std::vector<VarIndex> slack_vars;        // ascending significance
  double lambda = 0;
  double constant = 0;                     // scaled residual with all variables at 0
  std::vector<LinearTerm> residual_terms;  // scaled affine part over non-slack variables
  std::uint64_t max_level = 0;             // 2^K - 1
};

struct CompiledQubo {
  QuadraticModel model;
  VariableRegistry vars;
  std::vector<SlackBlock> slack_blocks;
  std::int32_t vertex_count = 0;
  std::int32_t partition_count = 0;
  std::int32_t slack_bits = 0;
  bool sharing = false;
  // c of the balancing bound: the (negative) lower bound for the plain model,
  // the (positive) additive constant for the sharing model.
  double balancing_constant = 0;
};

namespace detail {

inline void append_objective_terms(QuboBuilder& builder, const PartitionModel& model) {
  const auto n_count = static_cast<std::int32_t>(model.graph.vertex_count());
  const int p_count = model.partition_count;
  builder.add_offset(model.beta * static_cast<double>(model.graph.edge_count()) * p_count);
  for (int p = 0; p < p_count; ++p) {
    for (std::int32_t n = 0; n < n_count; ++n) {
      const VarIndex vn = builder.registry().require(assignment_var(n, p));
      builder.add_linear(vn, model.alpha);
      for (std::int32_t m = n + 1; m < n_count; ++m)
        builder.add_quadratic(vn, builder.registry().require(assignment_var(m, p)),
                              2.0 * model.alpha);
    }
    for (const GraphEdge& e : model.graph.edges())
      builder.add_quadratic(
          builder.registry().require(assignment_var(static_cast<std::int32_t>(e.tail), p)),
          builder.registry().require(assignment_var(static_cast<std::int32_t>(e.head), p)),
          -model.beta);
  }
}

inline void append_one_hot_terms(QuboBuilder& builder, const PartitionModel& model,
                                 double lambda) {
  const auto n_count = static_cast<std::int32_t>(model.graph.vertex_count());
  LinearConstraint constraint;
  constraint.bound = 1.0;
  constraint.sense = ConstraintSense::Equality;
  for (std::int32_t n = 0; n < n_count; ++n) {
    constraint.terms.clear();
    for (int p = 0; p < model.partition_count; ++p)
      constraint.terms.push_back({builder.registry().require(assignment_var(n, p)), 1.0});
    append_equality_penalty(builder, constraint, lambda);
  }
}

// Shared emitter for both balancing conventions. The residual of partition p
// is constant + sum(terms) - sum_a 2^a x_ap; the sign of the scaled bound is
// already baked into `constant` by the caller.
inline SlackBlock append_balancing_block(QuboBuilder& builder, int partition, double lambda,
                                         double constant, std::vector<LinearTerm> terms,
                                         std::span<const VarIndex> slack_vars) {
  SlackBlock block;
  block.partition = partition;
  block.lambda = lambda;
  block.constant = constant;
  block.residual_terms = terms;
  block.slack_vars.assign(slack_vars.begin(), slack_vars.end());
  block.max_level = (std::uint64_t{1} << slack_vars.size()) - 1;

  for (std::size_t a = 0; a < slack_vars.size(); ++a)
    terms.push_back({slack_vars[a], -std::ldexp(1.0, static_cast<int>(a))});
  append_affine_square(builder, lambda, constant, terms);
  return block;
}

// Ordered auxiliary index pairs of the sharing model: every (p, q) except
// (P-1, P-1), which is P^2 - 1 pairs. The off-diagonal pairs carry the flow
// reduction; the diagonal ones are pinned to their defining products as well
// so no variable is left unconstrained.
inline std::vector<std::pair<int, int>> aux_pair_list(int partition_count) {
  std::vector<std::pair<int, int>> pairs;
  for (int p = 0; p < partition_count; ++p)
    for (int q = 0; q < partition_count; ++q)
      if (p != partition_count - 1 || q != partition_count - 1) pairs.emplace_back(p, q);
  return pairs;
}

}  // namespace detail

// Compiles the model without electricity sharing. Registry order: v(n,p) at
// n*P+p, then x(a,p) grouped by partition; P(N+K) variables in total. The
// compiled energy equals H + lambda_oh*P_oh + lambda_bc*P_bc exactly.
inline CompiledQubo compile_qubo_plain(const PartitionModel& model,
                                       const PenaltyWeights& weights) {
  model.validate();
  weights.validate(false);
  const auto n_count = static_cast<std::int32_t>(model.graph.vertex_count());
  const int p_count = model.partition_count;
  const int k_bits = weights.slack_bits;

  double c = 0;
  for (const Vertex& v : model.graph.vertices())
    c += std::min(v.surplus - model.threshold, 0.0);
  if (!(c < 0))
    throw ModelError(
        "degenerate balancing bound: no vertex surplus lies below the threshold, so only "
        "empty partitions are feasible");

  CompiledQubo compiled;
  compiled.vertex_count = n_count;
  compiled.partition_count = p_count;
  compiled.slack_bits = k_bits;
  compiled.sharing = false;
  compiled.balancing_constant = c;

  for (std::int32_t n = 0; n < n_count; ++n)
    for (int p = 0; p < p_count; ++p) compiled.vars.add(assignment_var(n, p));
  for (int p = 0; p < p_count; ++p)
    for (int a = 0; a < k_bits; ++a) compiled.vars.add(slack_var(a, p));

  QuboBuilder builder(compiled.vars);
  detail::append_objective_terms(builder, model);
  detail::append_one_hot_terms(builder, model, weights.onehot);

  const SlackEncoding encoding = make_slack_encoding(k_bits, c, 0.0);
  for (int p = 0; p < p_count; ++p) {
    std::vector<LinearTerm> terms;
    for (std::int32_t n = 0; n < n_count; ++n) {
      const double coef = model.graph.vertex(static_cast<std::uint32_t>(n)).surplus -
                          model.threshold;
      if (coef != 0.0)
        terms.push_back({compiled.vars.require(assignment_var(n, p)), encoding.scale * coef});
    }
    std::vector<VarIndex> slack;
    for (int a = 0; a < k_bits; ++a) slack.push_back(compiled.vars.require(slack_var(a, p)));
    compiled.slack_blocks.push_back(detail::append_balancing_block(
        builder, p, weights.balance, -encoding.scale * c, std::move(terms), slack));
  }

  compiled.model = builder.finalize();
  return compiled;
}

// Compiles the model with electricity sharing. Registry order: v, x as in the
// plain model, then f(n,m,p) per edge and partition, then per edge the a, y
// and z families over the ordered pair list; P(N+K+|E|) + 3|E|(P^2-1)
// variables in total. The compiled energy equals
// H + lambda_oh*P_oh + lambda_bc*P_bc + lambda_aux*P_aux exactly, and on
// assignments whose auxiliaries equal their defining products the reduced
// flow G coincides with flow_value.
inline CompiledQubo compile_qubo_sharing(const PartitionModel& model,
                                         const PenaltyWeights& weights) {
  model.validate();
  weights.validate(true);
  const auto n_count = static_cast<std::int32_t>(model.graph.vertex_count());
  const int p_count = model.partition_count;
  const int k_bits = weights.slack_bits;
  const auto& edges = model.graph.edges();
  const auto e_count = static_cast<std::int32_t>(edges.size());

  double c = 0;
  for (const Vertex& v : model.graph.vertices())
    c += std::max(model.threshold - v.surplus, 0.0);
  c += model.graph.total_transfer_weight();
  if (!(c > 0))
    throw ModelError(
        "degenerate balancing bound: the sharing constant is zero (no surplus below the "
        "threshold and no transfer weight)");
  const double scale = (std::ldexp(1.0, k_bits) - 0.5) / c;

  CompiledQubo compiled;
  compiled.vertex_count = n_count;
  compiled.partition_count = p_count;
  compiled.slack_bits = k_bits;
  compiled.sharing = true;
  compiled.balancing_constant = c;

  for (std::int32_t n = 0; n < n_count; ++n)
    for (int p = 0; p < p_count; ++p) compiled.vars.add(assignment_var(n, p));
  for (int p = 0; p < p_count; ++p)
    for (int a = 0; a < k_bits; ++a) compiled.vars.add(slack_var(a, p));
  for (std::int32_t e = 0; e < e_count; ++e) {
    const auto n = static_cast<std::int32_t>(edges[e].tail);
    const auto m = static_cast<std::int32_t>(edges[e].head);
    for (int p = 0; p < p_count; ++p) compiled.vars.add(flow_var(n, m, p));
  }
  const auto pair_list = detail::aux_pair_list(p_count);
  for (std::int32_t e = 0; e < e_count; ++e) {
    const auto n = static_cast<std::int32_t>(edges[e].tail);
    const auto m = static_cast<std::int32_t>(edges[e].head);
    for (const auto& [p, q] : pair_list) compiled.vars.add(edge_pair_var(n, m, p, q));
    for (const auto& [p, q] : pair_list) compiled.vars.add(flow_pair_var(n, m, p, q));
    for (const auto& [p, q] : pair_list) compiled.vars.add(flow_pair_swap_var(n, m, p, q));
  }

  QuboBuilder builder(compiled.vars);
  detail::append_objective_terms(builder, model);
  detail::append_one_hot_terms(builder, model, weights.onehot);

  // Balancing with sharing: residual_p = scale*(c + load_p) + sum_{q != p}
  // G(y, z; q, p) - slack_p, with G left unscaled as specified.
  for (int p = 0; p < p_count; ++p) {
    std::vector<LinearTerm> terms;
    for (std::int32_t n = 0; n < n_count; ++n) {
      const double coef = model.graph.vertex(static_cast<std::uint32_t>(n)).surplus -
                          model.threshold;
      if (coef != 0.0)
        terms.push_back({compiled.vars.require(assignment_var(n, p)), scale * coef});
    }
    for (int q = 0; q < p_count; ++q) {
      if (q == p) continue;
      for (std::int32_t e = 0; e < e_count; ++e) {
        const double w = edges[e].weight;
        if (w == 0.0) continue;
        const auto n = static_cast<std::int32_t>(edges[e].tail);
        const auto m = static_cast<std::int32_t>(edges[e].head);
        terms.push_back({compiled.vars.require(flow_pair_var(n, m, q, p)), w});
        terms.push_back({compiled.vars.require(flow_pair_swap_var(n, m, q, p)), w});
        terms.push_back({compiled.vars.require(flow_pair_var(n, m, p, q)), -w});
        terms.push_back({compiled.vars.require(flow_pair_swap_var(n, m, p, q)), -w});
      }
    }
    std::vector<VarIndex> slack;
    for (int a = 0; a < k_bits; ++a) slack.push_back(compiled.vars.require(slack_var(a, p)));
    compiled.slack_blocks.push_back(detail::append_balancing_block(
        builder, p, weights.balance, scale * c, std::move(terms), slack));
  }

  // P_aux pins every auxiliary to its defining product.
  for (std::int32_t e = 0; e < e_count; ++e) {
    const auto n = static_cast<std::int32_t>(edges[e].tail);
    const auto m = static_cast<std::int32_t>(edges[e].head);
    for (const auto& [p, q] : pair_list) {
      const VarIndex a_pq = compiled.vars.require(edge_pair_var(n, m, p, q));
      append_product_gadget(builder, compiled.vars.require(assignment_var(n, p)),
                            compiled.vars.require(assignment_var(m, q)), a_pq, weights.aux);
      append_product_gadget(builder, compiled.vars.require(flow_var(n, m, p)), a_pq,
                            compiled.vars.require(flow_pair_var(n, m, p, q)), weights.aux);
      append_product_gadget(builder, compiled.vars.require(flow_var(n, m, p)),
                            compiled.vars.require(edge_pair_var(n, m, q, p)),
                            compiled.vars.require(flow_pair_swap_var(n, m, p, q)), weights.aux);
    }
  }

  compiled.model = builder.finalize();
  return compiled;
}

struct DecodedAssignment {
  // One entry per vertex; empty when the vertex is unassigned or multiply
  // assigned rather than silently resolved.
  std::vector<std::optional<std::int32_t>> vertex_partition;
  std::vector<std::uint32_t> unassigned;
  std::vector<std::uint32_t> multiply_assigned;
  std::vector<std::uint64_t> slack_levels;  // per partition
  std::vector<std::uint8_t> flow_bits;      // f bits in registry order, e*P+p
  std::vector<std::uint8_t> v_bits;         // n*P+p layout for evaluate_cqm

  bool one_hot() const { return unassigned.empty() && multiply_assigned.empty(); }
};

inline DecodedAssignment decode_assignment(const VariableRegistry& registry,
                                           std::span<const std::uint8_t> bits) {
  if (bits.size() != registry.size())
    throw ModelError("assignment length does not match registry size");
  std::int32_t max_vertex = -1, max_partition = -1;
  for (const VarName& name : registry.names()) {
    if (name.kind == VarKind::Assignment) {
      max_vertex = std::max(max_vertex, name.index[0]);
      max_partition = std::max(max_partition, name.index[1]);
    } else if (name.kind == VarKind::Slack) {
      max_partition = std::max(max_partition, name.index[1]);
    }
  }
  const auto n_count = static_cast<std::size_t>(max_vertex + 1);
  const auto p_count = static_cast<std::size_t>(max_partition + 1);

  DecodedAssignment out;
  out.vertex_partition.assign(n_count, std::nullopt);
  out.slack_levels.assign(p_count, 0);
  out.v_bits.assign(n_count * p_count, 0);
  std::vector<int> assigned_count(n_count, 0);

  for (VarIndex i = 0; i < registry.size(); ++i) {
    const VarName& name = registry.name(i);
    const std::uint8_t bit = bits[i];
    switch (name.kind) {
      case VarKind::Assignment: {
        const auto n = static_cast<std::size_t>(name.index[0]);
        const auto p = static_cast<std::size_t>(name.index[1]);
        out.v_bits[n * p_count + p] = bit;
        if (bit) {
          ++assigned_count[n];
          out.vertex_partition[n] = name.index[1];
        }
        break;
      }
      case VarKind::Slack:
        if (bit)
          out.slack_levels[static_cast<std::size_t>(name.index[1])] +=
              std::uint64_t{1} << name.index[0];
        break;
      case VarKind::Flow:
        out.flow_bits.push_back(bit);
        break;
      default:
        break;
    }
  }
  for (std::size_t n = 0; n < n_count; ++n) {
    if (assigned_count[n] == 1) continue;
    out.vertex_partition[n] = std::nullopt;
    if (assigned_count[n] == 0)
      out.unassigned.push_back(static_cast<std::uint32_t>(n));
    else
      out.multiply_assigned.push_back(static_cast<std::uint32_t>(n));
  }
  return out;
}

// Outcome record shared by every solver.
struct SolveReport {
  std::vector<std::uint8_t> assignment;  // v bits only for CQM solvers, full registry otherwise
  double objective = 0;                  // original objective of the decoded assignment
  int one_hot_violations = 0;
  int balancing_violations = 0;
  std::vector<double> partition_loads;
  double wall_seconds = 0;
  std::string solver_id;
  bool feasible = false;
  bool truncated = false;
};

inline SolveReport make_report(const PartitionModel& model, const VariableRegistry& registry,
                               std::vector<std::uint8_t> assignment, double wall_seconds,
                               std::string solver_id, bool truncated) {
  const DecodedAssignment decoded = decode_assignment(registry, assignment);
  const CqmEvaluation eval = evaluate_cqm(model, decoded.v_bits);
  SolveReport report;
  report.assignment = std::move(assignment);
  report.objective = eval.objective;
  report.one_hot_violations = eval.one_hot_violations;
  report.balancing_violations = eval.balancing_violations;
  report.partition_loads = eval.partition_loads;
  report.wall_seconds = wall_seconds;
  report.solver_id = std::move(solver_id);
  report.feasible = eval.feasible();
  report.truncated = truncated;
  return report;
}

}  // namespace gridpart
