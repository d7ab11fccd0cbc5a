#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "gridpart/partition_model.hpp"
#include "gridpart/rng.hpp"

using namespace gridpart;

namespace {

PowerGraph four_cycle(double surplus) {
  std::vector<Vertex> vs;
  for (int i = 0; i < 4; ++i) vs.push_back({"n" + std::to_string(i), surplus, {}});
  return PowerGraph(vs, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {0, 3, 1.0}});
}

PowerGraph path_graph(const std::vector<double>& surpluses) {
  std::vector<Vertex> vs;
  for (std::size_t i = 0; i < surpluses.size(); ++i)
    vs.push_back({"n" + std::to_string(i), surpluses[i], {}});
  std::vector<GraphEdge> edges;
  for (std::uint32_t i = 0; i + 1 < surpluses.size(); ++i) edges.push_back({i, i + 1, 1.0});
  return PowerGraph(vs, edges);
}

// ---- independent oracles, straight from the formulas ----

double oracle_objective(const PartitionModel& m, std::span<const std::uint8_t> bits,
                        const VariableRegistry& vars) {
  const auto N = static_cast<int>(m.graph.vertex_count());
  double total = 0;
  for (int p = 0; p < m.partition_count; ++p) {
    double size = 0, intra = 0;
    for (int n = 0; n < N; ++n) size += bits[vars.require(assignment_var(n, p))];
    for (const GraphEdge& e : m.graph.edges())
      intra += bits[vars.require(assignment_var(static_cast<int>(e.tail), p))] *
               bits[vars.require(assignment_var(static_cast<int>(e.head), p))];
    total += m.alpha * size * size +
             m.beta * (static_cast<double>(m.graph.edge_count()) - intra);
  }
  return total;
}

double oracle_onehot(const PartitionModel& m, std::span<const std::uint8_t> bits,
                     const VariableRegistry& vars) {
  const auto N = static_cast<int>(m.graph.vertex_count());
  double total = 0;
  for (int n = 0; n < N; ++n) {
    double sum = 0;
    for (int p = 0; p < m.partition_count; ++p) sum += bits[vars.require(assignment_var(n, p))];
    total += (sum - 1.0) * (sum - 1.0);
  }
  return total;
}

double oracle_slack_level(const VariableRegistry& vars, std::span<const std::uint8_t> bits,
                          int p, int k_bits) {
  double level = 0;
  for (int a = 0; a < k_bits; ++a)
    level += std::ldexp(1.0, a) * bits[vars.require(slack_var(a, p))];
  return level;
}

double oracle_balance_plain(const PartitionModel& m, int k_bits,
                            std::span<const std::uint8_t> bits, const VariableRegistry& vars) {
  const auto N = static_cast<int>(m.graph.vertex_count());
  double c = 0;
  for (const Vertex& v : m.graph.vertices()) c += std::min(v.surplus - m.threshold, 0.0);
  const double scale = (std::ldexp(1.0, k_bits) - 0.5) / (-c);
  double total = 0;
  for (int p = 0; p < m.partition_count; ++p) {
    double load = 0;
    for (int n = 0; n < N; ++n)
      load += bits[vars.require(assignment_var(n, p))] *
              (m.graph.vertex(static_cast<std::uint32_t>(n)).surplus - m.threshold);
    const double residual = scale * (-c + load) - oracle_slack_level(vars, bits, p, k_bits);
    total += residual * residual;
  }
  return total;
}

std::vector<std::pair<int, int>> oracle_pairs(int P) {
  std::vector<std::pair<int, int>> pairs;
  for (int p = 0; p < P; ++p)
    for (int q = 0; q < P; ++q)
      if (p != P - 1 || q != P - 1) pairs.emplace_back(p, q);
  return pairs;
}

double oracle_reduced_flow(const PartitionModel& m, std::span<const std::uint8_t> bits,
                           const VariableRegistry& vars, int p, int q) {
  double total = 0;
  for (const GraphEdge& e : m.graph.edges()) {
    const int n = static_cast<int>(e.tail), mm = static_cast<int>(e.head);
    total += e.weight * (bits[vars.require(flow_pair_var(n, mm, p, q))] +
                         bits[vars.require(flow_pair_swap_var(n, mm, p, q))] -
                         bits[vars.require(flow_pair_var(n, mm, q, p))] -
                         bits[vars.require(flow_pair_swap_var(n, mm, q, p))]);
  }
  return total;
}

double oracle_balance_sharing(const PartitionModel& m, int k_bits,
                              std::span<const std::uint8_t> bits,
                              const VariableRegistry& vars) {
  const auto N = static_cast<int>(m.graph.vertex_count());
  double c = 0;
  for (const Vertex& v : m.graph.vertices()) c += std::max(m.threshold - v.surplus, 0.0);
  c += m.graph.total_transfer_weight();
  const double scale = (std::ldexp(1.0, k_bits) - 0.5) / c;
  double total = 0;
  for (int p = 0; p < m.partition_count; ++p) {
    double load = 0;
    for (int n = 0; n < N; ++n)
      load += bits[vars.require(assignment_var(n, p))] *
              (m.graph.vertex(static_cast<std::uint32_t>(n)).surplus - m.threshold);
    double g_sum = 0;
    for (int q = 0; q < m.partition_count; ++q)
      if (q != p) g_sum += oracle_reduced_flow(m, bits, vars, q, p);
    const double residual =
        scale * (c + load) + g_sum - oracle_slack_level(vars, bits, p, k_bits);
    total += residual * residual;
  }
  return total;
}

double gadget(double x, double y, double z) { return x * y - 2 * z * (x + y) + 3 * z; }

double oracle_aux(const PartitionModel& m, std::span<const std::uint8_t> bits,
                  const VariableRegistry& vars) {
  double total = 0;
  for (const GraphEdge& e : m.graph.edges()) {
    const int n = static_cast<int>(e.tail), mm = static_cast<int>(e.head);
    for (const auto& [p, q] : oracle_pairs(m.partition_count)) {
      const double a = bits[vars.require(edge_pair_var(n, mm, p, q))];
      const double a_swapped = bits[vars.require(edge_pair_var(n, mm, q, p))];
      const double f = bits[vars.require(flow_var(n, mm, p))];
      total += gadget(bits[vars.require(assignment_var(n, p))],
                      bits[vars.require(assignment_var(mm, q))], a);
      total += gadget(f, a, bits[vars.require(flow_pair_var(n, mm, p, q))]);
      total += gadget(f, a_swapped, bits[vars.require(flow_pair_swap_var(n, mm, p, q))]);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("evaluate_cqm worked examples", "[model]") {
  PartitionModel model{four_cycle(0.0), 2, 1.0, 10.0, 0.5};

  // partition {0,1} | {2,3}
  std::vector<std::uint8_t> pairs{1, 0, 1, 0, 0, 1, 0, 1};
  CqmEvaluation eval = evaluate_cqm(model, pairs);
  CHECK(eval.objective == 68.0);  // size term 8, edge term 10*(2*4-2)
  CHECK(eval.one_hot_violations == 0);
  CHECK(eval.balancing_violations == 0);

  // everything in one partition, P = 1
  PartitionModel single{four_cycle(0.0), 1, 1.0, 10.0, 0.5};
  std::vector<std::uint8_t> all{1, 1, 1, 1};
  eval = evaluate_cqm(single, all);
  CHECK(eval.objective == 16.0);
  CHECK(eval.one_hot_violations == 0);

  // all surpluses above the threshold: every occupied partition violates
  PartitionModel hot{four_cycle(1.0), 2, 1.0, 10.0, 0.5};
  eval = evaluate_cqm(hot, pairs);
  CHECK(eval.balancing_violations == 2);
  CHECK(eval.partition_loads[0] == Catch::Approx(1.0));
  CHECK(eval.partition_loads[1] == Catch::Approx(1.0));

  CHECK_THROWS_AS(evaluate_cqm(model, std::vector<std::uint8_t>{1, 0}), ModelError);
}

TEST_CASE("plain compiler registry and constants", "[model]") {
  PartitionModel model{four_cycle(0.2), 2, 1.0, 10.0, 0.5};
  PenaltyWeights weights{1.0, 1.0, 0.0, 6};
  const CompiledQubo compiled = compile_qubo_plain(model, weights);
  CHECK(compiled.vars.size() == 20);  // P(N+K) = 2(4+6)
  CHECK(compiled.slack_blocks.size() == 2);

  // a feasible one-hot assignment has zero one-hot penalty: the QUBO equals
  // H plus the balancing part alone
  std::vector<std::uint8_t> bits(compiled.vars.size(), 0);
  for (int n = 0; n < 4; ++n) bits[compiled.vars.require(assignment_var(n, n % 2))] = 1;
  const double energy = compiled.model.evaluate(bits);
  const double expected = oracle_objective(model, bits, compiled.vars) +
                          weights.balance * oracle_balance_plain(model, 6, bits, compiled.vars);
  CHECK(energy == Catch::Approx(expected).margin(1e-9));

  // c from the worked two-vertex example
  std::vector<Vertex> vs{{"a", 0.2, {}}, {"b", 0.8, {}}};
  PartitionModel tiny{PowerGraph(vs, {{0, 1, 1.0}}), 2, 1.0, 10.0, 0.5};
  const CompiledQubo tiny_compiled = compile_qubo_plain(tiny, weights);
  CHECK(tiny_compiled.balancing_constant == Catch::Approx(-0.3));
}

TEST_CASE("plain compiler rejects degenerate balancing", "[model]") {
  PartitionModel model{four_cycle(0.9), 2, 1.0, 10.0, 0.5};  // every w above k
  CHECK_THROWS_AS(compile_qubo_plain(model, PenaltyWeights{1, 1, 0, 6}), ModelError);
}

TEST_CASE("variable counts match the formulas across a sweep", "[model]") {
  Rng rng(3);
  for (int n = 2; n <= 6; ++n)
    for (int p = 1; p <= 4; ++p)
      for (int k : {1, 4, 8}) {
        const PowerGraph graph = generate_random_graph(n, 0.6, rng.next_u64());
        PartitionModel model{graph, p, 1.0, 10.0, 0.5};
        PenaltyWeights weights{1.0, 1.0, 1.0, k};
        bool some_below = false;
        for (const Vertex& v : graph.vertices()) some_below = some_below || v.surplus < 0.5;
        if (!some_below) continue;
        const auto E = static_cast<std::size_t>(graph.edge_count());
        CHECK(compile_qubo_plain(model, weights).vars.size() ==
              static_cast<std::size_t>(p) * (n + k));
        CHECK(compile_qubo_sharing(model, weights).vars.size() ==
              static_cast<std::size_t>(p) * (n + k + E) +
                  3 * E * (static_cast<std::size_t>(p) * p - 1));
      }
}

TEST_CASE("sharing compiler worked examples", "[model]") {
  PartitionModel model{four_cycle(0.2), 2, 1.0, 10.0, 0.5};
  PenaltyWeights weights{1.0, 1.0, 1.0, 6};
  const CompiledQubo compiled = compile_qubo_sharing(model, weights);
  CHECK(compiled.vars.size() == 64);  // 2*14 + 3*4*3

  PartitionModel single{four_cycle(0.2), 1, 1.0, 10.0, 0.5};
  const CompiledQubo p1 = compile_qubo_sharing(single, weights);
  CHECK(p1.vars.size() == 4 + 6 + 4);  // N + K + |E|, no auxiliaries
  for (const VarName& name : p1.vars.names())
    CHECK((name.kind == VarKind::Assignment || name.kind == VarKind::Slack ||
           name.kind == VarKind::Flow));

  PenaltyWeights no_aux{1.0, 1.0, 0.0, 6};
  CHECK_THROWS_AS(compile_qubo_sharing(model, no_aux), ModelError);
}

TEST_CASE("flow function is an antisymmetric flow", "[model]") {
  const PowerGraph graph = four_cycle(0.0);
  const int P = 2;
  // partitions {0,1} | {2,3}
  std::vector<std::uint8_t> v{1, 0, 1, 0, 0, 1, 0, 1};
  std::vector<std::uint8_t> f(graph.edge_count() * P, 0);

  // same index twice is identically zero
  CHECK(flow_value(graph, v, f, 0, 0, P) == 0.0);
  CHECK(flow_value(graph, v, f, 1, 1, P) == 0.0);

  // edge (1,2) crosses the cut; send it toward partition 0
  f[1 * P + 0] = 1;
  CHECK(flow_value(graph, v, f, 0, 1, P) == 1.0);
  CHECK(flow_value(graph, v, f, 1, 0, P) == -1.0);

  // equal flow bits cancel
  std::vector<std::uint8_t> f_same(graph.edge_count() * P, 1);
  CHECK(flow_value(graph, v, f_same, 0, 1, P) == 0.0);

  // antisymmetry on random assignments
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> vr(v.size()), fr(f.size());
    for (auto& b : vr) b = rng.next_bit();
    for (auto& b : fr) b = rng.next_bit();
    const double forward = flow_value(graph, vr, fr, 0, 1, P);
    CHECK(flow_value(graph, vr, fr, 1, 0, P) == -forward);
  }
}

TEST_CASE("compiled energy decomposes into the penalty terms", "[model][property]") {
  Rng rng(17);

  SECTION("plain model") {
    const PowerGraph graph = path_graph({0.2, 0.8, 0.6, 0.3});
    PartitionModel model{graph, 2, 1.0, 10.0, 0.5};
    PenaltyWeights weights{3.5, 1.25, 0.0, 3};
    const CompiledQubo compiled = compile_qubo_plain(model, weights);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::uint8_t> bits(compiled.vars.size());
      for (auto& b : bits) b = rng.next_bit();
      const double expected =
          oracle_objective(model, bits, compiled.vars) +
          weights.onehot * oracle_onehot(model, bits, compiled.vars) +
          weights.balance * oracle_balance_plain(model, 3, bits, compiled.vars);
      REQUIRE(compiled.model.evaluate(bits) == Catch::Approx(expected).margin(1e-9));
    }
  }

  SECTION("sharing model, P = 2 and P = 3") {
    for (int p_count : {2, 3}) {
      const PowerGraph graph = path_graph({0.2, 0.8, 0.6});
      PartitionModel model{graph, p_count, 1.0, 10.0, 0.5};
      PenaltyWeights weights{2.0, 0.75, 1.5, 2};
      const CompiledQubo compiled = compile_qubo_sharing(model, weights);
      for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::uint8_t> bits(compiled.vars.size());
        for (auto& b : bits) b = rng.next_bit();
        const double expected =
            oracle_objective(model, bits, compiled.vars) +
            weights.onehot * oracle_onehot(model, bits, compiled.vars) +
            weights.balance * oracle_balance_sharing(model, 2, bits, compiled.vars) +
            weights.aux * oracle_aux(model, bits, compiled.vars);
        REQUIRE(compiled.model.evaluate(bits) == Catch::Approx(expected).margin(1e-9));
      }
    }
  }
}

TEST_CASE("feasibility gap of the compiled plain model", "[model][property]") {
  const PowerGraph graph = path_graph({0.2, 0.8, 0.6});
  PartitionModel model{graph, 2, 1.0, 10.0, 0.5};
  const int k_bits = 4;
  PenaltyWeights weights{3.0, 1.7, 0.0, k_bits};
  const CompiledQubo compiled = compile_qubo_plain(model, weights);

  double c = 0;
  for (const Vertex& v : graph.vertices()) c += std::min(v.surplus - 0.5, 0.0);
  const double scale = (std::ldexp(1.0, k_bits) - 0.5) / (-c);

  const int v_vars = 6, slack_vars = 2 * k_bits;
  for (std::uint32_t v_mask = 0; v_mask < (1u << v_vars); ++v_mask) {
    std::vector<std::uint8_t> bits(compiled.vars.size(), 0);
    for (int i = 0; i < v_vars; ++i) bits[i] = (v_mask >> i) & 1;

    double min_energy = std::numeric_limits<double>::infinity();
    for (std::uint32_t s_mask = 0; s_mask < (1u << slack_vars); ++s_mask) {
      for (int i = 0; i < slack_vars; ++i) bits[v_vars + i] = (s_mask >> i) & 1;
      min_energy = std::min(min_energy, compiled.model.evaluate(bits));
    }

    const CqmEvaluation eval = evaluate_cqm(model, std::span(bits).first(v_vars));
    const double base = eval.objective +
                        weights.onehot * oracle_onehot(model, bits, compiled.vars);
    if (eval.balancing_violations == 0) {
      CHECK(min_energy <= base + weights.balance * 2 * 0.25 + 1e-9);
    } else {
      double worst = 0;
      for (double load : eval.partition_loads) worst = std::max(worst, load);
      const double scaled = scale * worst;
      CHECK(min_energy >=
            base + weights.balance * (0.25 + scaled + scaled * scaled) - 1e-9);
    }
  }
}

TEST_CASE("objective convention does not change the optima", "[model][property]") {
  // literal objective vs cut-edges objective: identical argmin sets over all
  // feasible one-hot assignments (they differ by the constant (P-1)beta|E|)
  Rng rng(5);
  int compared = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(3));  // N <= 5
    const int P = 2 + static_cast<int>(rng.next_below(2));  // P <= 3
    const PowerGraph graph = generate_random_graph(n, 0.7, rng.next_u64());
    PartitionModel model{graph, P, 1.0, 10.0, 0.5};

    std::set<std::vector<int>> literal_best, cut_best;
    double best_literal = std::numeric_limits<double>::infinity();
    double best_cut = std::numeric_limits<double>::infinity();
    std::vector<int> digits(n, 0);
    while (true) {
      std::vector<std::uint8_t> v(static_cast<std::size_t>(n) * P, 0);
      for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i) * P + static_cast<std::size_t>(digits[i])] = 1;
      const CqmEvaluation eval = evaluate_cqm(model, v);
      if (eval.feasible()) {
        double cut = 0;
        for (const GraphEdge& e : graph.edges())
          if (digits[e.tail] != digits[e.head]) cut += 1;
        double sizes = 0;
        std::vector<int> count(P, 0);
        for (int i = 0; i < n; ++i) ++count[digits[i]];
        for (int p = 0; p < P; ++p) sizes += static_cast<double>(count[p]) * count[p];
        const double cut_objective = model.alpha * sizes + model.beta * cut;

        if (eval.objective < best_literal - 1e-12) {
          best_literal = eval.objective;
          literal_best.clear();
        }
        if (std::abs(eval.objective - best_literal) <= 1e-12) literal_best.insert(digits);
        if (cut_objective < best_cut - 1e-12) {
          best_cut = cut_objective;
          cut_best.clear();
        }
        if (std::abs(cut_objective - best_cut) <= 1e-12) cut_best.insert(digits);
      }
      int i = 0;
      for (; i < n; ++i) {
        if (++digits[i] < P) break;
        digits[i] = 0;
      }
      if (i == n) break;
    }
    if (literal_best.empty()) continue;  // infeasible instance
    ++compared;
    REQUIRE(literal_best == cut_best);
    CHECK(best_literal - best_cut ==
          Catch::Approx((P - 1) * model.beta * static_cast<double>(graph.edge_count())));
  }
  REQUIRE(compared > 0);
}

TEST_CASE("reduced flow equals the flow function when auxiliaries are consistent",
          "[model][property]") {
  const PowerGraph graph = path_graph({0.3, 0.7});
  const int P = 2;
  PartitionModel model{graph, P, 1.0, 10.0, 0.5};
  PenaltyWeights weights{1.0, 1.0, 2.0, 1};
  const CompiledQubo compiled = compile_qubo_sharing(model, weights);
  REQUIRE(compiled.vars.size() == 2 * (2 + 1 + 1) + 3 * 1 * 3);  // 17

  // exhaustive: wherever the gadget penalty vanishes, G equals F exactly
  const std::size_t total_vars = compiled.vars.size();
  std::size_t consistent = 0;
  for (std::uint32_t mask = 0; mask < (1u << total_vars); ++mask) {
    std::vector<std::uint8_t> bits(total_vars);
    for (std::size_t i = 0; i < total_vars; ++i) bits[i] = (mask >> i) & 1;
    if (oracle_aux(model, bits, compiled.vars) != 0.0) continue;
    ++consistent;
    std::vector<std::uint8_t> v(2 * P), f(1 * P);
    for (int n = 0; n < 2; ++n)
      for (int p = 0; p < P; ++p)
        v[static_cast<std::size_t>(n) * P + p] =
            bits[compiled.vars.require(assignment_var(n, p))];
    for (int p = 0; p < P; ++p) f[p] = bits[compiled.vars.require(flow_var(0, 1, p))];
    const double g01 = oracle_reduced_flow(model, bits, compiled.vars, 0, 1);
    REQUIRE(g01 == flow_value(graph, v, f, 0, 1, P));
  }
  REQUIRE(consistent > 0);
}

TEST_CASE("decode reports one-hot defects instead of resolving them", "[model]") {
  PartitionModel model{path_graph({0.2, 0.8, 0.6}), 2, 1.0, 10.0, 0.5};
  PenaltyWeights weights{1.0, 1.0, 0.0, 2};
  const CompiledQubo compiled = compile_qubo_plain(model, weights);

  std::vector<std::uint8_t> bits(compiled.vars.size(), 0);
  bits[compiled.vars.require(assignment_var(0, 1))] = 1;  // vertex 0 -> partition 1
  bits[compiled.vars.require(assignment_var(2, 0))] = 1;  // vertex 2 in both
  bits[compiled.vars.require(assignment_var(2, 1))] = 1;
  bits[compiled.vars.require(slack_var(0, 1))] = 1;  // slack level 1 for partition 1
  bits[compiled.vars.require(slack_var(1, 0))] = 1;  // slack level 2 for partition 0

  const DecodedAssignment decoded = decode_assignment(compiled.vars, bits);
  REQUIRE(decoded.vertex_partition.size() == 3);
  CHECK(decoded.vertex_partition[0] == 1);
  CHECK_FALSE(decoded.vertex_partition[1].has_value());
  CHECK_FALSE(decoded.vertex_partition[2].has_value());
  CHECK(decoded.unassigned == std::vector<std::uint32_t>{1});
  CHECK(decoded.multiply_assigned == std::vector<std::uint32_t>{2});
  CHECK(decoded.slack_levels == std::vector<std::uint64_t>{2, 1});
  CHECK(decoded.v_bits == std::vector<std::uint8_t>{0, 1, 0, 0, 1, 1});
  CHECK_FALSE(decoded.one_hot());
}

TEST_CASE("degenerate partition counts are accepted", "[model]") {
  const PowerGraph graph = path_graph({0.2, 0.8});
  PartitionModel wide{graph, 5, 1.0, 10.0, 0.5};  // P > N
  PenaltyWeights weights{1.0, 1.0, 1.0, 2};
  CHECK(compile_qubo_plain(wide, weights).vars.size() == 5 * (2 + 2));
  PartitionModel single{graph, 1, 1.0, 10.0, 0.5};
  CHECK_NOTHROW(compile_qubo_plain(single, weights));
  CHECK_NOTHROW(compile_qubo_sharing(single, weights));
  CHECK_THROWS_AS((PartitionModel{graph, 0, 1, 10, 0.5}.validate()), ModelError);
}
