#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/partition_model.hpp"
#include "gridpart/solvers.hpp"

namespace gridpart {

struct DecadeRange {
  int min_exp = -3;
  int max_exp = 3;
};

// Two-stage grid search configuration: a per-multiplier logarithmic decade
// range scanned first to fix orders of magnitude, then a linear grid across
// the winning decade of each axis. Every grid point is scored with a short
// annealing run.
struct GridSpec {
  DecadeRange onehot_range;
  DecadeRange balance_range;
  DecadeRange aux_range;
  int points_per_decade = 1;
  int linear_points = 10;
  std::uint64_t reads = 8;    // annealing budget per grid point
  std::uint64_t sweeps = 200;
  std::uint64_t seed = 0;

  void set_range(int min_exp, int max_exp) {
    onehot_range = balance_range = aux_range = {min_exp, max_exp};
  }

  void validate() const {
    for (const DecadeRange& range : {onehot_range, balance_range, aux_range})
      if (range.max_exp < range.min_exp) throw ModelError("empty logarithmic range");
    if (points_per_decade < 1) throw ModelError("points per decade must be at least 1");
    if (linear_points < 1) throw ModelError("linear refinement needs at least 1 point");
    if (reads < 1 || sweeps < 1) throw ModelError("grid budget needs at least 1 read and sweep");
  }
};

struct GridPointResult {
  int stage = 1;
  double onehot = 0;
  double balance = 0;
  double aux = 0;
  double objective = 0;
  int violations = 0;
};

struct TuneOutcome {
  PenaltyWeights best;
  std::vector<GridPointResult> trace;
};

// No grid point satisfied every constraint; carries the least-violating point
// for diagnosis.
class TuningError : public Error {
 public:
  TuningError(const std::string& what, GridPointResult best)
      : Error(what), best_attempt(best) {}
  GridPointResult best_attempt;
};

struct QualityPair {
  double objective = 0;
  int violations = 0;
};

// Compiles the model under the given weights, runs the annealing budget and
// scores the energy-best read by the original objective and the total number
// of violated constraints.
inline QualityPair evaluate_grid_point(const PartitionModel& model,
                                       const PenaltyWeights& weights, bool sharing,
                                       std::uint64_t reads, std::uint64_t sweeps,
                                       std::uint64_t seed) {
  const CompiledQubo compiled =
      sharing ? compile_qubo_sharing(model, weights) : compile_qubo_plain(model, weights);
  AnnealSchedule schedule = default_schedule(compiled.model, reads, seed);
  schedule.sweeps = sweeps;
  const SolverRun run = anneal_qubo(compiled.model, schedule);
  const DecodedAssignment decoded = decode_assignment(compiled.vars, run.best.bits);
  const CqmEvaluation eval = evaluate_cqm(model, decoded.v_bits);
  return {eval.objective, eval.total_violations()};
}

namespace detail {

// Zero-violation points first, then lower objective, ties to the smaller
// multiplier vector.
inline bool grid_point_better(const GridPointResult& a, const GridPointResult& b) {
  if (a.violations != b.violations) return a.violations < b.violations;
  if (a.objective != b.objective) return a.objective < b.objective;
  return std::tie(a.onehot, a.balance, a.aux) < std::tie(b.onehot, b.balance, b.aux);
}

}  // namespace detail

inline TuneOutcome grid_search_two_stage(const PartitionModel& model, int slack_bits,
                                         bool sharing, const GridSpec& spec) {
  model.validate();
  spec.validate();
  const int axes = sharing ? 3 : 2;

  TuneOutcome outcome;
  auto score = [&](int stage, double oh, double bc, double aux) {
    PenaltyWeights weights{oh, bc, sharing ? aux : 0.0, slack_bits};
    const QualityPair quality =
        evaluate_grid_point(model, weights, sharing, spec.reads, spec.sweeps, spec.seed);
    GridPointResult result{stage, oh, bc, sharing ? aux : 0.0, quality.objective,
                           quality.violations};
    outcome.trace.push_back(result);
    return result;
  };

  auto log_axis = [&](const DecadeRange& range) {
    std::vector<double> values;
    const int count = (range.max_exp - range.min_exp) * spec.points_per_decade + 1;
    for (int j = 0; j < count; ++j)
      values.push_back(
          std::pow(10.0, range.min_exp + static_cast<double>(j) / spec.points_per_decade));
    return values;
  };
  const auto oh_log = log_axis(spec.onehot_range);
  const auto bc_log = log_axis(spec.balance_range);
  const auto aux_log = log_axis(spec.aux_range);

  bool have_winner = false;
  GridPointResult winner{};
  auto consider = [&](const GridPointResult& result) {
    if (!have_winner || detail::grid_point_better(result, winner)) {
      winner = result;
      have_winner = true;
    }
  };

  for (double oh : oh_log)
    for (double bc : bc_log) {
      if (axes == 3) {
        for (double aux : aux_log) consider(score(1, oh, bc, aux));
      } else {
        consider(score(1, oh, bc, 0.0));
      }
    }

  // Linear refinement across the winning decade [w, 10w] of each axis; the
  // first grid line of each axis is the stage-one winner itself.
  auto linear_axis = [&](double base) {
    std::vector<double> values;
    for (int j = 0; j < spec.linear_points; ++j) {
      const double t = spec.linear_points == 1
                           ? 0.0
                           : static_cast<double>(j) / (spec.linear_points - 1);
      values.push_back(base * (1.0 + 9.0 * t));
    }
    return values;
  };
  const auto oh_values = linear_axis(winner.onehot);
  const auto bc_values = linear_axis(winner.balance);
  const auto aux_values = axes == 3 ? linear_axis(winner.aux) : std::vector<double>{0.0};

  GridPointResult final_best = winner;
  for (double oh : oh_values)
    for (double bc : bc_values)
      for (double aux : aux_values) {
        const GridPointResult result = score(2, oh, bc, aux);
        if (detail::grid_point_better(result, final_best)) final_best = result;
      }

  if (final_best.violations != 0)
    throw TuningError("no grid point satisfied all constraints; best had " +
                          std::to_string(final_best.violations) + " violation(s) at lambda_oh=" +
                          format_double(final_best.onehot) + ", lambda_bc=" +
                          format_double(final_best.balance),
                      final_best);

  outcome.best = PenaltyWeights{final_best.onehot, final_best.balance, final_best.aux,
                                slack_bits};
  return outcome;
}

// One row per evaluated grid point.
inline void write_tuning_trace_csv(std::ostream& out,
                                   const std::vector<GridPointResult>& trace) {
  out << "stage,lambda_oh,lambda_bc,lambda_aux,objective,violations\n";
  for (const GridPointResult& row : trace)
    out << row.stage << ',' << format_double(row.onehot) << ',' << format_double(row.balance)
        << ',' << format_double(row.aux) << ',' << format_double(row.objective) << ','
        << row.violations << '\n';
}

}  // namespace gridpart
