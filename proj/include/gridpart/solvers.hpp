#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/partition_model.hpp"
#include "gridpart/penalty.hpp"
#include "gridpart/qubo.hpp"
#include "gridpart/rng.hpp"

namespace gridpart {

// Assignment with incrementally maintained flip deltas. field[i] holds the
// energy change of setting bit i, given the other bits; flipping costs
// O(degree of i).
class FlipState {
 public:
  explicit FlipState(const QuadraticModel& model)
      : model_(&model), bits_(model.size(), 0), field_(model.linear()) {
    energy_ = model.offset();
  }

  void reset(std::span<const std::uint8_t> bits) {
    std::copy(bits.begin(), bits.end(), bits_.begin());
    rebuild();
  }

  void reset_random(Rng& rng) {
    for (auto& b : bits_) b = rng.next_bit() ? 1 : 0;
    rebuild();
  }

  double energy() const { return energy_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::size_t size() const { return bits_.size(); }

  double flip_delta(VarIndex i) const { return bits_[i] ? -field_[i] : field_[i]; }

  void flip(VarIndex i) {
    energy_ += flip_delta(i);
    bits_[i] ^= 1;
    const double sign = bits_[i] ? 1.0 : -1.0;
    for (const auto& nb : model_->neighbors(i)) field_[nb.var] += sign * nb.coef;
  }

  const QuadraticModel& model() const { return *model_; }

 private:
  void rebuild() {
    field_ = model_->linear();
    for (const auto& pair : model_->pairs()) {
      if (bits_[pair.j]) field_[pair.i] += pair.coef;
      if (bits_[pair.i]) field_[pair.j] += pair.coef;
    }
    energy_ = model_->evaluate(bits_);
  }

  const QuadraticModel* model_;
  std::vector<std::uint8_t> bits_;
  std::vector<double> field_;
  double energy_ = 0;
};

struct CandidateState {
  std::vector<std::uint8_t> bits;
  double energy = 0;
};

// Chronological chain of strict energy records. Because a longer run of the
// same deterministic trajectory only appends entries, any quality measure
// minimized over the chain is non-increasing in the run budget.
struct RecordChain {
  double best_energy = std::numeric_limits<double>::infinity();
  std::vector<CandidateState> entries;

  void offer(std::span<const std::uint8_t> bits, double energy) {
    if (energy < best_energy) {
      best_energy = energy;
      entries.push_back({std::vector<std::uint8_t>(bits.begin(), bits.end()), energy});
    }
  }
};

// Outcome of one metaheuristic run on a quadratic model.
struct SolverRun {
  CandidateState best;                     // lowest energy seen, energy re-evaluated exactly
  std::vector<CandidateState> improvements;  // global record chain, oldest first
  std::vector<CandidateState> reads;       // per-read best states (annealer only)
  bool truncated = false;
  double wall_seconds = 0;
  std::uint64_t work = 0;  // sweeps or iterations executed
};

struct AnnealSchedule {
  std::uint64_t reads = 100;
  std::uint64_t sweeps = 1000;
  double beta_start = 0.1;
  double beta_end = 10.0;
  std::uint64_t seed = 0;
  std::optional<double> time_limit_s;

  void validate() const {
    if (reads < 1) throw SolverError("reads must be at least 1");
    if (sweeps < 1) throw SolverError("sweeps must be at least 1");
    if (!(beta_start > 0) || !(beta_end >= beta_start))
      throw SolverError("inverse temperatures must satisfy beta_end >= beta_start > 0");
    if (time_limit_s && !(*time_limit_s >= 0)) throw SolverError("negative time limit");
  }
};

// Documented defaults: geometric ladder from 0.1 / mean|coef| up to
// 10 / min nonzero |coef|, 1000 sweeps per read.
inline AnnealSchedule default_schedule(const QuadraticModel& model, std::uint64_t reads,
                                       std::uint64_t seed) {
  AnnealSchedule schedule;
  schedule.reads = reads;
  schedule.seed = seed;
  const double mean = model.mean_abs_coefficient();
  const double min_abs = model.min_abs_coefficient();
  if (mean > 0 && min_abs > 0) {
    schedule.beta_start = 0.1 / mean;
    schedule.beta_end = std::max(schedule.beta_start, 10.0 / min_abs);
  } else {
    schedule.beta_start = schedule.beta_end = 1.0;
  }
  return schedule;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline void metropolis_sweep(FlipState& state, double beta, Rng& rng, RecordChain& chain) {
  const auto n = static_cast<VarIndex>(state.size());
  for (VarIndex i = 0; i < n; ++i) {
    const double delta = state.flip_delta(i);
    if (delta > 0 && rng.next_double() >= std::exp(-beta * delta)) continue;
    state.flip(i);
    chain.offer(state.bits(), state.energy());
  }
}

struct ReadOutcome {
  CandidateState best;               // best state of this read
  std::vector<CandidateState> records;  // read-local record chain
  bool truncated = false;
};

inline ReadOutcome run_one_read(const QuadraticModel& model, const AnnealSchedule& schedule,
                                std::uint64_t read_index, Clock::time_point start) {
  Rng rng = Rng::stream(schedule.seed, read_index);
  FlipState state(model);
  state.reset_random(rng);
  RecordChain local;
  local.offer(state.bits(), state.energy());
  const double ratio = schedule.beta_end / schedule.beta_start;
  ReadOutcome outcome;
  for (std::uint64_t s = 0; s < schedule.sweeps; ++s) {
    if (schedule.time_limit_s && seconds_since(start) > *schedule.time_limit_s) {
      outcome.truncated = true;
      break;
    }
    const double t =
        schedule.sweeps == 1 ? 1.0 : static_cast<double>(s) / static_cast<double>(schedule.sweeps - 1);
    metropolis_sweep(state, schedule.beta_start * std::pow(ratio, t), rng, local);
  }
  outcome.best = local.entries.back();
  outcome.records = std::move(local.entries);
  return outcome;
}

}  // namespace detail

// Simulated annealing: independent reads, each a Metropolis single-bit-flip
// walk over a geometric inverse-temperature ladder. Reads consume
// counter-derived streams of the master seed, so results are bit-identical
// for a given seed regardless of the worker count. With a time limit the
// reads run sequentially and the best found so far is returned, flagged as
// truncated.
inline SolverRun anneal_qubo(const QuadraticModel& model, const AnnealSchedule& schedule,
                             int threads = 1) {
  schedule.validate();
  const auto start = detail::Clock::now();
  SolverRun run;
  if (model.size() == 0) {
    run.best = {{}, model.offset()};
    run.improvements = {run.best};
    run.wall_seconds = detail::seconds_since(start);
    return run;
  }

  std::vector<detail::ReadOutcome> outcomes;
  if (threads > 1 && !schedule.time_limit_s) {
    outcomes.resize(schedule.reads);
    std::vector<std::thread> pool;
    const auto workers = static_cast<std::uint64_t>(threads);
    for (std::uint64_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::uint64_t r = w; r < schedule.reads; r += workers)
          outcomes[r] = detail::run_one_read(model, schedule, r, start);
      });
    }
    for (auto& t : pool) t.join();
  } else {
    for (std::uint64_t r = 0; r < schedule.reads; ++r) {
      outcomes.push_back(detail::run_one_read(model, schedule, r, start));
      ++run.work;
      if (outcomes.back().truncated) {
        run.truncated = true;
        break;
      }
    }
  }

  RecordChain chain;
  for (const auto& outcome : outcomes) {
    for (const auto& record : outcome.records) chain.offer(record.bits, record.energy);
    run.reads.push_back(outcome.best);
  }
  run.improvements = std::move(chain.entries);
  run.best = run.improvements.back();
  run.best.energy = model.evaluate(run.best.bits);
  run.work = schedule.sweeps * run.reads.size();
  run.wall_seconds = detail::seconds_since(start);
  return run;
}

struct TabuParams {
  std::uint64_t iterations = 100000;
  int tenure = 10;
  std::uint64_t seed = 0;
  std::optional<double> time_limit_s;

  void validate() const {
    if (iterations < 1) throw SolverError("iterations must be at least 1");
    if (tenure < 0) throw SolverError("tenure must be non-negative");
    if (time_limit_s && !(*time_limit_s >= 0)) throw SolverError("negative time limit");
  }
};

// Tabu search: steepest single-bit moves with a recency tabu list and
// aspiration (a tabu move is admissible when it would improve the incumbent).
// With tenure 0 this is plain local search and stops in a local minimum.
inline SolverRun tabu_qubo(const QuadraticModel& model, const TabuParams& params) {
  params.validate();
  const auto start = detail::Clock::now();
  SolverRun run;
  if (model.size() == 0) {
    run.best = {{}, model.offset()};
    run.improvements = {run.best};
    run.wall_seconds = detail::seconds_since(start);
    return run;
  }

  Rng rng = Rng::stream(params.seed, 0);
  FlipState state(model);
  state.reset_random(rng);
  RecordChain chain;
  chain.offer(state.bits(), state.energy());

  const auto n = static_cast<VarIndex>(model.size());
  std::vector<std::uint64_t> tabu_until(n, 0);
  for (std::uint64_t iter = 1; iter <= params.iterations; ++iter) {
    if (params.time_limit_s && detail::seconds_since(start) > *params.time_limit_s) {
      run.truncated = true;
      break;
    }
    VarIndex best_move = n;
    double best_delta = std::numeric_limits<double>::infinity();
    for (VarIndex i = 0; i < n; ++i) {
      const double delta = state.flip_delta(i);
      const bool tabu = tabu_until[i] >= iter;
      if (tabu && !(state.energy() + delta < chain.best_energy)) continue;
      if (delta < best_delta) {
        best_delta = delta;
        best_move = i;
      }
    }
    if (best_move == n) {
      // everything tabu and nothing aspires; free the earliest expiring move
      best_move = static_cast<VarIndex>(
          std::min_element(tabu_until.begin(), tabu_until.end()) - tabu_until.begin());
      best_delta = state.flip_delta(best_move);
    }
    if (params.tenure == 0 && best_delta >= 0) break;  // local minimum
    state.flip(best_move);
    tabu_until[best_move] = iter + static_cast<std::uint64_t>(params.tenure);
    chain.offer(state.bits(), state.energy());
    ++run.work;
  }

  run.improvements = std::move(chain.entries);
  run.best = run.improvements.back();
  run.best.energy = model.evaluate(run.best.bits);
  run.wall_seconds = detail::seconds_since(start);
  return run;
}

struct PtParams {
  std::vector<double> betas;  // one inverse temperature per replica, strictly increasing
  std::uint64_t sweeps = 1000;
  std::uint64_t swap_interval = 10;
  std::uint64_t seed = 0;
  std::optional<double> time_limit_s;

  void validate() const {
    if (betas.size() < 2) throw SolverError("parallel tempering needs at least 2 replicas");
    for (std::size_t i = 0; i < betas.size(); ++i) {
      if (!(betas[i] > 0)) throw SolverError("inverse temperatures must be positive");
      if (i > 0 && !(betas[i] > betas[i - 1]))
        throw SolverError("inverse-temperature ladder must be strictly increasing");
    }
    if (sweeps < 1) throw SolverError("sweeps must be at least 1");
    if (swap_interval < 1) throw SolverError("swap interval must be at least 1");
    if (time_limit_s && !(*time_limit_s >= 0)) throw SolverError("negative time limit");
  }
};

inline std::vector<double> geometric_ladder(double beta_min, double beta_max, int replicas) {
  if (replicas < 2) throw SolverError("ladder needs at least 2 rungs");
  if (!(beta_min > 0) || !(beta_max > beta_min))
    throw SolverError("ladder requires 0 < beta_min < beta_max");
  std::vector<double> betas(replicas);
  for (int r = 0; r < replicas; ++r)
    betas[r] = beta_min * std::pow(beta_max / beta_min, static_cast<double>(r) / (replicas - 1));
  return betas;
}

// Standard replica-exchange acceptance min(1, exp(dbeta * dE)).
inline double replica_swap_probability(double beta_a, double beta_b, double energy_a,
                                       double energy_b) {
  return std::min(1.0, std::exp((beta_a - beta_b) * (energy_a - energy_b)));
}

// Parallel tempering: replicas sweep Metropolis at fixed temperatures and
// adjacent replicas exchange configurations every swap_interval sweeps.
// Returns the best state observed by any replica.
inline SolverRun temper_qubo(const QuadraticModel& model, const PtParams& params) {
  params.validate();
  const auto start = detail::Clock::now();
  SolverRun run;
  if (model.size() == 0) {
    run.best = {{}, model.offset()};
    run.improvements = {run.best};
    run.wall_seconds = detail::seconds_since(start);
    return run;
  }

  const std::size_t replicas = params.betas.size();
  std::vector<FlipState> states;
  std::vector<Rng> rngs;
  states.reserve(replicas);
  RecordChain chain;
  for (std::size_t r = 0; r < replicas; ++r) {
    rngs.push_back(Rng::stream(params.seed, r));
    states.emplace_back(model);
    states.back().reset_random(rngs.back());
    chain.offer(states.back().bits(), states.back().energy());
  }
  Rng swap_rng = Rng::stream(params.seed, replicas);

  for (std::uint64_t s = 1; s <= params.sweeps; ++s) {
    if (params.time_limit_s && detail::seconds_since(start) > *params.time_limit_s) {
      run.truncated = true;
      break;
    }
    for (std::size_t r = 0; r < replicas; ++r)
      detail::metropolis_sweep(states[r], params.betas[r], rngs[r], chain);
    ++run.work;
    if (s % params.swap_interval == 0) {
      for (std::size_t r = 0; r + 1 < replicas; ++r) {
        const double accept = replica_swap_probability(params.betas[r], params.betas[r + 1],
                                                       states[r].energy(),
                                                       states[r + 1].energy());
        if (swap_rng.next_double() < accept) std::swap(states[r], states[r + 1]);
      }
    }
  }

  run.improvements = std::move(chain.entries);
  run.best = run.improvements.back();
  run.best.energy = model.evaluate(run.best.bits);
  run.wall_seconds = detail::seconds_since(start);
  return run;
}

inline constexpr double kExhaustiveGuard = 1e7;

// Enumerates all P^N one-hot assignments and returns the feasible one
// minimizing the original objective; when none is feasible the report carries
// the least-violating assignment with feasible = false.
inline SolveReport solve_exhaustive_cqm(const PartitionModel& model) {
  model.validate();
  const auto start = detail::Clock::now();
  const auto n_count = static_cast<int>(model.graph.vertex_count());
  const int p_count = model.partition_count;
  const double space = std::pow(static_cast<double>(p_count), n_count);
  if (space > kExhaustiveGuard)
    throw SolverError("exhaustive CQM refused: P^N = " + format_double(space) +
                      " exceeds the guard of " + format_double(kExhaustiveGuard));

  std::vector<std::vector<int>> earlier(n_count);  // neighbors with smaller index
  for (const GraphEdge& e : model.graph.edges())
    earlier[e.head].push_back(static_cast<int>(e.tail));

  std::vector<int> digits(n_count, -1), best_digits;
  std::vector<double> sizes(p_count, 0), loads(p_count, 0);
  std::vector<double> intra(p_count, 0);
  double size_sq = 0, intra_total = 0;
  int violating = 0;
  double best_feasible = std::numeric_limits<double>::infinity();
  double best_violations = std::numeric_limits<double>::infinity();
  double best_infeasible_obj = std::numeric_limits<double>::infinity();
  std::vector<int> best_infeasible_digits;
  const double edge_const =
      model.beta * static_cast<double>(model.graph.edge_count()) * p_count;

  auto descend = [&](auto&& self, int n) -> void {
    if (n == n_count) {
      const double objective = model.alpha * size_sq + edge_const - model.beta * intra_total;
      if (violating == 0) {
        if (objective < best_feasible) {
          best_feasible = objective;
          best_digits = digits;
        }
      } else if (violating < best_violations ||
                 (violating == best_violations && objective < best_infeasible_obj)) {
        best_violations = violating;
        best_infeasible_obj = objective;
        best_infeasible_digits = digits;
      }
      return;
    }
    const double load_delta =
        model.graph.vertex(static_cast<std::uint32_t>(n)).surplus - model.threshold;
    for (int p = 0; p < p_count; ++p) {
      digits[n] = p;
      size_sq += 2 * sizes[p] + 1;
      sizes[p] += 1;
      const bool was_violating = loads[p] > 0;
      loads[p] += load_delta;
      violating += static_cast<int>(loads[p] > 0) - static_cast<int>(was_violating);
      double gained = 0;
      for (int m : earlier[n])
        if (digits[m] == p) gained += 1;
      intra[p] += gained;
      intra_total += gained;

      self(self, n + 1);

      intra_total -= gained;
      intra[p] -= gained;
      violating += static_cast<int>(loads[p] - load_delta > 0) - static_cast<int>(loads[p] > 0);
      loads[p] -= load_delta;
      sizes[p] -= 1;
      size_sq -= 2 * sizes[p] + 1;
      digits[n] = -1;
    }
  };
  descend(descend, 0);

  const bool feasible = std::isfinite(best_feasible);
  const auto& winner = feasible ? best_digits : best_infeasible_digits;
  std::vector<std::uint8_t> v(static_cast<std::size_t>(n_count) * p_count, 0);
  for (int n = 0; n < n_count; ++n) v[static_cast<std::size_t>(n) * p_count + winner[n]] = 1;

  const CqmEvaluation eval = evaluate_cqm(model, v);
  SolveReport report;
  report.assignment = std::move(v);
  report.objective = eval.objective;
  report.one_hot_violations = eval.one_hot_violations;
  report.balancing_violations = eval.balancing_violations;
  report.partition_loads = eval.partition_loads;
  report.solver_id = "exhaustive-cqm";
  report.feasible = feasible;
  report.wall_seconds = detail::seconds_since(start);
  return report;
}

namespace detail {

// Gray-code walk over the free variables; with closed-form slack the slack
// bits never enter the walk and each balancing block contributes
// lambda * ((r - z*)^2 - r^2) relative to the all-zero-slack energy.
struct ExhaustiveBest {
  std::vector<std::uint8_t> bits;
  double energy = std::numeric_limits<double>::infinity();
};

inline ExhaustiveBest exhaustive_qubo_walk(const CompiledQubo& compiled, bool closed_form) {
  const QuadraticModel& model = compiled.model;
  const std::size_t total_vars = model.size();
  std::vector<std::uint8_t> is_slack(total_vars, 0);
  if (closed_form)
    for (const SlackBlock& block : compiled.slack_blocks)
      for (VarIndex x : block.slack_vars) is_slack[x] = 1;

  std::vector<VarIndex> free_vars;
  for (VarIndex i = 0; i < total_vars; ++i)
    if (!is_slack[i]) free_vars.push_back(i);
  const std::size_t free_count = free_vars.size();
  if (free_count > 60 || std::ldexp(1.0, static_cast<int>(free_count)) > kExhaustiveGuard)
    throw SolverError("exhaustive QUBO refused: 2^" + std::to_string(free_count) +
                      " assignments exceed the guard of " + format_double(kExhaustiveGuard));

  // residual bookkeeping per block for the closed form
  const std::size_t blocks = closed_form ? compiled.slack_blocks.size() : 0;
  std::vector<double> residual(blocks), correction(blocks);
  std::vector<std::vector<std::pair<std::size_t, double>>> var_blocks(total_vars);
  auto block_correction = [&](std::size_t b, double r) {
    const SlackBlock& block = compiled.slack_blocks[b];
    double level = std::nearbyint(r);
    if (level < 0) level = 0;
    const auto max_level = static_cast<double>(block.max_level);
    if (level > max_level) level = max_level;
    const double rest = r - level;
    return block.lambda * (rest * rest - r * r);
  };
  double correction_total = 0;
  if (closed_form) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const SlackBlock& block = compiled.slack_blocks[b];
      residual[b] = block.constant;
      for (const LinearTerm& t : block.residual_terms) var_blocks[t.var].push_back({b, t.coef});
      correction[b] = block_correction(b, residual[b]);
      correction_total += correction[b];
    }
  }

  FlipState state(model);  // starts all-zero
  ExhaustiveBest best;
  best.energy = state.energy() + correction_total;
  best.bits = state.bits();

  const std::uint64_t steps = std::uint64_t{1} << free_count;
  for (std::uint64_t t = 1; t < steps; ++t) {
    const VarIndex flipped = free_vars[static_cast<std::size_t>(std::countr_zero(t))];
    state.flip(flipped);
    const double sign = state.bits()[flipped] ? 1.0 : -1.0;
    for (const auto& [b, coef] : var_blocks[flipped]) {
      residual[b] += sign * coef;
      const double updated = block_correction(b, residual[b]);
      correction_total += updated - correction[b];
      correction[b] = updated;
    }
    const double energy = state.energy() + correction_total;
    if (energy < best.energy) {
      best.energy = energy;
      best.bits = state.bits();
    }
  }

  if (closed_form) {
    // materialize the optimal slack levels of the winning assignment
    for (const SlackBlock& block : compiled.slack_blocks) {
      double r = block.constant;
      for (const LinearTerm& t : block.residual_terms)
        r += t.coef * static_cast<double>(best.bits[t.var]);
      double level = std::nearbyint(r);
      if (level < 0) level = 0;
      if (level > static_cast<double>(block.max_level))
        level = static_cast<double>(block.max_level);
      auto bits = static_cast<std::uint64_t>(level);
      for (std::size_t a = 0; a < block.slack_vars.size(); ++a)
        best.bits[block.slack_vars[a]] = static_cast<std::uint8_t>((bits >> a) & 1);
    }
    best.energy = model.evaluate(best.bits);
  }
  return best;
}

}  // namespace detail

// Global minimizer of the compiled QUBO by exhaustive enumeration. With the
// closed form enabled only the non-slack variables are enumerated and each
// partition's slack block is minimized analytically, which is optimal because
// the blocks share no variables.
inline SolveReport solve_exhaustive_qubo(const CompiledQubo& compiled,
                                         const PartitionModel& model, bool closed_form_slack) {
  const auto start = detail::Clock::now();
  detail::ExhaustiveBest best = detail::exhaustive_qubo_walk(compiled, closed_form_slack);
  SolveReport report = make_report(model, compiled.vars, std::move(best.bits),
                                   detail::seconds_since(start), "exhaustive-qubo", false);
  return report;
}

struct PartitionSolve {
  SolveReport report;
  SolverRun run;
};

inline PartitionSolve simulated_annealing(const CompiledQubo& compiled,
                                          const PartitionModel& model,
                                          const AnnealSchedule& schedule, int threads = 1) {
  SolverRun run = anneal_qubo(compiled.model, schedule, threads);
  SolveReport report = make_report(model, compiled.vars, run.best.bits, run.wall_seconds, "sa",
                                   run.truncated);
  return {std::move(report), std::move(run)};
}

inline PartitionSolve tabu_search(const CompiledQubo& compiled, const PartitionModel& model,
                                  const TabuParams& params) {
  SolverRun run = tabu_qubo(compiled.model, params);
  SolveReport report = make_report(model, compiled.vars, run.best.bits, run.wall_seconds,
                                   "tabu", run.truncated);
  return {std::move(report), std::move(run)};
}

inline PartitionSolve parallel_tempering(const CompiledQubo& compiled,
                                         const PartitionModel& model, const PtParams& params) {
  SolverRun run = temper_qubo(compiled.model, params);
  SolveReport report =
      make_report(model, compiled.vars, run.best.bits, run.wall_seconds, "pt", run.truncated);
  return {std::move(report), std::move(run)};
}

}  // namespace gridpart
