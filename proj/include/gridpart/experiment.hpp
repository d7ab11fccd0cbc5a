#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridpart/errors.hpp"
#include "gridpart/partition_model.hpp"
#include "gridpart/power_graph.hpp"
#include "gridpart/solvers.hpp"
#include "gridpart/tuner.hpp"

namespace gridpart {

struct RandomGraphSpec {
  int n = 5;
  double edge_probability = 0.5;
  std::uint64_t seed = 0;
};

// One solver column of the comparison table. Budgets are either iteration
// counts or a wall-clock limit; with a time limit the solver stops between
// sweeps and reports the incumbent.
struct SolverSpec {
  std::string id;  // exhaustive-cqm | exhaustive-qubo | sa | tabu | pt
  std::optional<double> time_limit_s;
  std::uint64_t reads = 500;
  std::uint64_t sweeps = 1000;
  std::uint64_t iterations = 1000000;
  std::int64_t tenure = -1;  // negative: size-derived default
  int replicas = 8;
  std::uint64_t swap_interval = 10;
  std::optional<double> beta_start, beta_end;  // override the coefficient-derived ladder
  bool closed_form_slack = true;               // exhaustive-qubo only

  void validate() const {
    static const char* known[] = {"exhaustive-cqm", "exhaustive-qubo", "sa", "tabu", "pt"};
    bool ok = false;
    for (const char* k : known) ok = ok || id == k;
    if (!ok) throw ModelError("unknown solver id '" + id + "'");
    if (time_limit_s && !(*time_limit_s > 0)) throw ModelError("time limit must be positive");
  }
};

struct ExperimentConfig {
  // instance source: exactly one of the three
  std::optional<std::pair<std::string, std::string>> input_files;  // vertices, links
  std::optional<CliquePairSpec> clique;
  std::optional<RandomGraphSpec> random_graph;
  std::string weight_column;  // for files; empty = uniform weights from master seed

  double alpha = 1.0;
  double beta = 10.0;
  double threshold = 0.5;
  std::vector<int> partition_counts{2};
  int slack_bits = 10;
  bool sharing = false;

  std::optional<PenaltyWeights> lambda;  // fixed multipliers...
  bool tune = false;                     // ...or grid-searched per P
  GridSpec grid;

  std::vector<SolverSpec> solvers;
  std::string out_dir;
  std::uint64_t master_seed = 0;

  void validate() const {
    const int sources = (input_files ? 1 : 0) + (clique ? 1 : 0) + (random_graph ? 1 : 0);
    if (sources != 1)
      throw ModelError("exactly one instance source (files, clique pair or random graph) "
                       "must be given");
    if (partition_counts.empty()) throw ModelError("at least one partition count required");
    for (int p : partition_counts)
      if (p < 1) throw ModelError("partition counts must be at least 1");
    if (solvers.empty()) throw ModelError("at least one solver required");
    for (const SolverSpec& s : solvers) s.validate();
    if (!tune && !lambda)
      throw ModelError("penalty weights required: pass multipliers or enable tuning");
    if (slack_bits < 1 || slack_bits > kMaxSlackBits)
      throw ModelError("slack bit count must be in 1.." + std::to_string(kMaxSlackBits));
  }
};

struct CellResult {
  int partitions = 0;
  std::string solver_id;
  bool ok = false;
  std::string error;
  SolveReport report;
  std::vector<std::optional<std::int32_t>> vertex_partition;
};

struct ExperimentBundle {
  PowerGraph graph;
  std::vector<CellResult> cells;
  std::map<int, PenaltyWeights> tuned;
  std::map<int, std::vector<GridPointResult>> tuning_traces;
  nlohmann::json config_echo;
};

inline PowerGraph build_instance(const ExperimentConfig& config) {
  if (config.input_files) {
    const WeightPolicy policy = config.weight_column.empty()
                                    ? WeightPolicy::uniform(config.master_seed)
                                    : WeightPolicy::column(config.weight_column);
    return load_network(config.input_files->first, config.input_files->second, policy);
  }
  if (config.clique) return generate_clique_pair(*config.clique);
  return generate_random_graph(config.random_graph->n, config.random_graph->edge_probability,
                               config.random_graph->seed);
}

namespace detail {

inline std::uint64_t cell_seed(std::uint64_t master, int partitions, std::size_t solver_idx) {
  return Rng::stream(master, (static_cast<std::uint64_t>(partitions) << 32) | solver_idx)
      .next_u64();
}

inline std::uint64_t tuning_seed(std::uint64_t master, int partitions) {
  return Rng::stream(master ^ 0x74756E65ULL, static_cast<std::uint64_t>(partitions)).next_u64();
}

// Picks the reported solution from a metaheuristic's record chain by the
// quality pair (violations, objective); the chain only grows with longer
// budgets, so reported quality is monotone across budgets for a shared seed.
inline SolveReport report_from_chain(const CompiledQubo& compiled, const PartitionModel& model,
                                     const SolverRun& run, const std::string& solver_id) {
  std::size_t best_idx = 0;
  int best_violations = 0;
  double best_objective = 0;
  bool have = false;
  for (std::size_t idx = 0; idx < run.improvements.size(); ++idx) {
    const CandidateState& cand = run.improvements[idx];
    const DecodedAssignment decoded = decode_assignment(compiled.vars, cand.bits);
    const CqmEvaluation eval = evaluate_cqm(model, decoded.v_bits);
    const int violations = eval.total_violations();
    if (!have || violations < best_violations ||
        (violations == best_violations && eval.objective < best_objective)) {
      have = true;
      best_idx = idx;
      best_violations = violations;
      best_objective = eval.objective;
    }
  }
  return make_report(model, compiled.vars, run.improvements[best_idx].bits, run.wall_seconds,
                     solver_id, run.truncated);
}

inline CellResult run_cell(const CompiledQubo* compiled, const PartitionModel& model,
                           const SolverSpec& spec, std::uint64_t seed) {
  CellResult cell;
  cell.partitions = model.partition_count;
  cell.solver_id = spec.id;

  SolveReport report;
  if (spec.id == "exhaustive-cqm") {
    report = solve_exhaustive_cqm(model);
  } else {
    if (!compiled) throw ModelError("no compiled model available");
    if (spec.id == "exhaustive-qubo") {
      report = solve_exhaustive_qubo(*compiled, model, spec.closed_form_slack);
    } else {
      AnnealSchedule base = default_schedule(compiled->model, spec.reads, seed);
      if (spec.beta_start) base.beta_start = *spec.beta_start;
      if (spec.beta_end) base.beta_end = std::max(base.beta_start, *spec.beta_end);
      if (spec.id == "sa") {
        base.sweeps = spec.sweeps;
        base.time_limit_s = spec.time_limit_s;
        const SolverRun run = anneal_qubo(compiled->model, base);
        report = report_from_chain(*compiled, model, run, "sa");
      } else if (spec.id == "tabu") {
        TabuParams params;
        params.iterations = spec.iterations;
        params.tenure = spec.tenure >= 0
                            ? static_cast<int>(spec.tenure)
                            : static_cast<int>(10 + compiled->model.size() / 10);
        params.seed = seed;
        params.time_limit_s = spec.time_limit_s;
        const SolverRun run = tabu_qubo(compiled->model, params);
        report = report_from_chain(*compiled, model, run, "tabu");
      } else {
        PtParams params;
        params.betas = geometric_ladder(base.beta_start,
                                        std::max(base.beta_end, base.beta_start * 1.0000001),
                                        spec.replicas);
        params.sweeps = spec.sweeps;
        params.swap_interval = spec.swap_interval;
        params.seed = seed;
        params.time_limit_s = spec.time_limit_s;
        const SolverRun run = temper_qubo(compiled->model, params);
        report = report_from_chain(*compiled, model, run, "pt");
      }
    }
  }

  // vertex -> partition map of the decoded solution
  const auto n_count = model.graph.vertex_count();
  const auto p_count = static_cast<std::size_t>(model.partition_count);
  std::span<const std::uint8_t> v_bits;
  DecodedAssignment decoded;
  if (report.assignment.size() == n_count * p_count) {
    v_bits = report.assignment;
  } else {
    decoded = decode_assignment(compiled->vars, report.assignment);
    v_bits = decoded.v_bits;
  }
  cell.vertex_partition.assign(n_count, std::nullopt);
  for (std::size_t n = 0; n < n_count; ++n) {
    int count = 0;
    std::int32_t where = -1;
    for (std::size_t p = 0; p < p_count; ++p)
      if (v_bits[n * p_count + p]) {
        ++count;
        where = static_cast<std::int32_t>(p);
      }
    if (count == 1) cell.vertex_partition[n] = where;
  }

  cell.report = std::move(report);
  cell.ok = true;
  return cell;
}

}  // namespace detail

// Solution export: vertex -> partition plus the quality numbers. Wall times
// live in results.csv and metadata.json so these files are byte-stable for a
// fixed seed.
inline nlohmann::json solution_to_json(const PowerGraph& graph, const CellResult& cell,
                                       const nlohmann::json& config_echo) {
  nlohmann::json assignments;
  for (std::size_t n = 0; n < graph.vertex_count(); ++n) {
    const auto& slot = cell.vertex_partition[n];
    if (slot)
      assignments[graph.vertex(static_cast<std::uint32_t>(n)).id] = *slot;
    else
      assignments[graph.vertex(static_cast<std::uint32_t>(n)).id] = nullptr;
  }
  nlohmann::json j;
  j["assignments"] = std::move(assignments);
  j["objective"] = cell.report.objective;
  j["violations"] = {{"one_hot", cell.report.one_hot_violations},
                     {"balancing", cell.report.balancing_violations}};
  j["partition_loads"] = cell.report.partition_loads;
  j["solver"] = cell.report.solver_id;
  j["partitions"] = cell.partitions;
  j["feasible"] = cell.report.feasible;
  j["truncated"] = cell.report.truncated;
  j["config"] = config_echo;
  return j;
}

inline void write_results_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "P,solver,objective,violations,wall_time_s,status\n";
  for (const CellResult& cell : cells) {
    out << cell.partitions << ',' << cell.solver_id << ',';
    if (cell.ok)
      out << format_double(cell.report.objective) << ','
          << (cell.report.one_hot_violations + cell.report.balancing_violations);
    else
      out << ',';
    out << ',' << format_double(cell.report.wall_seconds) << ','
        << (cell.ok ? "ok" : "failed") << '\n';
  }
}

inline void write_plot_csv(std::ostream& out, std::vector<CellResult> cells) {
  std::stable_sort(cells.begin(), cells.end(),
                   [](const CellResult& a, const CellResult& b) {
                     return a.partitions < b.partitions;
                   });
  out << "P,solver,objective\n";
  for (const CellResult& cell : cells)
    if (cell.ok)
      out << cell.partitions << ',' << cell.solver_id << ','
          << format_double(cell.report.objective) << '\n';
}

// Rows are partition counts, columns are solvers, cells the original
// objective of the reported solution.
inline void write_summary_table(std::ostream& out, const std::vector<CellResult>& cells) {
  std::vector<int> partitions;
  std::vector<std::string> solvers;
  for (const CellResult& cell : cells) {
    if (std::find(partitions.begin(), partitions.end(), cell.partitions) == partitions.end())
      partitions.push_back(cell.partitions);
    if (std::find(solvers.begin(), solvers.end(), cell.solver_id) == solvers.end())
      solvers.push_back(cell.solver_id);
  }
  std::sort(partitions.begin(), partitions.end());

  auto cell_text = [&](int p, const std::string& solver) -> std::string {
    for (const CellResult& cell : cells)
      if (cell.partitions == p && cell.solver_id == solver)
        return cell.ok ? format_double(cell.report.objective) : std::string("failed");
    return "-";
  };

  std::vector<std::size_t> widths{1};  // "P"
  for (const std::string& s : solvers) widths.push_back(s.size());
  for (std::size_t c = 0; c < solvers.size(); ++c)
    for (int p : partitions)
      widths[c + 1] = std::max(widths[c + 1], cell_text(p, solvers[c]).size());
  for (int p : partitions) widths[0] = std::max(widths[0], std::to_string(p).size());

  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  out << pad("P", widths[0]);
  for (std::size_t c = 0; c < solvers.size(); ++c) out << "  " << pad(solvers[c], widths[c + 1]);
  out << '\n';
  for (int p : partitions) {
    out << pad(std::to_string(p), widths[0]);
    for (std::size_t c = 0; c < solvers.size(); ++c)
      out << "  " << pad(cell_text(p, solvers[c]), widths[c + 1]);
    out << '\n';
  }
}

inline nlohmann::json config_echo_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["alpha"] = config.alpha;
  j["beta"] = config.beta;
  j["k"] = config.threshold;
  j["K"] = config.slack_bits;
  j["seed"] = config.master_seed;
  j["sharing"] = config.sharing;
  j["tune"] = config.tune;
  if (config.lambda) {
    j["lambda_oh"] = config.lambda->onehot;
    j["lambda_bc"] = config.lambda->balance;
    if (config.sharing) j["lambda_aux"] = config.lambda->aux;
  }
  return j;
}

inline void emit_report(const ExperimentBundle& bundle, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "results.csv");
    write_results_csv(out, bundle.cells);
  }
  {
    std::ofstream out(fs::path(out_dir) / "plot.csv");
    write_plot_csv(out, bundle.cells);
  }
  {
    std::ofstream out(fs::path(out_dir) / "summary.txt");
    write_summary_table(out, bundle.cells);
  }
  fs::create_directories(fs::path(out_dir) / "solutions");
  for (const CellResult& cell : bundle.cells) {
    if (!cell.ok) continue;
    std::ofstream out(fs::path(out_dir) / "solutions" /
                      ("P" + std::to_string(cell.partitions) + "_" + cell.solver_id + ".json"));
    out << solution_to_json(bundle.graph, cell, bundle.config_echo).dump(2) << '\n';
  }
  for (const auto& [p, trace] : bundle.tuning_traces) {
    std::ofstream out(fs::path(out_dir) / ("tuning_P" + std::to_string(p) + ".csv"));
    write_tuning_trace_csv(out, trace);
  }
}

// Runs the full comparison grid: for every partition count, tune or take the
// fixed multipliers, compile once, run every solver, and validate each
// decoded solution against the constrained model. Failed cells are recorded
// and the run continues.
inline ExperimentBundle run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentBundle bundle;
  bundle.graph = build_instance(config);
  bundle.config_echo = config_echo_json(config);

  for (int p : config.partition_counts) {
    PartitionModel model{bundle.graph, p, config.alpha, config.beta, config.threshold};

    PenaltyWeights weights;
    std::string setup_error;
    const CompiledQubo* compiled_ptr = nullptr;
    CompiledQubo compiled;
    try {
      if (config.tune) {
        GridSpec grid = config.grid;
        grid.seed = detail::tuning_seed(config.master_seed, p);
        TuneOutcome tuned = grid_search_two_stage(model, config.slack_bits, config.sharing, grid);
        weights = tuned.best;
        bundle.tuned[p] = weights;
        bundle.tuning_traces[p] = std::move(tuned.trace);
      } else {
        weights = *config.lambda;
        weights.slack_bits = config.slack_bits;
      }
      compiled = config.sharing ? compile_qubo_sharing(model, weights)
                                : compile_qubo_plain(model, weights);
      compiled_ptr = &compiled;
    } catch (const Error& e) {
      setup_error = e.what();
    }

    for (std::size_t s = 0; s < config.solvers.size(); ++s) {
      const SolverSpec& spec = config.solvers[s];
      CellResult cell;
      cell.partitions = p;
      cell.solver_id = spec.id;
      if (!setup_error.empty() && spec.id != "exhaustive-cqm") {
        cell.error = setup_error;
      } else {
        try {
          cell = detail::run_cell(compiled_ptr, model, spec,
                                  detail::cell_seed(config.master_seed, p, s));
        } catch (const Error& e) {
          cell.ok = false;
          cell.error = e.what();
        }
      }
      bundle.cells.push_back(std::move(cell));
    }
  }

  if (!config.out_dir.empty()) {
    emit_report(bundle, config.out_dir);
    // timestamps and timings go here, never into the deterministic files
    nlohmann::json meta;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%FT%TZ", std::gmtime(&now));
    meta["timestamp"] = stamp;
    meta["config"] = bundle.config_echo;
    nlohmann::json cells = nlohmann::json::array();
    for (const CellResult& cell : bundle.cells)
      cells.push_back({{"P", cell.partitions},
                       {"solver", cell.solver_id},
                       {"status", cell.ok ? "ok" : "failed"},
                       {"wall_time_s", cell.report.wall_seconds},
                       {"error", cell.error}});
    meta["cells"] = std::move(cells);
    if (!bundle.tuned.empty()) {
      nlohmann::json tuned;
      for (const auto& [pp, w] : bundle.tuned)
        tuned[std::to_string(pp)] = {{"lambda_oh", w.onehot},
                                     {"lambda_bc", w.balance},
                                     {"lambda_aux", w.aux},
                                     {"K", w.slack_bits}};
      std::ofstream out(std::filesystem::path(config.out_dir) / "tuned_lambda.json");
      out << tuned.dump(2) << '\n';
    }
    std::ofstream out(std::filesystem::path(config.out_dir) / "metadata.json");
    out << meta.dump(2) << '\n';
  }
  return bundle;
}

}  // namespace gridpart
