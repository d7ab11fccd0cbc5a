// Command-line front end: generate or ingest instances, tune penalty
// multipliers, solve a single configuration, or compare solvers across
// partition counts under a shared budget.
//
// Exit codes: 0 full success, 1 configuration error, 2 partial failure
// (failed cells, tuning failure, solver guard).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gridpart/gridpart.hpp"

namespace fs = std::filesystem;
using namespace gridpart;

namespace {

struct CliArgs {
  // instance source
  std::string vertices, links, weight_column;
  int clique_n = 0;
  double clique_mean = 0.45;
  std::vector<double> random_spec;  // N, edge probability

  // model
  double alpha = 1.0, beta = 10.0, threshold = 0.5;
  std::string partitions = "2";
  int slack_bits = 10;
  bool sharing = false;

  // penalties
  std::optional<double> lambda_oh, lambda_bc, lambda_aux;
  bool tune = false;
  GridSpec grid;
  int grid_log_min = -3, grid_log_max = 3;

  // solvers and budgets
  std::vector<std::string> solvers;
  std::optional<double> time_limit;
  std::uint64_t reads = 500;
  std::uint64_t sweeps = 1000;
  std::uint64_t iterations = 1000000;
  std::int64_t tenure = -1;
  int replicas = 8;
  std::uint64_t swap_interval = 10;

  std::uint64_t seed = 0;
  std::string out;
  bool dump_qubo = false;
};

void add_instance_flags(CLI::App* cmd, CliArgs& args) {
  auto* vertices = cmd->add_option("--vertices", args.vertices, "vertices CSV (id,lon,lat[,surplus])");
  auto* links = cmd->add_option("--links", args.links, "links CSV (id,v1,v2[,capacity])");
  vertices->needs(links);
  links->needs(vertices);
  cmd->add_option("--weight-column", args.weight_column,
                  "surplus column name; omit to draw uniform weights from --seed");
  auto* clique = cmd->add_option("--clique-pair", args.clique_n,
                                 "two cliques of size N joined by a single edge");
  auto* random = cmd->add_option("--random", args.random_spec,
                                 "random connected graph: N EDGE_PROBABILITY");
  random->expected(2);
  clique->excludes(random);
  clique->excludes(vertices);
  random->excludes(vertices);
  cmd->add_option("--mean", args.clique_mean, "clique-pair target mean surplus");
}

void add_model_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--alpha", args.alpha, "intra-partition size cost");
  cmd->add_option("--beta", args.beta, "edge cost");
  cmd->add_option("--k", args.threshold, "self-sufficiency threshold");
  cmd->add_option("--K", args.slack_bits, "slack bits per balancing constraint");
  cmd->add_option("--partitions", args.partitions, "partition count: '3', '2..6' or '2,4,5'");
  cmd->add_flag("--sharing", args.sharing, "compile the electricity-sharing model");
}

void add_penalty_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--lambda-oh", args.lambda_oh, "one-hot multiplier");
  cmd->add_option("--lambda-bc", args.lambda_bc, "balancing multiplier");
  cmd->add_option("--lambda-aux", args.lambda_aux, "auxiliary multiplier (sharing)");
  cmd->add_flag("--tune", args.tune, "grid-search the multipliers instead");
  cmd->add_option("--grid-log-min", args.grid_log_min, "log stage: smallest exponent");
  cmd->add_option("--grid-log-max", args.grid_log_max, "log stage: largest exponent");
  cmd->add_option("--grid-points-per-decade", args.grid.points_per_decade, "log stage density");
  cmd->add_option("--grid-linear-points", args.grid.linear_points, "linear stage points");
  cmd->add_option("--tune-reads", args.grid.reads, "annealing reads per grid point");
  cmd->add_option("--tune-sweeps", args.grid.sweeps, "annealing sweeps per grid point");
}

void add_budget_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--solver", args.solvers,
                  "solver id (repeatable): exhaustive-cqm, exhaustive-qubo, sa, tabu, pt");
  cmd->add_option("--time-limit", args.time_limit, "wall-clock budget per cell in seconds");
  cmd->add_option("--reads", args.reads, "annealing reads");
  cmd->add_option("--sweeps", args.sweeps, "sweeps per read / tempering sweeps");
  cmd->add_option("--iterations", args.iterations, "tabu iterations");
  cmd->add_option("--tenure", args.tenure, "tabu tenure (negative: size-derived)");
  cmd->add_option("--replicas", args.replicas, "tempering replicas");
  cmd->add_option("--swap-interval", args.swap_interval, "sweeps between replica swaps");
}

std::vector<int> parse_partitions(const std::string& text) {
  std::vector<int> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (hi < lo) throw ModelError("empty partition range '" + text + "'");
    for (int p = lo; p <= hi; ++p) out.push_back(p);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    if (!item.empty()) out.push_back(std::stoi(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ModelError("no partition counts in '" + text + "'");
  return out;
}

ExperimentConfig to_config(const CliArgs& args) {
  ExperimentConfig config;
  if (!args.vertices.empty()) config.input_files = {{args.vertices, args.links}};
  if (args.clique_n > 0)
    config.clique = CliquePairSpec{args.clique_n, args.clique_mean, args.threshold, args.seed};
  if (args.random_spec.size() == 2)
    config.random_graph = RandomGraphSpec{static_cast<int>(args.random_spec[0]),
                                          args.random_spec[1], args.seed};
  config.weight_column = args.weight_column;
  config.alpha = args.alpha;
  config.beta = args.beta;
  config.threshold = args.threshold;
  config.partition_counts = parse_partitions(args.partitions);
  config.slack_bits = args.slack_bits;
  config.sharing = args.sharing;
  config.tune = args.tune;
  config.grid = args.grid;
  config.grid.set_range(args.grid_log_min, args.grid_log_max);
  if (args.lambda_oh || args.lambda_bc || args.lambda_aux)
    config.lambda = PenaltyWeights{args.lambda_oh.value_or(0.0), args.lambda_bc.value_or(0.0),
                                   args.lambda_aux.value_or(0.0), args.slack_bits};
  for (const std::string& id : args.solvers) {
    SolverSpec spec;
    spec.id = id;
    spec.time_limit_s = args.time_limit;
    spec.reads = args.reads;
    spec.sweeps = args.sweeps;
    spec.iterations = args.iterations;
    spec.tenure = args.tenure;
    spec.replicas = args.replicas;
    spec.swap_interval = args.swap_interval;
    config.solvers.push_back(spec);
  }
  config.out_dir = args.out;
  config.master_seed = args.seed;
  return config;
}

int run_generate(const CliArgs& args) {
  PowerGraph graph;
  if (args.clique_n > 0) {
    graph = generate_clique_pair({args.clique_n, args.clique_mean, args.threshold, args.seed});
  } else if (args.random_spec.size() == 2) {
    graph = generate_random_graph(static_cast<int>(args.random_spec[0]), args.random_spec[1],
                                  args.seed);
  } else {
    throw ModelError("generate needs --clique-pair N or --random N EDGE_PROBABILITY");
  }
  fs::create_directories(args.out);
  std::ofstream vfile(fs::path(args.out) / "vertices.csv");
  std::ofstream lfile(fs::path(args.out) / "links.csv");
  save_network(graph, vfile, lfile);
  std::cout << "wrote " << graph.vertex_count() << " vertices, " << graph.edge_count()
            << " edges to " << args.out << "\n";
  return 0;
}

int run_tune(const CliArgs& args) {
  const ExperimentConfig config = [&] {
    ExperimentConfig c = to_config(args);
    c.tune = true;
    c.solvers = {SolverSpec{"sa"}};  // instance validation only
    return c;
  }();
  config.validate();
  const PowerGraph graph = build_instance(config);

  int exit_code = 0;
  for (int p : config.partition_counts) {
    PartitionModel model{graph, p, args.alpha, args.beta, args.threshold};
    GridSpec grid = args.grid;
    grid.set_range(args.grid_log_min, args.grid_log_max);
    grid.seed = args.seed;
    try {
      const TuneOutcome outcome = grid_search_two_stage(model, args.slack_bits, args.sharing, grid);
      std::cout << "P=" << p << "  lambda_oh=" << format_double(outcome.best.onehot)
                << "  lambda_bc=" << format_double(outcome.best.balance);
      if (args.sharing) std::cout << "  lambda_aux=" << format_double(outcome.best.aux);
      std::cout << "\n";
      if (!args.out.empty()) {
        fs::create_directories(args.out);
        std::ofstream trace(fs::path(args.out) / ("tuning_P" + std::to_string(p) + ".csv"));
        write_tuning_trace_csv(trace, outcome.trace);
        nlohmann::json best{{"lambda_oh", outcome.best.onehot},
                            {"lambda_bc", outcome.best.balance},
                            {"lambda_aux", outcome.best.aux},
                            {"K", args.slack_bits}};
        std::ofstream out(fs::path(args.out) / ("tuned_lambda_P" + std::to_string(p) + ".json"));
        out << best.dump(2) << '\n';
      }
    } catch (const TuningError& e) {
      std::cerr << "P=" << p << "  tuning failed: " << e.what() << "\n";
      exit_code = 2;
    }
  }
  return exit_code;
}

int run_compare(const CliArgs& args, const char* default_solver = nullptr) {
  CliArgs local = args;
  if (local.solvers.empty() && default_solver) local.solvers = {default_solver};
  const ExperimentConfig config = to_config(local);
  config.validate();
  const ExperimentBundle bundle = run_experiment(config);

  bool any_failed = false;
  for (const CellResult& cell : bundle.cells) {
    if (cell.ok) {
      std::cout << "P=" << cell.partitions << "  " << cell.solver_id
                << "  objective=" << format_double(cell.report.objective) << "  violations="
                << cell.report.one_hot_violations + cell.report.balancing_violations
                << "  wall=" << format_double(cell.report.wall_seconds) << "s"
                << (cell.report.truncated ? "  (truncated)" : "") << "\n";
    } else {
      any_failed = true;
      std::cout << "P=" << cell.partitions << "  " << cell.solver_id
                << "  FAILED: " << cell.error << "\n";
    }
  }
  if (!args.out.empty()) std::cout << "reports written to " << args.out << "\n";

  if (args.dump_qubo && !args.out.empty()) {
    const PenaltyWeights weights =
        config.lambda ? *config.lambda
                      : bundle.tuned.count(config.partition_counts.front())
                            ? bundle.tuned.at(config.partition_counts.front())
                            : PenaltyWeights{1, 1, 1, args.slack_bits};
    PartitionModel model{bundle.graph, config.partition_counts.front(), args.alpha, args.beta,
                         args.threshold};
    const CompiledQubo compiled = args.sharing ? compile_qubo_sharing(model, weights)
                                               : compile_qubo_plain(model, weights);
    std::ofstream out(fs::path(args.out) / "qubo.txt");
    compiled.model.serialize(out);
  }
  return any_failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph partitioning of power networks via QUBO compilation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file (sections per subcommand)");

  CliArgs args;

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic instance as CSV tables");
  add_instance_flags(generate, args);
  generate->add_option("--seed", args.seed, "generator seed");
  generate->add_option("--out", args.out, "output directory")->required();
  generate->add_option("--k", args.threshold, "threshold recorded for clique-pair generation");

  CLI::App* tune = app.add_subcommand("tune", "two-stage grid search for the multipliers");
  add_instance_flags(tune, args);
  add_model_flags(tune, args);
  add_penalty_flags(tune, args);
  tune->add_option("--seed", args.seed, "master seed");
  tune->add_option("--out", args.out, "output directory for trace and multipliers");

  CLI::App* solve = app.add_subcommand("solve", "solve one instance with one solver");
  add_instance_flags(solve, args);
  add_model_flags(solve, args);
  add_penalty_flags(solve, args);
  add_budget_flags(solve, args);
  solve->add_option("--seed", args.seed, "master seed");
  solve->add_option("--out", args.out, "output directory");
  solve->add_flag("--dump-qubo", args.dump_qubo, "also write the compiled model as qubo.txt");

  CLI::App* compare = app.add_subcommand("compare", "compare solvers across partition counts");
  add_instance_flags(compare, args);
  add_model_flags(compare, args);
  add_penalty_flags(compare, args);
  add_budget_flags(compare, args);
  compare->add_option("--seed", args.seed, "master seed");
  compare->add_option("--out", args.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return run_generate(args);
    if (tune->parsed()) return run_tune(args);
    if (solve->parsed()) return run_compare(args, "sa");
    return run_compare(args);
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TuningError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
