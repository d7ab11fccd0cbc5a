#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gridpart/errors.hpp"
#include "gridpart/format.hpp"
#include "gridpart/rng.hpp"

namespace gridpart {

struct Vertex {
  std::string id;
  double surplus = 0.0;
  std::optional<std::array<double, 2>> position;  // lon, lat
};

struct GraphEdge {
  std::uint32_t tail = 0, head = 0;  // tail < head, indices into vertices
  double weight = 1.0;               // transfer weight w_nm
};

// Undirected power-network instance G = (V, E). Vertices carry the surplus
// w_n; edges carry the transfer weight w_nm. Immutable after construction and
// safe to share across threads.
class PowerGraph {
 public:
  PowerGraph() = default;

  PowerGraph(std::vector<Vertex> vertices, std::vector<GraphEdge> edges)
      : vertices_(std::move(vertices)), edges_(std::move(edges)) {
    for (std::uint32_t i = 0; i < vertices_.size(); ++i) {
      const Vertex& v = vertices_[i];
      if (v.id.empty()) throw SchemaError("vertex " + std::to_string(i) + " has an empty id");
      if (!std::isfinite(v.surplus))
        throw SchemaError("vertex '" + v.id + "' has a non-finite surplus");
      if (!index_.emplace(v.id, i).second)
        throw SchemaError("duplicate vertex id '" + v.id + "'");
    }
    std::unordered_set<std::uint64_t> seen;
    for (GraphEdge& e : edges_) {
      if (e.tail >= vertices_.size() || e.head >= vertices_.size())
        throw ReferenceError("edge endpoint out of range");
      if (e.tail == e.head)
        throw SchemaError("self-loop on vertex '" + vertices_[e.tail].id + "'");
      if (e.tail > e.head) std::swap(e.tail, e.head);
      if (!(e.weight >= 0))
        throw SchemaError("negative transfer weight on edge {" + vertices_[e.tail].id + "," +
                          vertices_[e.head].id + "}");
      const std::uint64_t key = (static_cast<std::uint64_t>(e.tail) << 32) | e.head;
      if (!seen.insert(key).second)
        throw SchemaError("duplicate edge {" + vertices_[e.tail].id + "," +
                          vertices_[e.head].id + "}");
    }
  }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const Vertex& vertex(std::uint32_t i) const { return vertices_.at(i); }

  std::optional<std::uint32_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  double total_transfer_weight() const {
    double sum = 0;
    for (const GraphEdge& e : edges_) sum += e.weight;
    return sum;
  }

  friend bool operator==(const PowerGraph& a, const PowerGraph& b) {
    if (a.vertices_.size() != b.vertices_.size() || a.edges_.size() != b.edges_.size())
      return false;
    for (std::size_t i = 0; i < a.vertices_.size(); ++i) {
      const Vertex &va = a.vertices_[i], &vb = b.vertices_[i];
      if (va.id != vb.id || va.surplus != vb.surplus || va.position != vb.position) return false;
    }
    for (std::size_t i = 0; i < a.edges_.size(); ++i) {
      const GraphEdge &ea = a.edges_[i], &eb = b.edges_[i];
      if (ea.tail != eb.tail || ea.head != eb.head || ea.weight != eb.weight) return false;
    }
    return true;
  }

 private:
  std::vector<Vertex> vertices_;
  std::vector<GraphEdge> edges_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

inline bool is_connected(const PowerGraph& graph) {
  const std::size_t n = graph.vertex_count();
  if (n <= 1) return true;
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (const GraphEdge& e : graph.edges()) {
    adj[e.tail].push_back(e.head);
    adj[e.head].push_back(e.tail);
  }
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::uint32_t> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const std::uint32_t u = stack.back();
    stack.pop_back();
    for (std::uint32_t v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
  }
  return visited == n;
}

// How vertex surpluses are sourced when loading CSV tables.
struct WeightPolicy {
  enum class Kind { Column, Uniform };
  Kind kind = Kind::Column;
  std::string column_name = "surplus";
  std::uint64_t seed = 0;

  static WeightPolicy column(std::string name = "surplus") {
    return {Kind::Column, std::move(name), 0};
  }
  // Surpluses drawn from U[0,1) in row order; reproducible from the seed.
  static WeightPolicy uniform(std::uint64_t seed) { return {Kind::Uniform, "", seed}; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current += ch;
    }
  }
  fields.push_back(current);
  return fields;
}

inline double parse_double_field(const std::string& field, const std::string& table, int line,
                                 const std::string& column) {
  double value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError(table + " line " + std::to_string(line) + ": cannot parse '" + field +
                     "' in column '" + column + "' as a number");
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row i came from file line i+2
  std::string name;

  std::optional<std::size_t> column(const std::string& want) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == want) return i;
    return std::nullopt;
  }

  std::size_t require_column(const std::string& want) const {
    auto col = column(want);
    if (!col) throw SchemaError(name + ": missing required column '" + want + "'");
    return *col;
  }
};

inline CsvTable read_csv(std::istream& in, const std::string& name) {
  CsvTable table;
  table.name = name;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": empty input, expected a header row");
  table.header = split_csv_line(line);
  int line_number = 1;
  const std::size_t width = table.header.size();
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != width)
      throw ParseError(name + " line " + std::to_string(line_number) + ": expected " +
                       std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace detail

// Builds a PowerGraph from SciGRID-style tables.
// vertices CSV: header id,lon,lat[,surplus]; links CSV: header id,v1,v2[,capacity].
// Unknown extra columns are ignored; duplicate links collapse to the first row.
inline PowerGraph load_network(std::istream& vertices_csv, std::istream& links_csv,
                               const WeightPolicy& policy) {
  const auto vtable = detail::read_csv(vertices_csv, "vertices");
  const auto ltable = detail::read_csv(links_csv, "links");

  const std::size_t vid_col = vtable.require_column("id");
  const auto lon_col = vtable.column("lon");
  const auto lat_col = vtable.column("lat");
  std::optional<std::size_t> surplus_col;
  if (policy.kind == WeightPolicy::Kind::Column)
    surplus_col = vtable.require_column(policy.column_name);

  Rng rng(policy.seed);
  std::vector<Vertex> vertices;
  vertices.reserve(vtable.rows.size());
  for (std::size_t r = 0; r < vtable.rows.size(); ++r) {
    const auto& row = vtable.rows[r];
    const int line = static_cast<int>(r) + 2;
    Vertex v;
    v.id = row[vid_col];
    if (v.id.empty())
      throw ParseError("vertices line " + std::to_string(line) + ": empty id");
    if (policy.kind == WeightPolicy::Kind::Uniform)
      v.surplus = rng.next_double();
    else
      v.surplus = detail::parse_double_field(row[*surplus_col], "vertices", line,
                                             policy.column_name);
    if (lon_col && lat_col && !row[*lon_col].empty() && !row[*lat_col].empty()) {
      v.position = {{detail::parse_double_field(row[*lon_col], "vertices", line, "lon"),
                     detail::parse_double_field(row[*lat_col], "vertices", line, "lat")}};
    }
    vertices.push_back(std::move(v));
  }

  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < vertices.size(); ++i)
    if (!index.emplace(vertices[i].id, i).second)
      throw SchemaError("duplicate vertex id '" + vertices[i].id + "'");

  const std::size_t v1_col = ltable.require_column("v1");
  const std::size_t v2_col = ltable.require_column("v2");
  const auto cap_col = ltable.column("capacity");

  std::vector<GraphEdge> edges;
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t r = 0; r < ltable.rows.size(); ++r) {
    const auto& row = ltable.rows[r];
    const int line = static_cast<int>(r) + 2;
    auto resolve = [&](const std::string& id) -> std::uint32_t {
      auto it = index.find(id);
      if (it == index.end())
        throw ReferenceError("links line " + std::to_string(line) + ": endpoint '" + id +
                             "' is not a vertex id");
      return it->second;
    };
    GraphEdge e;
    e.tail = resolve(row[v1_col]);
    e.head = resolve(row[v2_col]);
    if (e.tail == e.head)
      throw SchemaError("links line " + std::to_string(line) + ": self-loop on '" +
                        row[v1_col] + "'");
    if (e.tail > e.head) std::swap(e.tail, e.head);
    e.weight = cap_col ? detail::parse_double_field(row[*cap_col], "links", line, "capacity")
                       : 1.0;
    const std::uint64_t key = (static_cast<std::uint64_t>(e.tail) << 32) | e.head;
    if (!seen.insert(key).second) continue;  // duplicates collapse, first row wins
    edges.push_back(e);
  }

  return PowerGraph(std::move(vertices), std::move(edges));
}

inline PowerGraph load_network(const std::string& vertices_path, const std::string& links_path,
                               const WeightPolicy& policy) {
  std::ifstream vfile(vertices_path);
  if (!vfile) throw Error("cannot open vertices file: " + vertices_path);
  std::ifstream lfile(links_path);
  if (!lfile) throw Error("cannot open links file: " + links_path);
  return load_network(vfile, lfile, policy);
}

// Writes the graph back out in the load_network schema. Loading the result
// with WeightPolicy::column() reproduces the graph exactly.
inline void save_network(const PowerGraph& graph, std::ostream& vertices_csv,
                         std::ostream& links_csv) {
  vertices_csv << "id,lon,lat,surplus\n";
  for (const Vertex& v : graph.vertices()) {
    vertices_csv << v.id << ',';
    if (v.position)
      vertices_csv << format_double((*v.position)[0]) << ',' << format_double((*v.position)[1]);
    else
      vertices_csv << ',';
    vertices_csv << ',' << format_double(v.surplus) << '\n';
  }
  links_csv << "id,v1,v2,capacity\n";
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const GraphEdge& e = graph.edges()[i];
    links_csv << 'e' << i << ',' << graph.vertex(e.tail).id << ',' << graph.vertex(e.head).id
              << ',' << format_double(e.weight) << '\n';
  }
}

// Two cliques of size n joined by a single edge, with surpluses arranged so
// each clique's mean is exactly the target while enough assignments violate
// the balancing constraint at the stated threshold to make instances
// non-trivial.
struct CliquePairSpec {
  int clique_size = 3;
  double target_mean = 0.45;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

inline PowerGraph generate_clique_pair(const CliquePairSpec& spec) {
  const int n = spec.clique_size;
  if (n < 2) throw ModelError("clique size must be at least 2");
  if (!(spec.target_mean >= 0.0 && spec.target_mean < 1.0))
    throw ModelError("target mean surplus must lie in [0, 1)");

  // Mean-exact alternating +/- spread; the odd vertex gets no adjustment.
  double spread = std::min(0.3, std::min(spec.target_mean, 1.0 - spec.target_mean - 1e-12));
  if (spread < 0) spread = 0;
  Rng rng(spec.seed);
  auto clique_surpluses = [&]() {
    std::vector<double> adj(n, 0.0);
    for (int i = 0; i + 1 < n; i += 2) {
      adj[i] = spread;
      adj[i + 1] = -spread;
    }
    for (int i = n - 1; i > 0; --i)
      std::swap(adj[i], adj[rng.next_below(static_cast<std::uint64_t>(i) + 1)]);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = spec.target_mean + adj[i];
    return w;
  };

  std::vector<Vertex> vertices;
  vertices.reserve(2 * static_cast<std::size_t>(n));
  const double tau = 6.283185307179586;
  for (int clique = 0; clique < 2; ++clique) {
    const auto w = clique_surpluses();
    const double cx = clique == 0 ? 0.0 : 4.0;
    for (int i = 0; i < n; ++i) {
      Vertex v;
      v.id = (clique == 0 ? "a" : "b") + std::to_string(i);
      v.surplus = w[i];
      const double angle = tau * i / n;
      v.position = {{cx + std::cos(angle), std::sin(angle)}};
      vertices.push_back(std::move(v));
    }
  }

  std::vector<GraphEdge> edges;
  for (int clique = 0; clique < 2; ++clique) {
    const auto base = static_cast<std::uint32_t>(clique * n);
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(n); ++i)
      for (std::uint32_t j = i + 1; j < static_cast<std::uint32_t>(n); ++j)
        edges.push_back({base + i, base + j, 1.0});
  }
  edges.push_back({0, static_cast<std::uint32_t>(n), 1.0});  // the bridge

  return PowerGraph(std::move(vertices), std::move(edges));
}

// Connected Erdos-Renyi style graph on 2..8 vertices; edge sets are resampled
// until connected, surpluses drawn from U[0,1). Pure function of the seed.
inline PowerGraph generate_random_graph(int n, double edge_probability, std::uint64_t seed) {
  if (n < 2 || n > 8) throw ModelError("random graph size must be in 2..8");
  if (!(edge_probability > 0.0 && edge_probability <= 1.0))
    throw ModelError("edge probability must lie in (0, 1]");

  Rng rng(seed);
  std::vector<Vertex> vertices(n);
  const double tau = 6.283185307179586;
  for (int i = 0; i < n; ++i) {
    vertices[i].id = "n" + std::to_string(i);
    vertices[i].position = {{std::cos(tau * i / n), std::sin(tau * i / n)}};
  }

  std::vector<GraphEdge> edges;
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    edges.clear();
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(n); ++i)
      for (std::uint32_t j = i + 1; j < static_cast<std::uint32_t>(n); ++j)
        if (rng.next_double() < edge_probability) edges.push_back({i, j, 1.0});
    PowerGraph candidate{std::vector<Vertex>(vertices), std::vector<GraphEdge>(edges)};
    if (is_connected(candidate)) {
      for (Vertex& v : vertices) v.surplus = rng.next_double();
      return PowerGraph(std::move(vertices), std::move(edges));
    }
  }
  throw Error("failed to sample a connected graph; edge probability too small");
}

}  // namespace gridpart
