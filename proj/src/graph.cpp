#include "mtp/graph.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"

namespace mtp {

DirectedGraph generate_random_dag(int n, double p, std::uint64_t seed) {
  if (n < 1) throw ContractError("generate_random_dag: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0))
    throw ContractError("generate_random_dag: p must lie in [0,1]");
  DirectedGraph g;
  g.n = n;
  Rng rng(seed);
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k)
      if (rng.uniform01() < p) g.edges.emplace_back(i, k);
  return g;
}

bool is_structural_dag(const DirectedGraph& g) {
  for (const auto& [i, k] : g.edges)
    if (i >= k) return false;
  return true;
}

BoolMatrix adjacency_matrix(const DirectedGraph& g) {
  BoolMatrix adj(g.n, g.n);
  for (const auto& [i, k] : g.edges) adj.at(i, k) = 1;
  return adj;
}

std::vector<std::vector<int>> out_neighbors(const DirectedGraph& g) {
  std::vector<std::vector<int>> out(g.n);
  for (const auto& [i, k] : g.edges) out[i].push_back(k);
  return out;
}

BoolMatrix compute_reachability(const DirectedGraph& g) {
  const auto out = out_neighbors(g);
  BoolMatrix reach(g.n, g.n);
  std::vector<int> queue;
  std::vector<std::uint8_t> seen(g.n);
  for (int src = 0; src < g.n; ++src) {
    std::fill(seen.begin(), seen.end(), 0);
    queue.clear();
    // Seed the frontier with direct successors so that src itself is only
    // marked when a cycle returns to it.
    for (int v : out[src])
      if (!seen[v]) {
        seen[v] = 1;
        queue.push_back(v);
      }
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int v = queue[head];
      reach.at(v, src) = 1;
      for (int w : out[v])
        if (!seen[w]) {
          seen[w] = 1;
          queue.push_back(w);
        }
    }
  }
  return reach;
}

std::vector<std::pair<int, int>> reachable_pairs(const DirectedGraph& g,
                                                 const BoolMatrix& reach) {
  if (reach.rows != g.n || reach.cols != g.n)
    throw ContractError("reachable_pairs: matrix shape mismatch");
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < g.n; ++s)
    for (int t = 0; t < g.n; ++t)
      if (reach.at(t, s)) pairs.emplace_back(s, t);
  return pairs;
}

void save_graph(const DirectedGraph& g, const std::string& path) {
  nlohmann::json j;
  j["n"] = g.n;
  auto edges = nlohmann::json::array();
  for (const auto& [i, k] : g.edges) edges.push_back({i, k});
  j["edges"] = std::move(edges);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_graph: cannot open " + path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("save_graph: write failed for " + path);
}

DirectedGraph load_graph(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_graph: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_graph: " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("edges") ||
      !j["n"].is_number_integer() || !j["edges"].is_array())
    throw SchemaError("load_graph: " + path +
                      ": expected {\"n\": int, \"edges\": [[i,k],...]}");
  DirectedGraph g;
  g.n = j["n"].get<int>();
  if (g.n < 0) throw SchemaError("load_graph: negative node count");
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer())
      throw SchemaError("load_graph: malformed edge entry");
    const int i = e[0].get<int>();
    const int k = e[1].get<int>();
    if (i < 0 || i >= g.n || k < 0 || k >= g.n)
      throw SchemaError("load_graph: edge endpoint out of range");
    if (i == k) throw SchemaError("load_graph: self-loop edge");
    g.edges.emplace_back(i, k);
  }
  if (!std::is_sorted(g.edges.begin(), g.edges.end()))
    throw SchemaError("load_graph: edges must be sorted lexicographically");
  if (std::adjacent_find(g.edges.begin(), g.edges.end()) != g.edges.end())
    throw SchemaError("load_graph: duplicate edge");
  return g;
}

}  // namespace mtp
