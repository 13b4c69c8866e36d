#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtp/matrix.hpp"

namespace mtp {

// Directed graph on nodes 0..n-1. Edges are self-loop free, unique and kept
// sorted lexicographically. generate_random_dag only emits i<k edges, so its
// output is acyclic by construction; other producers (e.g. move graphs over
// puzzle states) may store arbitrary directed edges, including symmetric
// pairs, and every algorithm below handles the general case.
struct DirectedGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
};

// Independent Bernoulli(p) draw for every ordered pair i<k, scanned in
// lexicographic order from one seeded stream.
DirectedGraph generate_random_dag(int n, double p, std::uint64_t seed);

// True iff every edge satisfies i<k.
bool is_structural_dag(const DirectedGraph& g);

BoolMatrix adjacency_matrix(const DirectedGraph& g);

// R(t,k) = 1 iff t is reachable from k along at least one edge, computed by
// BFS from every source. R(k,k) = 1 only when k lies on a cycle.
BoolMatrix compute_reachability(const DirectedGraph& g);

std::vector<std::vector<int>> out_neighbors(const DirectedGraph& g);

// All (s,t) with R(t,s) = 1, sorted lexicographically.
std::vector<std::pair<int, int>> reachable_pairs(const DirectedGraph& g,
                                                 const BoolMatrix& reach);

void save_graph(const DirectedGraph& g, const std::string& path);
DirectedGraph load_graph(const std::string& path);

}  // namespace mtp
