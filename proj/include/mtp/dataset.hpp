#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtp/graph.hpp"
#include "mtp/matrix.hpp"
#include "mtp/rng.hpp"

namespace mtp {

// Token layout of a path from s to t over nodes 0..n-1:
//   [s, t, s, v1, ..., vL, TERM]
// where (s, v1, ..., vL) is the node path, vL = t, and TERM = n closes the
// sequence. The first two tokens announce source and target; the path then
// restarts from s.
struct Vocabulary {
  int n_nodes = 0;
  int term() const { return n_nodes; }
  int size() const { return n_nodes + 1; }
};

struct PathSample {
  int s = 0;
  int t = 0;
  std::vector<int> tokens;  // includes the trailing TERM
};

struct PairInfo {
  int s = 0;
  int t = 0;
  int degree = 3;
};

struct PathDataset {
  int n_nodes = 0;
  std::uint64_t seed = 0;
  int m = 0;
  double train_fraction = 0.0;
  std::string graph_file;
  std::vector<PathSample> train;
  std::vector<PathSample> test;
  std::vector<PairInfo> test_pairs;  // sorted by (s,t), degree labels attached
};

// Matrices distilled from the training corpus. Positions are 1-based over
// node tokens with TERM excluded, sequence u of length N:
//   adj(i,k)   = 1 iff some sequence has u_n = i, u_{n+1} = k for n in [3,N-1]
//   reach(t,k) = 1 iff some sequence has u_2 = t, u_n = k for n in [4,N]
// reach therefore records nodes that were ever *generated* on the way to t;
// the announced source at position 3 deliberately does not count.
struct ObservedMatrices {
  BoolMatrix adj;
  BoolMatrix reach;
};

// Uniform random walk from s restricted to nodes that can still reach t;
// returns the node path [s, ..., t]. Requires reach(t,s) = 1.
std::vector<int> sample_walk(const std::vector<std::vector<int>>& out,
                             const BoolMatrix& reach, int s, int t, Rng& rng);

PathSample make_sample(const std::vector<int>& node_path, const Vocabulary& vocab);

// Seeded uniform split of (s,t) pairs: the first round(fraction*|pairs|) of a
// seeded shuffle train, the rest hold out.
std::pair<std::vector<std::pair<int, int>>, std::vector<std::pair<int, int>>>
split_pairs(const std::vector<std::pair<int, int>>& pairs, double train_fraction,
            std::uint64_t seed);

// per_pair walks for every pair, pairs visited in the order given.
std::vector<PathSample> sample_paths(const DirectedGraph& g,
                                     const BoolMatrix& reach,
                                     const std::vector<std::pair<int, int>>& pairs,
                                     int per_pair, std::uint64_t seed);

ObservedMatrices build_observed(const std::vector<PathSample>& train, int n_nodes);

// Recursive pair difficulty:
//   0: reach(t,s)
//   1: not 0, and some u with adj(s,u) and reach(t,u)
//   2: not 0/1, and some u with adj(s,u) such that (u,t) is degree 1
//   3: everything else
int classify_degree(int s, int t, const ObservedMatrices& obs);

// Full pipeline: split reachable pairs, force every one-hop edge into train
// as a direct path, drop any trained-on pair from the test side, sample
// per-pair walks, and label test pairs with their degree.
PathDataset build_dataset(const DirectedGraph& g, int m, double train_fraction,
                          std::uint64_t seed, const std::string& graph_file = "");

// Directory layout: train.txt / test.txt hold one sequence per line as
// space-separated node ids (TERM is implicit in the newline); meta.json holds
// provenance and per-pair degree labels.
void save_dataset(const PathDataset& ds, const std::string& dir);
PathDataset load_dataset(const std::string& dir);

}  // namespace mtp
