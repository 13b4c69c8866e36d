#include "mtp/blocksworld.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"

namespace mtp {

namespace {

// Self-avoiding uniform walk of exactly `moves` moves starting at `start`;
// returns the visited state-index path or empty when the walk gets stuck.
std::vector<int> try_walk(const std::vector<std::vector<int>>& out, int start,
                          int moves, Rng& rng) {
  std::vector<int> path{start};
  std::vector<char> seen(out.size(), 0);
  seen[std::size_t(start)] = 1;
  std::vector<int> options;
  for (int step = 0; step < moves; ++step) {
    options.clear();
    for (int nb : out[std::size_t(path.back())])
      if (!seen[std::size_t(nb)]) options.push_back(nb);
    if (options.empty()) return {};
    const int next = options[std::size_t(rng.below(options.size()))];
    path.push_back(next);
    seen[std::size_t(next)] = 1;
  }
  return path;
}

std::vector<int> sample_acyclic_walk(const std::vector<std::vector<int>>& out,
                                     int moves, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const int start = int(rng.below(out.size()));
    auto path = try_walk(out, start, moves, rng);
    if (!path.empty()) return path;
  }
  throw ContractError("sample_acyclic_walk: graph too constrained for length");
}

}  // namespace

BlockState canonical_state(BlockState s) {
  for (const auto& tower : s)
    if (tower.empty())
      throw ContractError("canonical_state: empty tower");
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<BlockState> legal_moves(const BlockState& s) {
  std::vector<BlockState> next;
  const int towers = int(s.size());
  for (int i = 0; i < towers; ++i) {
    const int top = s[std::size_t(i)].back();
    // onto another tower
    for (int j = 0; j < towers; ++j) {
      if (j == i) continue;
      BlockState n = s;
      n[std::size_t(i)].pop_back();
      if (n[std::size_t(i)].empty()) n.erase(n.begin() + i);
      // find the destination tower again by its bottom block
      for (auto& tower : n)
        if (tower.front() == s[std::size_t(j)].front()) {
          tower.push_back(top);
          break;
        }
      next.push_back(canonical_state(std::move(n)));
    }
    // onto the table (only meaningful when the tower keeps standing)
    if (s[std::size_t(i)].size() >= 2) {
      BlockState n = s;
      n[std::size_t(i)].pop_back();
      n.push_back({top});
      next.push_back(canonical_state(std::move(n)));
    }
  }
  std::sort(next.begin(), next.end());
  next.erase(std::unique(next.begin(), next.end()), next.end());
  return next;
}

std::vector<BlockState> enumerate_states(int blocks) {
  if (blocks < 1 || blocks > 7)
    throw ContractError("enumerate_states: block count outside [1,7]");
  BlockState flat;
  for (int b = 0; b < blocks; ++b) flat.push_back({b});
  std::map<BlockState, int> seen;
  std::vector<BlockState> queue{canonical_state(flat)};
  seen.emplace(queue.front(), 0);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto current = queue[head];  // copy: queue reallocates
    for (auto& nb : legal_moves(current))
      if (seen.emplace(nb, 0).second) queue.push_back(nb);
  }
  std::vector<BlockState> states;
  states.reserve(seen.size());
  for (const auto& [st, _] : seen) states.push_back(st);  // map is sorted
  return states;
}

BlocksWorld build_blocksworld(int blocks) {
  BlocksWorld w;
  w.blocks = blocks;
  w.states = enumerate_states(blocks);
  std::map<BlockState, int> index;
  for (int i = 0; i < int(w.states.size()); ++i)
    index.emplace(w.states[std::size_t(i)], i);

  w.graph.n = int(w.states.size());
  for (int i = 0; i < w.graph.n; ++i)
    for (const auto& nb : legal_moves(w.states[std::size_t(i)]))
      w.graph.edges.emplace_back(i, index.at(nb));
  std::sort(w.graph.edges.begin(), w.graph.edges.end());
  w.graph.edges.erase(std::unique(w.graph.edges.begin(), w.graph.edges.end()),
                      w.graph.edges.end());
  return w;
}

PathDataset build_blocks_dataset(const BlocksWorld& w,
                                 const BlocksDatasetConfig& cfg) {
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    throw ContractError("build_blocks_dataset: bad length range");
  if (cfg.walks_per_length < 0 || cfg.n_test < 0)
    throw ContractError("build_blocks_dataset: negative sizes");

  const Vocabulary vocab{w.graph.n};
  const auto out = out_neighbors(w.graph);

  PathDataset ds;
  ds.n_nodes = w.graph.n;
  ds.seed = cfg.seed;
  ds.m = cfg.walks_per_length;
  ds.train_fraction = 1.0;

  // every move edge as a direct path
  for (const auto& [a, b] : w.graph.edges)
    ds.train.push_back(make_sample({a, b}, vocab));

  Rng rng_train(derive_seed(cfg.seed, "blocks-train-walks"));
  for (int len = cfg.min_len; len <= cfg.max_len; ++len)
    for (int i = 0; i < cfg.walks_per_length; ++i)
      ds.train.push_back(make_sample(sample_acyclic_walk(out, len, rng_train), vocab));

  Rng rng_test(derive_seed(cfg.seed, "blocks-test-paths"));
  for (int i = 0; i < cfg.n_test; ++i) {
    const int len = rng_test.uniform_int(cfg.min_len, cfg.max_len);
    ds.test.push_back(make_sample(sample_acyclic_walk(out, len, rng_test), vocab));
  }

  const auto obs = build_observed(ds.train, w.graph.n);
  std::map<std::pair<int, int>, int> degrees;
  for (const auto& s : ds.test)
    degrees.emplace(std::make_pair(s.s, s.t), 0);
  for (auto& [key, deg] : degrees)
    deg = classify_degree(key.first, key.second, obs);
  ds.test_pairs.reserve(degrees.size());
  for (const auto& [key, deg] : degrees)
    ds.test_pairs.push_back({key.first, key.second, deg});
  return ds;
}

void save_states(const BlocksWorld& w, const std::string& path) {
  nlohmann::json j;
  j["blocks"] = w.blocks;
  j["states"] = nlohmann::json::array();
  for (const auto& st : w.states) j["states"].push_back(st);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_states: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("save_states: write failed for " + path);
}

}  // namespace mtp
