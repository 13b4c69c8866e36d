#include "mtp/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"

namespace mtp {

std::vector<int> sample_walk(const std::vector<std::vector<int>>& out,
                             const BoolMatrix& reach, int s, int t, Rng& rng) {
  if (!reach.at(t, s))
    throw ContractError("sample_walk: target not reachable from source");
  std::vector<int> path{s};
  int v = s;
  const std::size_t cap = std::size_t(reach.rows) * 4 + 8;
  while (v != t) {
    if (path.size() > cap)
      throw ContractError("sample_walk: walk exceeded step cap");
    std::vector<int> candidates;
    for (int u : out[v])
      if (u == t || reach.at(t, u)) candidates.push_back(u);
    if (candidates.empty())
      throw ContractError("sample_walk: dead end despite reachability");
    v = candidates[rng.below(candidates.size())];
    path.push_back(v);
  }
  return path;
}

PathSample make_sample(const std::vector<int>& node_path, const Vocabulary& vocab) {
  if (node_path.size() < 2)
    throw ContractError("make_sample: node path needs at least one edge");
  PathSample ps;
  ps.s = node_path.front();
  ps.t = node_path.back();
  ps.tokens.reserve(node_path.size() + 3);
  ps.tokens.push_back(ps.s);
  ps.tokens.push_back(ps.t);
  ps.tokens.insert(ps.tokens.end(), node_path.begin(), node_path.end());
  ps.tokens.push_back(vocab.term());
  return ps;
}

std::pair<std::vector<std::pair<int, int>>, std::vector<std::pair<int, int>>>
split_pairs(const std::vector<std::pair<int, int>>& pairs, double train_fraction,
            std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw ContractError("split_pairs: train_fraction must lie in [0,1]");
  auto shuffled = pairs;
  Rng rng(seed);
  rng.shuffle(shuffled);
  const auto n_train =
      std::size_t(std::llround(train_fraction * double(pairs.size())));
  std::vector<std::pair<int, int>> train(shuffled.begin(),
                                         shuffled.begin() + n_train);
  std::vector<std::pair<int, int>> holdout(shuffled.begin() + n_train,
                                           shuffled.end());
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());
  return {train, holdout};
}

std::vector<PathSample> sample_paths(const DirectedGraph& g,
                                     const BoolMatrix& reach,
                                     const std::vector<std::pair<int, int>>& pairs,
                                     int per_pair, std::uint64_t seed) {
  if (per_pair < 1) throw ContractError("sample_paths: per_pair must be >= 1");
  const Vocabulary vocab{g.n};
  const auto out = out_neighbors(g);
  Rng rng(seed);
  std::vector<PathSample> samples;
  samples.reserve(pairs.size() * std::size_t(per_pair));
  for (const auto& [s, t] : pairs)
    for (int i = 0; i < per_pair; ++i)
      samples.push_back(make_sample(sample_walk(out, reach, s, t, rng), vocab));
  return samples;
}

ObservedMatrices build_observed(const std::vector<PathSample>& train, int n_nodes) {
  ObservedMatrices obs{BoolMatrix(n_nodes, n_nodes), BoolMatrix(n_nodes, n_nodes)};
  for (const auto& ps : train) {
    const auto& u = ps.tokens;
    const int n_tok = int(u.size()) - 1;  // node tokens, TERM dropped
    if (n_tok < 4)
      throw ContractError("build_observed: sequence shorter than one edge");
    for (int i = 3; i <= n_tok - 1; ++i) obs.adj.at(u[i - 1], u[i]) = 1;
    for (int i = 4; i <= n_tok; ++i) obs.reach.at(u[1], u[i - 1]) = 1;
  }
  return obs;
}

namespace {

bool is_degree1(int s, int t, const ObservedMatrices& obs) {
  if (obs.reach.at(t, s)) return false;
  for (int u = 0; u < obs.adj.cols; ++u)
    if (obs.adj.at(s, u) && obs.reach.at(t, u)) return true;
  return false;
}

}  // namespace

int classify_degree(int s, int t, const ObservedMatrices& obs) {
  if (obs.adj.rows != obs.reach.rows || obs.adj.cols != obs.reach.cols)
    throw ContractError("classify_degree: matrix shape mismatch");
  if (s < 0 || s >= obs.adj.rows || t < 0 || t >= obs.adj.rows)
    throw ContractError("classify_degree: node out of range");
  if (obs.reach.at(t, s)) return 0;
  if (is_degree1(s, t, obs)) return 1;
  for (int u = 0; u < obs.adj.cols; ++u)
    if (obs.adj.at(s, u) && is_degree1(u, t, obs)) return 2;
  return 3;
}

PathDataset build_dataset(const DirectedGraph& g, int m, double train_fraction,
                          std::uint64_t seed, const std::string& graph_file) {
  const Vocabulary vocab{g.n};
  const auto reach = compute_reachability(g);
  const auto pairs = reachable_pairs(g, reach);
  auto [train_pairs, holdout] =
      split_pairs(pairs, train_fraction, derive_seed(seed, "split"));

  PathDataset ds;
  ds.n_nodes = g.n;
  ds.seed = seed;
  ds.m = m;
  ds.train_fraction = train_fraction;
  ds.graph_file = graph_file;

  // Every one-hop edge is trained on as a direct path, whatever the split.
  for (const auto& [s, t] : g.edges)
    ds.train.push_back(make_sample({s, t}, vocab));
  auto sampled = sample_paths(g, reach, train_pairs, m,
                              derive_seed(seed, "train-paths"));
  ds.train.insert(ds.train.end(), std::make_move_iterator(sampled.begin()),
                  std::make_move_iterator(sampled.end()));

  // Any pair that training saw (split or forced edge) is excluded from test.
  std::set<std::pair<int, int>> trained(train_pairs.begin(), train_pairs.end());
  trained.insert(g.edges.begin(), g.edges.end());
  std::vector<std::pair<int, int>> test_pairs;
  for (const auto& p : holdout)
    if (!trained.count(p)) test_pairs.push_back(p);

  ds.test = sample_paths(g, reach, test_pairs, m, derive_seed(seed, "test-paths"));

  const auto obs = build_observed(ds.train, g.n);
  ds.test_pairs.reserve(test_pairs.size());
  for (const auto& [s, t] : test_pairs)
    ds.test_pairs.push_back({s, t, classify_degree(s, t, obs)});
  return ds;
}

namespace {

void write_samples(const std::vector<PathSample>& samples, int term,
                   const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_dataset: cannot open " + path);
  for (const auto& ps : samples) {
    if (ps.tokens.empty() || ps.tokens.back() != term)
      throw ContractError("save_dataset: sample does not end with TERM");
    for (std::size_t i = 0; i + 1 < ps.tokens.size(); ++i) {
      if (i) f << ' ';
      f << ps.tokens[i];
    }
    f << '\n';
  }
  if (!f) throw IoError("save_dataset: write failed for " + path);
}

std::vector<PathSample> read_samples(const std::string& path, const Vocabulary& vocab) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_dataset: cannot open " + path);
  std::vector<PathSample> samples;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PathSample ps;
    int tok;
    while (ss >> tok) {
      if (tok < 0 || tok >= vocab.n_nodes)
        throw SchemaError("load_dataset: token out of node range in " + path);
      ps.tokens.push_back(tok);
    }
    if (!ss.eof()) throw SchemaError("load_dataset: non-integer token in " + path);
    if (ps.tokens.size() < 4)
      throw SchemaError("load_dataset: sequence shorter than one edge in " + path);
    ps.tokens.push_back(vocab.term());
    ps.s = ps.tokens[0];
    ps.t = ps.tokens[1];
    samples.push_back(std::move(ps));
  }
  return samples;
}

}  // namespace

void save_dataset(const PathDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const Vocabulary vocab{ds.n_nodes};
  write_samples(ds.train, vocab.term(), dir + "/train.txt");
  write_samples(ds.test, vocab.term(), dir + "/test.txt");

  nlohmann::json j;
  j["graph_file"] = ds.graph_file;
  j["n"] = ds.n_nodes;
  j["seed"] = ds.seed;
  j["m"] = ds.m;
  j["train_fraction"] = ds.train_fraction;
  auto pairs = nlohmann::json::array();
  for (const auto& p : ds.test_pairs) pairs.push_back({p.s, p.t, p.degree});
  j["test_pairs"] = std::move(pairs);
  std::ofstream f(dir + "/meta.json", std::ios::binary);
  if (!f) throw IoError("save_dataset: cannot open " + dir + "/meta.json");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("save_dataset: write failed for " + dir + "/meta.json");
}

PathDataset load_dataset(const std::string& dir) {
  std::ifstream f(dir + "/meta.json", std::ios::binary);
  if (!f) throw IoError("load_dataset: cannot open " + dir + "/meta.json");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_dataset: meta.json: " + std::string(e.what()));
  }
  for (const char* key : {"graph_file", "n", "seed", "m", "train_fraction", "test_pairs"})
    if (!j.contains(key))
      throw SchemaError(std::string("load_dataset: meta.json missing ") + key);

  PathDataset ds;
  ds.n_nodes = j["n"].get<int>();
  if (ds.n_nodes < 1) throw SchemaError("load_dataset: invalid node count");
  ds.seed = j["seed"].get<std::uint64_t>();
  ds.m = j["m"].get<int>();
  ds.train_fraction = j["train_fraction"].get<double>();
  ds.graph_file = j["graph_file"].get<std::string>();
  for (const auto& p : j["test_pairs"]) {
    if (!p.is_array() || p.size() != 3)
      throw SchemaError("load_dataset: malformed test pair entry");
    PairInfo info{p[0].get<int>(), p[1].get<int>(), p[2].get<int>()};
    if (info.s < 0 || info.s >= ds.n_nodes || info.t < 0 || info.t >= ds.n_nodes ||
        info.degree < 0 || info.degree > 3)
      throw SchemaError("load_dataset: test pair out of range");
    ds.test_pairs.push_back(info);
  }
  const Vocabulary vocab{ds.n_nodes};
  ds.train = read_samples(dir + "/train.txt", vocab);
  ds.test = read_samples(dir + "/test.txt", vocab);
  return ds;
}

}  // namespace mtp
