#include "mtp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mtp/error.hpp"

namespace mtp {

namespace {

int pick_token(const std::vector<double>& logits, const GenerateConfig& cfg,
               Rng* rng) {
  const int v = int(logits.size());
  if (cfg.mode == DecodeMode::Greedy) {
    int best = 0;
    for (int k = 1; k < v; ++k)
      if (logits[std::size_t(k)] > logits[std::size_t(best)]) best = k;
    return best;
  }
  double mx = logits[0];
  for (int k = 1; k < v; ++k) mx = std::max(mx, logits[std::size_t(k)]);
  std::vector<double> p(std::size_t(v), 0.0);
  double sum = 0.0;
  for (int k = 0; k < v; ++k) {
    p[std::size_t(k)] = std::exp((logits[std::size_t(k)] - mx) / cfg.temperature);
    sum += p[std::size_t(k)];
  }
  const double u = rng->uniform01() * sum;
  double acc = 0.0;
  for (int k = 0; k < v; ++k) {
    acc += p[std::size_t(k)];
    if (u < acc) return k;
  }
  return v - 1;  // guard against accumulated rounding on the last bin
}

void finalize(DegreeBucket& b) {
  b.accuracy = b.pairs > 0 ? double(b.correct) / double(b.pairs) : 0.0;
}

nlohmann::json bucket_to_json(const DegreeBucket& b) {
  return {{"pairs", b.pairs}, {"correct", b.correct}, {"accuracy", b.accuracy}};
}

DegreeBucket bucket_from_json(const nlohmann::json& j) {
  DegreeBucket b;
  b.pairs = j.at("pairs").get<long long>();
  b.correct = j.at("correct").get<long long>();
  b.accuracy = j.at("accuracy").get<double>();
  return b;
}

}  // namespace

std::vector<int> generate_path(const Model& model, int s, int t,
                               const GenerateConfig& cfg, Rng* rng) {
  const auto& mc = model.config();
  const int term = mc.vocab - 1;
  if (s < 0 || s >= term || t < 0 || t >= term)
    throw ContractError("generate_path: query nodes outside the vocabulary");
  if (cfg.mode == DecodeMode::Sample) {
    if (!(cfg.temperature > 0.0))
      throw ContractError("generate_path: sampling temperature must be positive");
    if (rng == nullptr)
      throw ContractError("generate_path: sample mode needs a random stream");
  }
  if (cfg.max_new_tokens < 0)
    throw ContractError("generate_path: max_new_tokens must be non-negative");
  if (mc.max_seq_len < 4)
    throw ContractError("generate_path: model window cannot fit any answer");

  const int budget =
      cfg.max_new_tokens > 0 ? cfg.max_new_tokens : mc.max_seq_len - 3;

  std::vector<int> out{s, t, s};
  Decoder dec(model);
  dec.step(s);
  dec.step(t);
  const std::vector<double>* logits = &dec.step(s);
  for (int i = 0; i < budget && int(out.size()) < mc.max_seq_len; ++i) {
    const int tok = pick_token(*logits, cfg, rng);
    out.push_back(tok);
    if (tok == term) break;
    if (int(out.size()) >= mc.max_seq_len) break;  // no room for another step
    logits = &dec.step(tok);
  }
  return out;
}

bool validate_path(const BoolMatrix& adj, const std::vector<int>& tokens) {
  const int n = adj.rows;
  if (tokens.size() < 5) return false;  // shortest answer: s t s t TERM
  const int s = tokens[0];
  const int t = tokens[1];
  if (s < 0 || s >= n || t < 0 || t >= n) return false;
  if (tokens[2] != s) return false;
  if (tokens.back() != n) return false;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    if (tokens[i] == n) return false;  // early terminator
  for (std::size_t i = 2; i + 2 < tokens.size(); ++i) {
    const int a = tokens[i];
    const int b = tokens[i + 1];
    if (a < 0 || a >= n || b < 0 || b >= n) return false;
    if (!adj.at(a, b)) return false;
  }
  return tokens[tokens.size() - 2] == t;
}

bool validate_path(const DirectedGraph& g, const std::vector<int>& tokens) {
  return validate_path(adjacency_matrix(g), tokens);
}

EvalReport evaluate(const Model& model, const DirectedGraph& g,
                    const std::vector<PairInfo>& pairs,
                    const GenerateConfig& cfg, std::uint64_t seed) {
  if (model.config().vocab != g.n + 1)
    throw ContractError("evaluate: model vocabulary does not match the graph");
  const auto adj = adjacency_matrix(g);

  EvalReport rep;
  rep.model = model_spec(model.config());
  rep.n_nodes = g.n;
  if (cfg.mode == DecodeMode::Greedy) {
    rep.decode = "greedy";
  } else {
    std::ostringstream os;
    os << "sample@" << cfg.temperature;
    rep.decode = os.str();
    rep.seed = seed;
  }

  Rng rng(derive_seed(seed, "decode"));
  Rng* rng_ptr = cfg.mode == DecodeMode::Sample ? &rng : nullptr;
  // Greedy rollouts are a pure function of (s, t); reuse repeats.
  std::map<std::pair<int, int>, bool> cache;

  for (const auto& q : pairs) {
    bool ok = false;
    const auto key = std::make_pair(q.s, q.t);
    const auto hit = cfg.mode == DecodeMode::Greedy ? cache.find(key) : cache.end();
    if (cfg.mode == DecodeMode::Greedy && hit != cache.end()) {
      ok = hit->second;
    } else {
      ok = validate_path(adj, generate_path(model, q.s, q.t, cfg, rng_ptr));
      if (cfg.mode == DecodeMode::Greedy) cache.emplace(key, ok);
    }
    auto& bucket = rep.by_degree[q.degree];
    bucket.pairs += 1;
    rep.overall.pairs += 1;
    if (ok) {
      bucket.correct += 1;
      rep.overall.correct += 1;
    }
  }
  for (auto& [deg, bucket] : rep.by_degree) finalize(bucket);
  finalize(rep.overall);
  return rep;
}

void save_report(const EvalReport& rep, const std::string& path) {
  nlohmann::json j;
  j["model"] = rep.model;
  j["decode"] = rep.decode;
  j["seed"] = rep.seed;
  j["n_nodes"] = rep.n_nodes;
  j["overall"] = bucket_to_json(rep.overall);
  nlohmann::json deg = nlohmann::json::object();
  for (const auto& [d, b] : rep.by_degree) deg[std::to_string(d)] = bucket_to_json(b);
  j["by_degree"] = deg;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_report: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("save_report: write failed for " + path);
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_report: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    EvalReport rep;
    rep.model = j.at("model").get<std::string>();
    rep.decode = j.at("decode").get<std::string>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.n_nodes = j.at("n_nodes").get<int>();
    rep.overall = bucket_from_json(j.at("overall"));
    for (const auto& [key, val] : j.at("by_degree").items())
      rep.by_degree[std::stoi(key)] = bucket_from_json(val);
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_report: " + path + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw SchemaError("load_report: " + path + ": non-numeric degree key");
  }
}

AggregateReport aggregate_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty())
    throw ContractError("aggregate_reports: no reports given");
  AggregateReport agg;
  std::map<int, std::vector<double>> deg_accs;
  std::vector<double> overall_accs;

  for (const auto& rep : reports) {
    for (const auto& [d, b] : rep.by_degree) {
      if (b.pairs == 0) continue;
      auto& out = agg.by_degree[d];
      out.graphs += 1;
      out.pairs += b.pairs;
      out.path_acc += double(b.correct);  // numerator for now
      deg_accs[d].push_back(b.accuracy);
    }
    if (rep.overall.pairs > 0) {
      agg.overall.graphs += 1;
      agg.overall.pairs += rep.overall.pairs;
      agg.overall.path_acc += double(rep.overall.correct);
      overall_accs.push_back(rep.overall.accuracy);
    }
  }

  auto finish = [](AggregateBucket& b, const std::vector<double>& accs) {
    b.path_acc = b.pairs > 0 ? b.path_acc / double(b.pairs) : 0.0;
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean = accs.empty() ? 0.0 : mean / double(accs.size());
    b.graph_acc = mean;
    if (accs.size() >= 2) {
      double ss = 0.0;
      for (double a : accs) ss += (a - mean) * (a - mean);
      b.graph_stderr =
          std::sqrt(ss / double(accs.size() - 1)) / std::sqrt(double(accs.size()));
    }
  };
  for (auto& [d, b] : agg.by_degree) finish(b, deg_accs[d]);
  finish(agg.overall, overall_accs);
  return agg;
}

}  // namespace mtp
