#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtp/dataset.hpp"
#include "mtp/graph.hpp"
#include "mtp/model.hpp"
#include "mtp/rng.hpp"

namespace mtp {

enum class DecodeMode { Greedy, Sample };

struct GenerateConfig {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;  // Sample mode only; must be positive
  // Hard cap on generated tokens after the prompt; 0 means "whatever fits in
  // the model window". Generation always stops at the window edge.
  int max_new_tokens = 0;
};

// Autoregressive rollout from the prompt [s, t, s]. Returns the full token
// sequence including the prompt. Generation stops right after emitting the
// terminator; a sequence that exhausts its budget without terminating is
// returned as-is (and will fail validation). Greedy decoding breaks ties
// towards the lowest token id. Sample mode draws from
// softmax(logits / temperature) and requires an rng.
std::vector<int> generate_path(const Model& model, int s, int t,
                               const GenerateConfig& cfg = {},
                               Rng* rng = nullptr);

// True iff tokens spell a well-formed solved query over g:
//   [s, t, s, v1, ..., vL, TERM]  with L >= 1, vL == t,
// every consecutive hop s->v1->...->vL a real edge, and the terminator
// appearing exactly once, at the end.
bool validate_path(const BoolMatrix& adj, const std::vector<int>& tokens);
bool validate_path(const DirectedGraph& g, const std::vector<int>& tokens);

struct DegreeBucket {
  long long pairs = 0;
  long long correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::string model;        // canonical model spec string
  std::string decode;       // "greedy" or "sample@T"
  std::uint64_t seed = 0;   // sampling stream seed (0 under greedy)
  int n_nodes = 0;
  std::map<int, DegreeBucket> by_degree;  // only buckets with pairs > 0
  DegreeBucket overall;
};

// Generates one path per query pair and scores it against the true graph.
EvalReport evaluate(const Model& model, const DirectedGraph& g,
                    const std::vector<PairInfo>& pairs,
                    const GenerateConfig& cfg = {}, std::uint64_t seed = 0);

void save_report(const EvalReport& rep, const std::string& path);
EvalReport load_report(const std::string& path);

struct AggregateBucket {
  int graphs = 0;             // reports contributing (bucket non-empty there)
  long long pairs = 0;        // pooled pair count
  double path_acc = 0.0;      // pooled: total correct / total pairs
  double graph_acc = 0.0;     // mean of per-report accuracies
  double graph_stderr = 0.0;  // sample std of those accuracies / sqrt(graphs)
};

struct AggregateReport {
  std::map<int, AggregateBucket> by_degree;
  AggregateBucket overall;
};

AggregateReport aggregate_reports(const std::vector<EvalReport>& reports);

}  // namespace mtp
