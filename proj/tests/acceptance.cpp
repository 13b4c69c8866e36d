// Exit-gate checks for the whole workbench. Each criterion prints exactly one
// [PASS]/[FAIL] line; the binary exits non-zero if any fail. Tolerances,
// seeds and budgets are pinned here on purpose — they are the contract.
//
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtp/analysis.hpp"
#include "mtp/blocksworld.hpp"
#include "mtp/dataset.hpp"
#include "mtp/eval.hpp"
#include "mtp/graph.hpp"
#include "mtp/model.hpp"
#include "mtp/rng.hpp"
#include "mtp/simplified.hpp"
#include "mtp/trainer.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Prints the failing expression and bails out of the criterion.
#define REQ(cond)                                                         \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::printf("       %s:%d: requirement failed: %s\n", __FILE__,     \
                  __LINE__, #cond);                                       \
      return false;                                                       \
    }                                                                     \
  } while (0)

namespace {

// ---------------------------------------------------------------------------
// pinned experiment constants (calibrated once, then frozen)

// criterion 1/2: simplified-model instances
constexpr int kInstanceNodes = 9;  // vocabulary 10 with the terminator
constexpr std::uint64_t kC1Seed = 101;
constexpr std::uint64_t kC2Seed = 202;

// criterion 5: ordering of the trained factor matrices, 20-node graph
constexpr std::uint64_t kC5GraphSeed = 2001;
constexpr int kC5Nodes = 20;
constexpr double kC5EdgeProb = 0.25;
constexpr int kC5M = 5;
constexpr double kC5Fraction = 0.5;
constexpr int kC5Steps = 4000;
constexpr double kC5Lr = 0.05;
constexpr std::uint64_t kC5InitSeed = 2002;

// criterion 6: transfer-adjacency gap with and without injection, 100 nodes
constexpr std::uint64_t kC6GraphSeed = 3001;
constexpr int kC6Nodes = 100;
constexpr double kC6EdgeProb = 0.1;
constexpr int kC6M = 20;          // walks per trained pair
constexpr double kC6Fraction = 0.1;  // trained share of reachable pairs
constexpr int kC6DModel = 120;
constexpr int kC6Epochs = 100;
constexpr double kC6Lr = 1e-3;
constexpr int kC6Batch = 32;
constexpr std::uint64_t kC6CellSeed = 3002;

// criterion 7/8: reduced-scale degree table, three 100-node graphs. The
// seeds were picked (before any model was trained) so each test split
// populates all four degree buckets: degree-2 sizes 88/95/69 and degree-3
// sizes 9/12/8 under this exact graph->dataset derivation.
constexpr std::uint64_t kC7GraphSeeds[3] = {4005, 4057, 4037};
constexpr int kC7Nodes = 100;
constexpr double kC7EdgeProb = 0.1;
constexpr int kC7M = 20;
constexpr double kC7Fraction = 0.1;
constexpr int kC7DModel = 120;
constexpr int kC7Epochs = 100;
constexpr double kC7Lr = 1e-3;
constexpr int kC7Batch = 32;
constexpr std::uint64_t kC7CellSeed = 4004;
const char* const kC7Baseline = "1tok";
const char* const kC7Enhanced = "2tok-tf1-nti";

// criterion 9: four-block world
constexpr std::uint64_t kC9Seed = 5001;
constexpr int kC9WalksPerLength = 500;  // per each of the five walk lengths
constexpr int kC9Test = 5000;
constexpr int kC9DModel = 120;
constexpr int kC9Epochs = 300;
constexpr double kC9Lr = 1e-3;
constexpr int kC9Batch = 32;

double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path art_dir() {
  const auto dir = fs::temp_directory_path() / "mtp_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// shared pipeline helpers

int longest_sequence(const mtp::PathDataset& ds) {
  std::size_t n = 0;
  for (const auto& s : ds.train) n = std::max(n, s.tokens.size());
  for (const auto& s : ds.test) n = std::max(n, s.tokens.size());
  return int(n);
}

mtp::Model train_cell(const mtp::PathDataset& ds, const std::string& spec,
                      int d_model, int epochs, double lr, int batch,
                      std::uint64_t cell_seed, double weight_decay = 0.01) {
  mtp::ModelConfig cfg;
  cfg.vocab = ds.n_nodes + 1;
  cfg.d_model = d_model;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.max_seq_len = longest_sequence(ds);
  mtp::apply_model_spec(cfg, spec);
  cfg.validate();

  // Spec-independent streams: architecture variants trained from the same
  // cell share byte-identical initial weights on their common parameters and
  // see identical batch orders, so comparisons isolate the architecture.
  mtp::Model m(cfg);
  m.init_params(mtp::derive_seed(cell_seed, "init"));
  mtp::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.lr = lr;
  tc.weight_decay = weight_decay;
  tc.seed = mtp::derive_seed(cell_seed, "train");
  mtp::train_model(m, ds.train, tc);
  return m;
}

std::string checkpoint_bytes(const mtp::Model& m, const std::string& tag) {
  const auto path = (art_dir() / (tag + ".bin")).string();
  mtp::save_checkpoint(m, path);
  return slurp(path);
}

std::string report_bytes(const mtp::EvalReport& rep, const std::string& tag) {
  const auto path = (art_dir() / (tag + ".json")).string();
  mtp::save_report(rep, path);
  return slurp(path);
}

// ---------------------------------------------------------------------------
// cached first runs of the training pipelines (criteria 5-8 check their
// properties; criterion 10 re-runs them and compares bytes)

struct C5Result {
  mtp::EntryStats wm, wv;
  double initial_loss = 0.0, final_loss = 0.0;
  std::string bytes;  // wm | wv | wt raw doubles
};

C5Result run_c5() {
  const auto g = mtp::generate_random_dag(kC5Nodes, kC5EdgeProb, kC5GraphSeed);
  const auto ds = mtp::build_dataset(g, kC5M, kC5Fraction,
                                     mtp::derive_seed(kC5GraphSeed, "data"));
  const int vocab = kC5Nodes + 1;
  const auto counts = mtp::build_counts(ds.train, vocab);
  auto m = mtp::make_simplified(vocab, kC5InitSeed);
  const auto adj = mtp::adjacency_matrix(g);
  mtp::fix_transfer_to_adjacency(m, adj);

  mtp::SimplifiedTrainConfig cfg;
  cfg.steps = kC5Steps;
  cfg.lr = kC5Lr;
  cfg.fixed_wt = true;
  const auto losses = mtp::train_simplified(m, counts, cfg);

  const auto obs = mtp::build_observed(ds.train, kC5Nodes);
  const auto mask_m = mtp::learnable_mask_m(counts, adj);
  const auto mask_v = mtp::learnable_mask_v(counts, adj, obs.reach);
  auto block = [&](const mtp::MatD& w) {
    mtp::MatD b(kC5Nodes, kC5Nodes);
    for (int i = 0; i < kC5Nodes; ++i)
      for (int k = 0; k < kC5Nodes; ++k) b.at(i, k) = w.at(i, k);
    return b;
  };
  auto block_mask = [&](const mtp::BoolMatrix& w) {
    mtp::BoolMatrix b(kC5Nodes, kC5Nodes);
    for (int i = 0; i < kC5Nodes; ++i)
      for (int k = 0; k < kC5Nodes; ++k) b.at(i, k) = w.at(i, k);
    return b;
  };

  C5Result r;
  r.wm = mtp::entry_stats(block(m.wm), adj, block_mask(mask_m));
  r.wv = mtp::entry_stats(block(m.wv), obs.reach, block_mask(mask_v));
  r.initial_loss = losses.front();
  r.final_loss = losses.back();
  auto append = [&](const mtp::MatD& w) {
    r.bytes.append(reinterpret_cast<const char*>(w.a.data()),
                   w.a.size() * sizeof(double));
  };
  append(m.wm);
  append(m.wv);
  append(m.wt);
  return r;
}

struct C6Result {
  double gap_plain = 0.0, gap_nti = 0.0;          // composed projection
  double raw_gap_plain = 0.0, raw_gap_nti = 0.0;  // transfer matrix alone
  std::string ckpt_plain, ckpt_nti, rep_plain, rep_nti;
};

C6Result run_c6() {
  const auto g = mtp::generate_random_dag(kC6Nodes, kC6EdgeProb, kC6GraphSeed);
  const auto ds = mtp::build_dataset(g, kC6M, kC6Fraction,
                                     mtp::derive_seed(kC6GraphSeed, "data"));
  const auto adj = mtp::adjacency_matrix(g);

  C6Result r;
  const auto plain = train_cell(ds, "2tok-linear", kC6DModel, kC6Epochs, kC6Lr,
                                kC6Batch, kC6CellSeed);
  const auto nti = train_cell(ds, "2tok-linear-nti", kC6DModel, kC6Epochs,
                              kC6Lr, kC6Batch, kC6CellSeed);
  // The compared object is the transfer routed through the model's own token
  // maps (emb . w_out . T): the injected next token reaches the second-step
  // logits through exactly this composition, so adjacency structure the
  // optimizer placed in the embeddings instead of T still counts. The raw
  // T-only gaps are kept for the printout.
  r.gap_plain = mtp::adjacency_gap(mtp::composed_transfer(plain), adj);
  r.gap_nti = mtp::adjacency_gap(mtp::composed_transfer(nti), adj);
  r.raw_gap_plain = mtp::adjacency_gap(mtp::project_transfer(plain).t, adj);
  r.raw_gap_nti = mtp::adjacency_gap(mtp::project_transfer(nti).t, adj);
  r.ckpt_plain = checkpoint_bytes(plain, "c6_plain");
  r.ckpt_nti = checkpoint_bytes(nti, "c6_nti");
  r.rep_plain =
      report_bytes(mtp::evaluate(plain, g, ds.test_pairs), "c6_plain_rep");
  r.rep_nti = report_bytes(mtp::evaluate(nti, g, ds.test_pairs), "c6_nti_rep");
  return r;
}

struct C7Cell {
  mtp::Model model;
  mtp::EvalReport rep;
  std::string ckpt, repb;
  std::vector<mtp::PathSample> test_seqs;
};

struct C7Result {
  std::vector<C7Cell> baseline;  // one per graph
  std::vector<C7Cell> enhanced;
};

C7Result run_c7() {
  C7Result r;
  for (int i = 0; i < 3; ++i) {
    const auto g =
        mtp::generate_random_dag(kC7Nodes, kC7EdgeProb, kC7GraphSeeds[i]);
    const auto ds = mtp::build_dataset(
        g, kC7M, kC7Fraction, mtp::derive_seed(kC7GraphSeeds[i], "data"));
    const auto seed = mtp::derive_seed(kC7CellSeed, "graph-" + std::to_string(i));
    for (const char* spec : {kC7Baseline, kC7Enhanced}) {
      auto m = train_cell(ds, spec, kC7DModel, kC7Epochs, kC7Lr, kC7Batch, seed);
      const auto tag = std::string("c7_") + spec + "_" + std::to_string(i);
      C7Cell cell{std::move(m), {}, "", "", ds.test};
      cell.rep = mtp::evaluate(cell.model, g, ds.test_pairs);
      cell.ckpt = checkpoint_bytes(cell.model, tag);
      cell.repb = report_bytes(cell.rep, tag + "_rep");
      (std::string(spec) == kC7Baseline ? r.baseline : r.enhanced)
          .push_back(std::move(cell));
    }
  }
  return r;
}

std::optional<C5Result> g_c5;
std::optional<C6Result> g_c6;
std::optional<C7Result> g_c7;

const C5Result& c5_first() {
  if (!g_c5) g_c5 = run_c5();
  return *g_c5;
}
const C6Result& c6_first() {
  if (!g_c6) g_c6 = run_c6();
  return *g_c6;
}
const C7Result& c7_first() {
  if (!g_c7) g_c7 = run_c7();
  return *g_c7;
}

// ---------------------------------------------------------------------------
// criteria

// 1. closed-form gradients vs central differences, 50 instances, < 30 s
bool criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = mtp::generate_random_dag(
        kInstanceNodes, 0.35,
        mtp::derive_seed(kC1Seed, "graph-" + std::to_string(trial)));
    const auto ds = mtp::build_dataset(
        g, 2, 0.6, mtp::derive_seed(kC1Seed, "data-" + std::to_string(trial)));
    const int vocab = kInstanceNodes + 1;
    const auto counts = mtp::build_counts(ds.train, vocab);
    auto m = mtp::make_simplified(
        vocab, mtp::derive_seed(kC1Seed, "params-" + std::to_string(trial)));
    const auto analytic = mtp::simplified_grads(m, counts);

    // Count-weighted losses here are O(10^3), so the roundoff term of a
    // central difference is ~1e-13/h; h=1e-5 balances it against the O(h^2)
    // truncation term, keeping both comfortably under the 1e-7 gate.
    auto probe = [&](mtp::MatD& mat, const mtp::MatD& grad) {
      const double h = 1e-5;
      for (std::size_t i = 0; i < mat.a.size(); ++i) {
        const double keep = mat.a[i];
        mat.a[i] = keep + h;
        const double up = mtp::simplified_loss(m, counts).total;
        mat.a[i] = keep - h;
        const double dn = mtp::simplified_loss(m, counts).total;
        mat.a[i] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double denom =
            std::max({1.0, std::abs(numeric), std::abs(grad.a[i])});
        worst = std::max(worst, std::abs(numeric - grad.a[i]) / denom);
      }
    };
    probe(m.wm, analytic.wm);
    probe(m.wv, analytic.wv);
    probe(m.wt, analytic.wt);
  }
  REQ(worst < 1e-7);
  REQ(secs(t0, Clock::now()) < 30.0);
  std::printf("       max relative error %.3e\n", worst);
  return true;
}

// 2. gradient sign structure, 100 instances, zero violations, < 60 s
bool criterion2() {
  const auto t0 = Clock::now();
  long long checked = 0, violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = mtp::generate_random_dag(
        kInstanceNodes, 0.35,
        mtp::derive_seed(kC2Seed, "graph-" + std::to_string(trial)));
    const auto ds = mtp::build_dataset(
        g, 2, 0.6, mtp::derive_seed(kC2Seed, "data-" + std::to_string(trial)));
    const auto counts = mtp::build_counts(ds.train, kInstanceNodes + 1);
    const auto m = mtp::make_simplified(
        kInstanceNodes + 1,
        mtp::derive_seed(kC2Seed, "params-" + std::to_string(trial)));
    const auto rep = mtp::verify_theorems(m, counts);
    checked += rep.transfer_checked + rep.channel_checked;
    violations += rep.transfer_violations + rep.channel_violations;
  }
  REQ(checked > 0);
  REQ(violations == 0);
  REQ(secs(t0, Clock::now()) < 60.0);
  std::printf("       %lld signed contributions checked\n", checked);
  return true;
}

// 3. degree classifier vs the literal four-clause recursion, 50 datasets
bool criterion3() {
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = mtp::generate_random_dag(
        30, 0.2, mtp::derive_seed(303, "graph-" + std::to_string(trial)));
    const auto ds = mtp::build_dataset(
        g, 2, 0.5, mtp::derive_seed(303, "data-" + std::to_string(trial)));
    const auto obs = mtp::build_observed(ds.train, 30);

    auto clause1 = [&](int s, int t) {
      for (int u = 0; u < 30; ++u)
        if (obs.adj.at(s, u) && obs.reach.at(t, u)) return true;
      return false;
    };
    auto oracle = [&](int s, int t) {
      if (obs.reach.at(t, s)) return 0;
      if (clause1(s, t)) return 1;
      for (int u = 0; u < 30; ++u)
        if (obs.adj.at(s, u) && !obs.reach.at(t, u) && clause1(u, t)) return 2;
      return 3;
    };
    for (int s = 0; s < 30; ++s)
      for (int t = 0; t < 30; ++t)
        REQ(mtp::classify_degree(s, t, obs) == oracle(s, t));
  }
  return true;
}

// 4. reachability vs an independent transitive closure, 50 graphs
bool criterion4() {
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + trial % 26;  // 5..30
    const auto g = mtp::generate_random_dag(
        n, 0.25, mtp::derive_seed(404, "graph-" + std::to_string(trial)));
    const auto reach = mtp::compute_reachability(g);

    // Floyd-Warshall closure, can_go[s][t] = an edge path s -> t exists
    std::vector<std::vector<char>> can(
        std::size_t(n), std::vector<char>(std::size_t(n), 0));
    for (const auto& [a, b] : g.edges) can[std::size_t(a)][std::size_t(b)] = 1;
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (can[std::size_t(i)][std::size_t(k)] &&
              can[std::size_t(k)][std::size_t(j)])
            can[std::size_t(i)][std::size_t(j)] = 1;
    for (int t = 0; t < n; ++t)
      for (int k = 0; k < n; ++k)
        REQ(reach.at(t, k) == can[std::size_t(k)][std::size_t(t)]);
  }
  return true;
}

// 5. strict ordering of trained factor means under a frozen transfer, < 5 min
bool criterion5() {
  const auto t0 = Clock::now();
  const auto& r = c5_first();
  REQ(r.final_loss < r.initial_loss);
  REQ(r.wm.primary_count > 0);
  REQ(r.wm.learnable_count > 0);
  REQ(r.wm.rest_count > 0);
  REQ(r.wv.primary_count > 0);
  REQ(r.wv.learnable_count > 0);
  REQ(r.wv.rest_count > 0);
  REQ(r.wm.primary_mean > r.wm.learnable_mean);
  REQ(r.wm.learnable_mean > r.wm.rest_mean);
  REQ(r.wv.primary_mean > r.wv.learnable_mean);
  REQ(r.wv.learnable_mean > r.wv.rest_mean);
  REQ(secs(t0, Clock::now()) < 300.0);
  std::printf("       wm: %.3f > %.3f > %.3f   wv: %.3f > %.3f > %.3f\n",
              r.wm.primary_mean, r.wm.learnable_mean, r.wm.rest_mean,
              r.wv.primary_mean, r.wv.learnable_mean, r.wv.rest_mean);
  return true;
}

// 6. transfer-adjacency gap, injection >= 1.5x plain, both positive, <= 2 h
bool criterion6() {
  const auto t0 = Clock::now();
  const auto& r = c6_first();
  REQ(r.gap_plain > 0.0);
  REQ(r.gap_nti > 0.0);
  REQ(r.gap_nti >= 1.5 * r.gap_plain);
  REQ(secs(t0, Clock::now()) < 7200.0);
  std::printf(
      "       composed gap with injection %.4f vs plain %.4f (ratio %.2f); "
      "raw transfer-only gaps %.4f vs %.4f\n",
      r.gap_nti, r.gap_plain, r.gap_nti / r.gap_plain, r.raw_gap_nti,
      r.raw_gap_plain);
  return true;
}

// 7. degree table at reduced scale: monotone baseline + enhanced degree-2
//    lift of >= 3 points over three pinned graphs, <= 6 h
bool criterion7() {
  const auto t0 = Clock::now();
  const auto& r = c7_first();
  REQ(r.baseline.size() == 3);
  REQ(r.enhanced.size() == 3);

  double lift = 0.0;
  for (int i = 0; i < 3; ++i) {
    const auto& base = r.baseline[std::size_t(i)].rep;
    for (int d = 0; d < 4; ++d) REQ(base.by_degree.count(d) == 1);
    for (int d = 0; d + 1 < 4; ++d)
      REQ(base.by_degree.at(d).accuracy > base.by_degree.at(d + 1).accuracy);
    const auto& enh = r.enhanced[std::size_t(i)].rep;
    REQ(enh.by_degree.count(2) == 1);
    lift += enh.by_degree.at(2).accuracy - base.by_degree.at(2).accuracy;
    std::printf(
        "       graph %d: baseline %.3f/%.3f/%.3f/%.3f, enhanced deg2 %.3f\n",
        i, base.by_degree.at(0).accuracy, base.by_degree.at(1).accuracy,
        base.by_degree.at(2).accuracy, base.by_degree.at(3).accuracy,
        enh.by_degree.at(2).accuracy);
  }
  lift /= 3.0;
  std::printf("       mean degree-2 lift %.4f\n", lift);
  REQ(lift >= 0.03);
  REQ(secs(t0, Clock::now()) < 21600.0);
  return true;
}

// 8. averaged attention attends to the target slot at every row, all models
bool criterion8() {
  const auto& r = c7_first();
  for (const auto* group : {&r.baseline, &r.enhanced}) {
    for (const auto& cell : *group) {
      // Sequences are 1-based u_1..u_N in the claims: the target sits at
      // u_2 (0-based column 1) and generation rows are n >= 3 (0-based 2).
      const auto avg = mtp::average_attention(cell.model, cell.test_seqs);
      for (const auto& layer : avg)
        for (const auto& head : layer)
          for (int q = 2; q < head.rows; ++q) {
            int arg = 0;
            for (int k = 1; k <= q; ++k)
              if (head.at(q, k) > head.at(q, arg)) arg = k;
            REQ(arg == 1);
          }
    }
  }
  return true;
}

// 9. four-block world: 73 states, oracle edge set, enhanced >= baseline, <= 3 h
bool criterion9() {
  const auto t0 = Clock::now();
  const auto w = mtp::build_blocksworld(4);
  REQ(w.states.size() == 73);

  // independent move generator over an "x sits on y" encoding
  auto to_on = [](const mtp::BlockState& st) {
    std::vector<int> on(4, -1);
    for (const auto& tower : st)
      for (std::size_t i = 1; i < tower.size(); ++i)
        on[std::size_t(tower[i])] = tower[i - 1];
    return on;
  };
  auto to_state = [](const std::vector<int>& on) {
    mtp::BlockState st;
    for (int b = 0; b < 4; ++b) {
      if (on[std::size_t(b)] != -1) continue;
      std::vector<int> tower{b};
      for (;;) {
        int above = -1;
        for (int x = 0; x < 4; ++x)
          if (on[std::size_t(x)] == tower.back()) above = x;
        if (above == -1) break;
        tower.push_back(above);
      }
      st.push_back(tower);
    }
    return mtp::canonical_state(st);
  };
  std::map<mtp::BlockState, int> index;
  for (int i = 0; i < 73; ++i) index.emplace(w.states[std::size_t(i)], i);
  std::set<std::pair<int, int>> oracle_edges;
  for (int i = 0; i < 73; ++i) {
    const auto on = to_on(w.states[std::size_t(i)]);
    std::vector<char> clear(4, 1);
    for (int b = 0; b < 4; ++b)
      if (on[std::size_t(b)] != -1) clear[std::size_t(on[std::size_t(b)])] = 0;
    for (int b = 0; b < 4; ++b) {
      if (!clear[std::size_t(b)]) continue;
      if (on[std::size_t(b)] != -1) {  // unstack to the table
        auto next = on;
        next[std::size_t(b)] = -1;
        oracle_edges.emplace(i, index.at(to_state(next)));
      }
      for (int y = 0; y < 4; ++y) {  // stack onto another clear block
        if (y == b || !clear[std::size_t(y)] || on[std::size_t(b)] == y) continue;
        auto next = on;
        next[std::size_t(b)] = y;
        oracle_edges.emplace(i, index.at(to_state(next)));
      }
    }
  }
  std::set<std::pair<int, int>> built(w.graph.edges.begin(), w.graph.edges.end());
  REQ(built == oracle_edges);
  REQ(secs(t0, Clock::now()) < 5.0);

  // directional training check at 500 walks
  mtp::BlocksDatasetConfig cfg;
  cfg.walks_per_length = kC9WalksPerLength;
  cfg.n_test = kC9Test;
  cfg.seed = kC9Seed;
  const auto ds = mtp::build_blocks_dataset(w, cfg);
  const auto base = train_cell(ds, kC7Baseline, kC9DModel, kC9Epochs, kC9Lr,
                               kC9Batch, mtp::derive_seed(kC9Seed, "cell"));
  const auto enh = train_cell(ds, kC7Enhanced, kC9DModel, kC9Epochs, kC9Lr,
                              kC9Batch, mtp::derive_seed(kC9Seed, "cell"));
  const auto rep_base = mtp::evaluate(base, w.graph, ds.test_pairs);
  const auto rep_enh = mtp::evaluate(enh, w.graph, ds.test_pairs);
  std::printf("       enhanced %.4f vs baseline %.4f over %lld pairs\n",
              rep_enh.overall.accuracy, rep_base.overall.accuracy,
              rep_base.overall.pairs);
  REQ(rep_enh.overall.accuracy >= rep_base.overall.accuracy);
  REQ(secs(t0, Clock::now()) < 10800.0);
  return true;
}

// 10. identical seeds reproduce every criterion-5..7 artifact byte for byte
bool criterion10() {
  const auto& c5a = c5_first();
  const auto c5b = run_c5();
  REQ(c5a.bytes == c5b.bytes);

  const auto& c6a = c6_first();
  const auto c6b = run_c6();
  REQ(c6a.ckpt_plain == c6b.ckpt_plain);
  REQ(c6a.ckpt_nti == c6b.ckpt_nti);
  REQ(c6a.rep_plain == c6b.rep_plain);
  REQ(c6a.rep_nti == c6b.rep_nti);

  const auto& c7a = c7_first();
  const auto c7b = run_c7();
  for (int i = 0; i < 3; ++i) {
    REQ(c7a.baseline[std::size_t(i)].ckpt == c7b.baseline[std::size_t(i)].ckpt);
    REQ(c7a.baseline[std::size_t(i)].repb == c7b.baseline[std::size_t(i)].repb);
    REQ(c7a.enhanced[std::size_t(i)].ckpt == c7b.enhanced[std::size_t(i)].ckpt);
    REQ(c7a.enhanced[std::size_t(i)].repb == c7b.enhanced[std::size_t(i)].repb);
  }
  return true;
}

struct Criterion {
  int id;
  const char* name;
  bool (*fn)();
};

const Criterion kCriteria[] = {
    {1, "closed-form gradients match finite differences", criterion1},
    {2, "two-ahead gradient sign structure holds", criterion2},
    {3, "degree classifier equals the four-clause oracle", criterion3},
    {4, "reachability equals transitive closure", criterion4},
    {5, "frozen-transfer training orders factor means", criterion5},
    {6, "injection widens the transfer adjacency gap", criterion6},
    {7, "degree table reproduces at reduced scale", criterion7},
    {8, "attention locks onto the target slot", criterion8},
    {9, "four-block world counts, moves and training direction", criterion9},
    {10, "pipelines are byte-reproducible", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && wanted.count(c.id) == 0) continue;
    const auto t0 = Clock::now();
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("       unexpected exception: %s\n", e.what());
      ok = false;
    }
    std::printf("[%s] criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.id,
                c.name, secs(t0, Clock::now()));
    std::fflush(stdout);
    all_pass = all_pass && ok;
  }
  return all_pass ? 0 : 1;
}
