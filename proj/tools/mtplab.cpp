// mtplab: reproducible experiment driver for the path-planning workbench.
// Every pipeline stage is a subcommand; a master seed deterministically
// derives per-stage streams, so any artifact can be regenerated bit for bit.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtp/analysis.hpp"
#include "mtp/blocksworld.hpp"
#include "mtp/dataset.hpp"
#include "mtp/error.hpp"
#include "mtp/eval.hpp"
#include "mtp/graph.hpp"
#include "mtp/model.hpp"
#include "mtp/rng.hpp"
#include "mtp/simplified.hpp"
#include "mtp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Relative output paths can be redirected wholesale through the environment.
std::string out_path(const std::string& p) {
  const char* root = std::getenv("MTPLAB_OUT_ROOT");
  if (root == nullptr || *root == '\0' || p.empty() || fs::path(p).is_absolute())
    return p;
  return (fs::path(root) / p).string();
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mtp::IoError("cannot open " + path);
  out << text;
  if (!out) throw mtp::IoError("write failed for " + path);
}

int longest_sequence(const mtp::PathDataset& ds) {
  std::size_t longest = 0;
  for (const auto& s : ds.train) longest = std::max(longest, s.tokens.size());
  for (const auto& s : ds.test) longest = std::max(longest, s.tokens.size());
  return int(longest);
}

mtp::DirectedGraph graph_for_dataset(const std::string& graph_flag,
                                     const mtp::PathDataset& ds) {
  if (!graph_flag.empty()) return mtp::load_graph(graph_flag);
  if (!ds.graph_file.empty() && fs::exists(ds.graph_file))
    return mtp::load_graph(ds.graph_file);
  throw mtp::ContractError(
      "no graph available: pass --graph (dataset records none it can find)");
}

// ---------------------------------------------------------------------------
// shared flag bundles

struct BackboneFlags {
  std::string spec = "1tok";
  int d_model = 64;
  int layers = 1;
  int heads = 1;
  int max_seq = 0;  // 0: longest sequence in the dataset

  void attach(CLI::App* cmd) {
    cmd->add_option("--spec", spec,
                    "architecture spec, e.g. 1tok, 2tok-linear-nti, 3tok-tf1");
    cmd->add_option("--d-model", d_model, "embedding width");
    cmd->add_option("--layers", layers, "backbone depth");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--max-seq", max_seq, "position budget (0 = fit dataset)");
  }

  mtp::ModelConfig config(const mtp::PathDataset& ds) const {
    mtp::ModelConfig cfg;
    cfg.vocab = ds.n_nodes + 1;
    cfg.d_model = d_model;
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.max_seq_len = max_seq > 0 ? max_seq : longest_sequence(ds);
    mtp::apply_model_spec(cfg, spec);
    cfg.validate();
    return cfg;
  }
};

struct TrainFlags {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip = 1.0;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "sequences per batch");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    cmd->add_option("--clip", clip, "global gradient-norm clip (0 = off)");
    cmd->add_option("--seed", seed, "master seed");
  }

  mtp::TrainConfig config(const std::string& history_path) const {
    mtp::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.lr = lr;
    tc.weight_decay = weight_decay;
    tc.clip_norm = clip;
    tc.seed = seed;
    tc.history_path = history_path;
    return tc;
  }
};

json train_config_json(const mtp::TrainConfig& tc) {
  return {{"epochs", tc.epochs},       {"batch_size", tc.batch_size},
          {"lr", tc.lr},               {"beta1", tc.beta1},
          {"beta2", tc.beta2},         {"adam_eps", tc.adam_eps},
          {"weight_decay", tc.weight_decay}, {"clip_norm", tc.clip_norm},
          {"divergence_limit", tc.divergence_limit}, {"seed", tc.seed}};
}

// ---------------------------------------------------------------------------
// subcommand payloads

void run_gen_graph(int nodes, double edge_prob, std::uint64_t seed,
                   const std::string& out) {
  const auto g = mtp::generate_random_dag(nodes, edge_prob, seed);
  const auto path = out_path(out);
  ensure_parent_dir(path);
  mtp::save_graph(g, path);
  std::cout << "graph: " << g.n << " nodes, " << g.edges.size() << " edges -> "
            << path << "\n";
}

void run_gen_dataset(const std::string& graph, int m, double train_fraction,
                     std::uint64_t seed, const std::string& out) {
  const auto g = mtp::load_graph(graph);
  const auto ds = mtp::build_dataset(g, m, train_fraction, seed, graph);
  const auto dir = out_path(out);
  fs::create_directories(dir);
  mtp::save_dataset(ds, dir);
  std::cout << "dataset: " << ds.train.size() << " train / " << ds.test.size()
            << " test sequences, " << ds.test_pairs.size() << " query pairs -> "
            << dir << "\n";
}

void run_train(const std::string& dataset, const BackboneFlags& bb,
               const TrainFlags& tf, const std::string& out) {
  const auto ds = mtp::load_dataset(dataset);
  const auto cfg = bb.config(ds);

  const auto dir = out_path(out);
  fs::create_directories(dir);
  const auto model_path = (fs::path(dir) / "model.bin").string();
  const auto history_path = (fs::path(dir) / "history.csv").string();
  const auto run_path = (fs::path(dir) / "run.json").string();

  mtp::Model model(cfg);
  model.init_params(mtp::derive_seed(tf.seed, "init"));
  const auto tc = tf.config(history_path);
  const auto stats = mtp::train_model(model, ds.train, tc);
  mtp::save_checkpoint(model, model_path);

  json run;
  run["tool_version"] = kToolVersion;
  run["run_id"] = mtp::model_spec(cfg) + "-seed" + std::to_string(tf.seed);
  run["dataset_dir"] = dataset;
  run["graph_file"] = ds.graph_file;
  run["master_seed"] = tf.seed;
  run["model_config"] = json::parse(cfg.to_json());
  run["train_config"] = train_config_json(tc);
  run["outputs"] = {{"model", "model.bin"}, {"history", "history.csv"}};
  run["final_loss"] = stats.empty() ? 0.0 : stats.back().total;
  write_text(run_path, run.dump(2) + "\n");

  std::cout << "trained " << mtp::model_spec(cfg) << " for " << tc.epochs
            << " epochs; final loss "
            << (stats.empty() ? 0.0 : stats.back().total) << " -> " << dir
            << "\n";
}

void run_eval(const std::string& model_path, const std::string& dataset,
              const std::string& graph, const std::string& decode,
              double temperature, std::uint64_t seed, const std::string& out) {
  const auto model = mtp::load_checkpoint(model_path);
  const auto ds = mtp::load_dataset(dataset);
  const auto g = graph_for_dataset(graph, ds);

  mtp::GenerateConfig gc;
  if (decode == "greedy") {
    gc.mode = mtp::DecodeMode::Greedy;
  } else if (decode == "sample") {
    gc.mode = mtp::DecodeMode::Sample;
    gc.temperature = temperature;
  } else {
    throw mtp::ContractError("eval: --decode must be greedy or sample");
  }

  const auto rep = mtp::evaluate(model, g, ds.test_pairs, gc, seed);
  const auto path = out_path(out);
  ensure_parent_dir(path);
  mtp::save_report(rep, path);

  std::cout << "eval " << rep.model << " (" << rep.decode << "): overall "
            << rep.overall.correct << "/" << rep.overall.pairs << " = "
            << rep.overall.accuracy;
  for (const auto& [d, b] : rep.by_degree)
    std::cout << "  deg" << d << " " << b.accuracy;
  std::cout << " -> " << path << "\n";
}

void run_analyze(const std::string& model_path, const std::string& graph,
                 const std::string& dataset, int max_attention_seqs,
                 bool dump_attention, const std::string& out) {
  const auto model = mtp::load_checkpoint(model_path);
  const auto& cfg = model.config();

  json j;
  j["tool_version"] = kToolVersion;
  j["model"] = mtp::model_spec(cfg);

  mtp::PathDataset ds;
  bool have_ds = false;
  if (!dataset.empty()) {
    ds = mtp::load_dataset(dataset);
    have_ds = true;
    if (ds.n_nodes + 1 != cfg.vocab)
      throw mtp::ContractError("analyze: dataset vocabulary mismatch");
  }

  // token-space transfer map, when the architecture has one
  if (cfg.head_mode == mtp::HeadMode::SharedTransfer &&
      cfg.transfer == mtp::TransferKind::Linear && cfg.k_tokens >= 2) {
    const auto proj = mtp::project_transfer(model);
    json t;
    t["step"] = proj.step;
    if (!graph.empty()) {
      const auto g = mtp::load_graph(graph);
      if (g.n + 1 != cfg.vocab)
        throw mtp::ContractError("analyze: graph size does not match the model");
      const auto adj = mtp::adjacency_matrix(g);
      t["adjacency_gap"] = mtp::adjacency_gap(proj.t, adj);
      // the same map routed through the model's own embedding/unembedding;
      // structure that training placed in the token maps shows up here
      t["composed_adjacency_gap"] =
          mtp::adjacency_gap(mtp::composed_transfer(model), adj);
      if (have_ds) {
        // split edge cells into walked vs never-walked against the corpus
        const auto obs = mtp::build_observed(ds.train, g.n);
        mtp::BoolMatrix walked(g.n, g.n), unwalked(g.n, g.n);
        for (int i = 0; i < g.n; ++i)
          for (int k = 0; k < g.n; ++k) {
            if (adj.at(i, k) && obs.adj.at(i, k)) walked.at(i, k) = 1;
            if (adj.at(i, k) && !obs.adj.at(i, k)) unwalked.at(i, k) = 1;
          }
        mtp::MatD node_block(g.n, g.n);
        for (int i = 0; i < g.n; ++i)
          for (int k = 0; k < g.n; ++k) node_block.at(i, k) = proj.t.at(i, k);
        const auto st = mtp::entry_stats(node_block, walked, unwalked);
        t["entry_means"] = {{"walked_edges", st.primary_mean},
                            {"walked_count", st.primary_count},
                            {"unwalked_edges", st.learnable_mean},
                            {"unwalked_count", st.learnable_count},
                            {"non_edges", st.rest_mean},
                            {"non_edge_count", st.rest_count}};
      }
    }
    t["matrix"] = proj.t.a;
    j["transfer"] = t;
  }

  if (have_ds) {
    const auto& pool = ds.test.empty() ? ds.train : ds.test;
    std::vector<mtp::PathSample> seqs(
        pool.begin(),
        pool.begin() + std::min<std::size_t>(pool.size(),
                                             std::size_t(max_attention_seqs)));
    const auto avg = mtp::average_attention(model, seqs);
    json att;
    att["sequences"] = seqs.size();
    const int n_min = avg[0][0].rows;
    att["positions"] = n_min;
    json frac = json::array();
    for (int l = 0; l < cfg.n_layers; ++l)
      for (int h = 0; h < cfg.n_heads; ++h) {
        const auto& m = avg[std::size_t(l)][std::size_t(h)];
        // Rows/columns are 1-based u_1..u_N in the report: the announced
        // target sits at position 2 (0-based column 1) and generation rows
        // are positions >= 3 (0-based query 2 onward).
        int hits = 0, rows = 0;
        for (int q = 2; q < n_min; ++q) {
          int arg = 0;
          for (int k = 1; k <= q; ++k)
            if (m.at(q, k) > m.at(q, arg)) arg = k;
          ++rows;
          hits += arg == 1 ? 1 : 0;
        }
        frac.push_back({{"layer", l},
                        {"head", h},
                        {"rows", rows},
                        {"argmax_at_2_fraction",
                         rows > 0 ? double(hits) / double(rows) : 0.0}});
      }
    att["argmax_at_2"] = frac;
    if (dump_attention) {
      json maps = json::array();
      for (const auto& layer : avg) {
        json row = json::array();
        for (const auto& head : layer) row.push_back(head.a);
        maps.push_back(row);
      }
      att["maps"] = maps;
    }
    j["attention"] = att;
  }

  const auto path = out_path(out);
  write_text(path, j.dump(2) + "\n");
  std::cout << "analysis -> " << path << "\n";
}

// node-block submatrix and mask plumbing for the simplified-model reports
json simplified_summary(const mtp::SimplifiedModel& m,
                        const mtp::CountStats& counts,
                        const std::vector<double>& losses,
                        const mtp::SimplifiedTrainConfig& cfg,
                        const std::string& graph,
                        const std::vector<mtp::PathSample>& train_corpus,
                        int n_nodes) {
  json j;
  j["tool_version"] = kToolVersion;
  j["vocab"] = m.vocab;
  j["steps"] = cfg.steps;
  j["lr"] = cfg.lr;
  j["fixed_wt"] = cfg.fixed_wt;
  j["initial_loss"] = losses.front();
  j["final_loss"] = losses.back();
  j["wm"] = m.wm.a;
  j["wv"] = m.wv.a;
  j["wt"] = m.wt.a;

  if (!graph.empty()) {
    const auto g = mtp::load_graph(graph);
    if (g.n != n_nodes)
      throw mtp::ContractError("simplified: graph does not match the dataset");
    const auto adj = mtp::adjacency_matrix(g);
    const auto obs = mtp::build_observed(train_corpus, g.n);
    const auto mask_m = mtp::learnable_mask_m(counts, adj);
    const auto mask_v = mtp::learnable_mask_v(counts, adj, obs.reach);

    auto block = [&](const mtp::MatD& w) {
      mtp::MatD b(g.n, g.n);
      for (int i = 0; i < g.n; ++i)
        for (int k = 0; k < g.n; ++k) b.at(i, k) = w.at(i, k);
      return b;
    };
    auto block_mask = [&](const mtp::BoolMatrix& w) {
      mtp::BoolMatrix b(g.n, g.n);
      for (int i = 0; i < g.n; ++i)
        for (int k = 0; k < g.n; ++k) b.at(i, k) = w.at(i, k);
      return b;
    };

    const auto wm_stats = mtp::entry_stats(block(m.wm), adj, block_mask(mask_m));
    const auto wv_stats =
        mtp::entry_stats(block(m.wv), obs.reach, block_mask(mask_v));
    j["wm_stats"] = {{"adjacency_mean", wm_stats.primary_mean},
                     {"adjacency_count", wm_stats.primary_count},
                     {"learnable_mean", wm_stats.learnable_mean},
                     {"learnable_count", wm_stats.learnable_count},
                     {"other_mean", wm_stats.rest_mean},
                     {"other_count", wm_stats.rest_count}};
    j["wv_stats"] = {{"reach_mean", wv_stats.primary_mean},
                     {"reach_count", wv_stats.primary_count},
                     {"learnable_mean", wv_stats.learnable_mean},
                     {"learnable_count", wv_stats.learnable_count},
                     {"other_mean", wv_stats.rest_mean},
                     {"other_count", wv_stats.rest_count}};
    j["wt_adjacency_gap"] = mtp::adjacency_gap(m.wt, adj);
  }
  return j;
}

void run_simplified_train(const std::string& dataset, int steps, double lr,
                          std::uint64_t seed, bool fixed_wt,
                          const std::string& graph, const std::string& out,
                          const std::string& losses_out) {
  const auto ds = mtp::load_dataset(dataset);
  const int vocab = ds.n_nodes + 1;
  const auto counts = mtp::build_counts(ds.train, vocab);
  auto m = mtp::make_simplified(vocab, mtp::derive_seed(seed, "simplified-init"));
  if (fixed_wt) {
    if (graph.empty())
      throw mtp::ContractError("simplified train: --fixed-wt needs --graph");
    mtp::fix_transfer_to_adjacency(
        m, mtp::adjacency_matrix(mtp::load_graph(graph)));
  }
  mtp::SimplifiedTrainConfig cfg;
  cfg.steps = steps;
  cfg.lr = lr;
  cfg.fixed_wt = fixed_wt;
  const auto losses = mtp::train_simplified(m, counts, cfg);

  if (!losses_out.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
      csv << i << "," << losses[i] << "\n";
    write_text(out_path(losses_out), csv.str());
  }
  const auto j =
      simplified_summary(m, counts, losses, cfg, graph, ds.train, ds.n_nodes);
  write_text(out_path(out), j.dump(2) + "\n");
  std::cout << "simplified train: loss " << losses.front() << " -> "
            << losses.back() << " over " << steps << " steps -> "
            << out_path(out) << "\n";
}

void run_simplified_verify(int trials, int nodes, std::uint64_t seed,
                           const std::string& dataset) {
  long long checked = 0, violations = 0, skipped = 0;
  mtp::CountStats fixed_counts;
  int fixed_vocab = 0;
  if (!dataset.empty()) {
    const auto ds = mtp::load_dataset(dataset);
    fixed_vocab = ds.n_nodes + 1;
    fixed_counts = mtp::build_counts(ds.train, fixed_vocab);
  }
  for (int trial = 0; trial < trials; ++trial) {
    mtp::CountStats counts;
    int vocab = 0;
    if (!dataset.empty()) {
      vocab = fixed_vocab;
      counts = fixed_counts;
    } else {
      const auto g = mtp::generate_random_dag(
          nodes, 0.35, mtp::derive_seed(seed, "graph-" + std::to_string(trial)));
      const auto ds = mtp::build_dataset(
          g, 2, 0.6, mtp::derive_seed(seed, "data-" + std::to_string(trial)));
      vocab = nodes + 1;
      counts = mtp::build_counts(ds.train, vocab);
    }
    const auto m = mtp::make_simplified(
        vocab, mtp::derive_seed(seed, "params-" + std::to_string(trial)));
    const auto rep = mtp::verify_theorems(m, counts);
    checked += rep.transfer_checked + rep.channel_checked;
    violations += rep.transfer_violations + rep.channel_violations;
    skipped += rep.skipped;
  }
  json j{{"trials", trials},
         {"checked", checked},
         {"violations", violations},
         {"skipped", skipped}};
  std::cout << j.dump() << "\n";
  if (violations > 0) throw mtp::ContractError("sign property violated");
}

void run_simplified_gradcheck(int trials, int nodes, std::uint64_t seed,
                              double tolerance) {
  if (nodes + 1 > 10)
    throw mtp::ContractError("gradcheck: instances are meant to stay small");
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto g = mtp::generate_random_dag(
        nodes, 0.35, mtp::derive_seed(seed, "graph-" + std::to_string(trial)));
    const auto ds = mtp::build_dataset(
        g, 2, 0.6, mtp::derive_seed(seed, "data-" + std::to_string(trial)));
    const int vocab = nodes + 1;
    const auto counts = mtp::build_counts(ds.train, vocab);
    auto m = mtp::make_simplified(
        vocab, mtp::derive_seed(seed, "params-" + std::to_string(trial)));
    const auto analytic = mtp::simplified_grads(m, counts);

    auto probe = [&](mtp::MatD& mat, const mtp::MatD& grad) {
      const double h = 1e-6;
      for (std::size_t idx = 0; idx < mat.a.size(); ++idx) {
        const double keep = mat.a[idx];
        mat.a[idx] = keep + h;
        const double up = mtp::simplified_loss(m, counts).total;
        mat.a[idx] = keep - h;
        const double dn = mtp::simplified_loss(m, counts).total;
        mat.a[idx] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double denom = std::max({1.0, std::abs(numeric), std::abs(grad.a[idx])});
        worst = std::max(worst, std::abs(numeric - grad.a[idx]) / denom);
      }
    };
    probe(m.wm, analytic.wm);
    probe(m.wv, analytic.wv);
    probe(m.wt, analytic.wt);
  }
  json j{{"trials", trials}, {"max_rel_err", worst}, {"tolerance", tolerance}};
  std::cout << j.dump() << "\n";
  if (!(worst < tolerance))
    throw mtp::ContractError("gradient check exceeded tolerance");
}

void run_blocks_enumerate(int blocks, const std::string& out) {
  const auto w = mtp::build_blocksworld(blocks);
  if (!out.empty()) mtp::save_states(w, out_path(out));
  json j{{"blocks", blocks},
         {"states", w.states.size()},
         {"edges", w.graph.edges.size()}};
  std::cout << j.dump() << "\n";
}

void run_blocks_dataset(int blocks, int walks_per_length, int n_test,
                        std::uint64_t seed, const std::string& out) {
  const auto w = mtp::build_blocksworld(blocks);
  mtp::BlocksDatasetConfig cfg;
  cfg.walks_per_length = walks_per_length;
  cfg.n_test = n_test;
  cfg.seed = seed;
  auto ds = mtp::build_blocks_dataset(w, cfg);

  const auto dir = out_path(out);
  fs::create_directories(dir);
  const auto graph_path = (fs::path(dir) / "graph.json").string();
  mtp::save_graph(w.graph, graph_path);
  ds.graph_file = graph_path;
  mtp::save_dataset(ds, dir);
  mtp::save_states(w, (fs::path(dir) / "states.json").string());
  std::cout << "blocksworld-" << blocks << ": " << w.states.size()
            << " states, " << ds.train.size() << " train / " << ds.test.size()
            << " test sequences -> " << dir << "\n";
}

void run_sweep(int graphs, int nodes, double edge_prob, int m,
               double train_fraction, const std::vector<std::string>& models,
               const BackboneFlags& bb, const TrainFlags& tf,
               const std::string& out) {
  if (graphs < 1) throw mtp::ContractError("sweep: need at least one graph");
  if (models.empty()) throw mtp::ContractError("sweep: need at least one model");

  const auto dir = out_path(out);
  fs::create_directories(dir);

  // per-cell derived seeds make every (graph, model) cell independently
  // reproducible no matter how the sweep is sliced
  std::vector<mtp::PathDataset> datasets;
  std::vector<mtp::DirectedGraph> gs;
  for (int i = 0; i < graphs; ++i) {
    const auto gseed = mtp::derive_seed(tf.seed, "graph-" + std::to_string(i));
    const auto dseed = mtp::derive_seed(tf.seed, "dataset-" + std::to_string(i));
    gs.push_back(mtp::generate_random_dag(nodes, edge_prob, gseed));
    datasets.push_back(mtp::build_dataset(gs.back(), m, train_fraction, dseed));
  }

  std::ostringstream csv;
  csv << "model,degree,graph_acc,stderr,path_acc\n";
  char line[256];

  for (const auto& spec : models) {
    std::vector<mtp::EvalReport> reports;
    for (int i = 0; i < graphs; ++i) {
      BackboneFlags cell = bb;
      cell.spec = spec;
      const auto cfg = cell.config(datasets[std::size_t(i)]);
      mtp::Model model(cfg);
      model.init_params(mtp::derive_seed(
          tf.seed, "init-" + std::to_string(i) + "-" + spec));
      TrainFlags cell_tf = tf;
      cell_tf.seed =
          mtp::derive_seed(tf.seed, "train-" + std::to_string(i) + "-" + spec);
      mtp::train_model(model, datasets[std::size_t(i)].train,
                       cell_tf.config(""));
      reports.push_back(mtp::evaluate(model, gs[std::size_t(i)],
                                      datasets[std::size_t(i)].test_pairs));
      std::cout << "sweep: " << spec << " graph " << i << " overall "
                << reports.back().overall.accuracy << "\n";
    }
    const auto agg = mtp::aggregate_reports(reports);
    for (const auto& [deg, bucket] : agg.by_degree) {
      std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f,%.6f\n", spec.c_str(),
                    deg, bucket.graph_acc, bucket.graph_stderr, bucket.path_acc);
      csv << line;
    }
    std::snprintf(line, sizeof line, "%s,all,%.6f,%.6f,%.6f\n", spec.c_str(),
                  agg.overall.graph_acc, agg.overall.graph_stderr,
                  agg.overall.path_acc);
    csv << line;
  }

  write_text((fs::path(dir) / "results.csv").string(), csv.str());

  json cfgj;
  cfgj["tool_version"] = kToolVersion;
  cfgj["graphs"] = graphs;
  cfgj["nodes"] = nodes;
  cfgj["edge_prob"] = edge_prob;
  cfgj["m"] = m;
  cfgj["train_fraction"] = train_fraction;
  cfgj["models"] = models;
  cfgj["d_model"] = bb.d_model;
  cfgj["layers"] = bb.layers;
  cfgj["heads"] = bb.heads;
  cfgj["train"] = train_config_json(tf.config(""));
  write_text((fs::path(dir) / "config.json").string(), cfgj.dump(2) + "\n");
  std::cout << "sweep -> " << (fs::path(dir) / "results.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"path-planning transformer workbench"};
  app.require_subcommand(1);

  // gen-graph
  auto* gg = app.add_subcommand("gen-graph", "sample a random layered digraph");
  int gg_nodes = 20;
  double gg_p = 0.2;
  std::uint64_t gg_seed = 0;
  std::string gg_out = "graph.json";
  gg->add_option("--nodes", gg_nodes)->required();
  gg->add_option("--edge-prob", gg_p)->required();
  gg->add_option("--seed", gg_seed);
  gg->add_option("--out", gg_out)->required();

  // gen-dataset
  auto* gd = app.add_subcommand("gen-dataset", "walk corpora from a graph");
  std::string gd_graph, gd_out;
  int gd_m = 10;
  double gd_fraction = 0.5;
  std::uint64_t gd_seed = 0;
  gd->add_option("--graph", gd_graph)->required();
  gd->add_option("--m", gd_m, "walks per training pair");
  gd->add_option("--train-fraction", gd_fraction);
  gd->add_option("--seed", gd_seed);
  gd->add_option("--out", gd_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model on a dataset");
  std::string tr_dataset, tr_out;
  BackboneFlags tr_bb;
  TrainFlags tr_tf;
  tr->add_option("--dataset", tr_dataset)->required();
  tr_bb.attach(tr);
  tr_tf.attach(tr);
  tr->add_option("--out", tr_out, "run directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score generated paths");
  std::string ev_model, ev_dataset, ev_graph, ev_out, ev_decode = "greedy";
  double ev_temp = 1.0;
  std::uint64_t ev_seed = 0;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--graph", ev_graph, "defaults to the dataset's graph file");
  ev->add_option("--decode", ev_decode, "greedy|sample");
  ev->add_option("--temperature", ev_temp);
  ev->add_option("--seed", ev_seed);
  ev->add_option("--out", ev_out)->required();

  // analyze
  auto* an = app.add_subcommand("analyze", "inspect a trained checkpoint");
  std::string an_model, an_graph, an_dataset, an_out;
  int an_seqs = 200;
  bool an_dump = false;
  an->add_option("--model", an_model)->required();
  an->add_option("--graph", an_graph);
  an->add_option("--dataset", an_dataset);
  an->add_option("--max-attention-seqs", an_seqs);
  an->add_flag("--dump-attention", an_dump);
  an->add_option("--out", an_out)->required();

  // simplified
  auto* si = app.add_subcommand("simplified", "count-based two-step model");
  si->require_subcommand(1);

  auto* st = si->add_subcommand("train", "gradient descent on count tables");
  std::string st_dataset, st_graph, st_out = "simplified.json", st_losses;
  int st_steps = 2000;
  double st_lr = 0.05;
  std::uint64_t st_seed = 0;
  bool st_fixed = false;
  st->add_option("--dataset", st_dataset)->required();
  st->add_option("--steps", st_steps);
  st->add_option("--lr", st_lr);
  st->add_option("--seed", st_seed);
  st->add_flag("--fixed-wt", st_fixed, "freeze the transfer to true adjacency");
  st->add_option("--graph", st_graph, "enables mask/ordering statistics");
  st->add_option("--out", st_out, "summary JSON");
  st->add_option("--losses", st_losses, "per-step loss CSV");

  auto* sv = si->add_subcommand("verify", "gradient sign properties");
  int sv_trials = 100, sv_nodes = 9;
  std::uint64_t sv_seed = 0;
  std::string sv_dataset;
  sv->add_option("--trials", sv_trials);
  sv->add_option("--nodes", sv_nodes);
  sv->add_option("--seed", sv_seed);
  sv->add_option("--dataset", sv_dataset, "use this corpus instead of random ones");

  auto* sg = si->add_subcommand("gradcheck", "closed form vs finite differences");
  int sg_trials = 50, sg_nodes = 9;
  std::uint64_t sg_seed = 0;
  double sg_tol = 1e-7;
  sg->add_option("--trials", sg_trials);
  sg->add_option("--nodes", sg_nodes);
  sg->add_option("--seed", sg_seed);
  sg->add_option("--tolerance", sg_tol);

  // blocksworld
  auto* bw = app.add_subcommand("blocksworld", "stacking-puzzle state graphs");
  bw->require_subcommand(1);

  auto* be = bw->add_subcommand("enumerate", "count and dump states");
  int be_blocks = 4;
  std::string be_out;
  be->add_option("--blocks", be_blocks)->required();
  be->add_option("--out", be_out, "states JSON");

  auto* bd = bw->add_subcommand("dataset", "move-path corpora");
  int bd_blocks = 4, bd_walks = 1000, bd_test = 5000;
  std::uint64_t bd_seed = 0;
  std::string bd_out;
  bd->add_option("--blocks", bd_blocks)->required();
  bd->add_option("--walks-per-length", bd_walks);
  bd->add_option("--n-test", bd_test);
  bd->add_option("--seed", bd_seed);
  bd->add_option("--out", bd_out, "output directory")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "graphs x architectures grid");
  int sw_graphs = 2, sw_nodes = 20, sw_m = 10;
  double sw_p = 0.2, sw_fraction = 0.5;
  std::vector<std::string> sw_models;
  BackboneFlags sw_bb;
  TrainFlags sw_tf;
  std::string sw_out;
  sw->add_option("--graphs", sw_graphs);
  sw->add_option("--nodes", sw_nodes);
  sw->add_option("--edge-prob", sw_p);
  sw->add_option("--m", sw_m);
  sw->add_option("--train-fraction", sw_fraction);
  sw->add_option("--models", sw_models, "comma-separated spec list")
      ->required()
      ->delimiter(',');
  sw_bb.attach(sw);
  sw_tf.attach(sw);
  sw->add_option("--out", sw_out, "output directory")->required();

  try {
    app.parse(argc, argv);

    if (gg->parsed()) run_gen_graph(gg_nodes, gg_p, gg_seed, gg_out);
    if (gd->parsed())
      run_gen_dataset(gd_graph, gd_m, gd_fraction, gd_seed, gd_out);
    if (tr->parsed()) run_train(tr_dataset, tr_bb, tr_tf, tr_out);
    if (ev->parsed())
      run_eval(ev_model, ev_dataset, ev_graph, ev_decode, ev_temp, ev_seed,
               ev_out);
    if (an->parsed())
      run_analyze(an_model, an_graph, an_dataset, an_seqs, an_dump, an_out);
    if (si->parsed()) {
      if (st->parsed())
        run_simplified_train(st_dataset, st_steps, st_lr, st_seed, st_fixed,
                             st_graph, st_out, st_losses);
      if (sv->parsed())
        run_simplified_verify(sv_trials, sv_nodes, sv_seed, sv_dataset);
      if (sg->parsed())
        run_simplified_gradcheck(sg_trials, sg_nodes, sg_seed, sg_tol);
    }
    if (bw->parsed()) {
      if (be->parsed()) run_blocks_enumerate(be_blocks, be_out);
      if (bd->parsed())
        run_blocks_dataset(bd_blocks, bd_walks, bd_test, bd_seed, bd_out);
    }
    if (sw->parsed())
      run_sweep(sw_graphs, sw_nodes, sw_p, sw_m, sw_fraction, sw_models, sw_bb,
                sw_tf, sw_out);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // prints help or a usage error in CLI11's format
  } catch (const mtp::ContractError& e) {
    std::cerr << json{{"error", "contract"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const mtp::IoError& e) {
    std::cerr << json{{"error", "io"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  } catch (const mtp::SchemaError& e) {
    std::cerr << json{{"error", "schema"}, {"message", e.what()}}.dump() << "\n";
    return 4;
  } catch (const mtp::DivergenceError& e) {
    std::cerr << json{{"error", "divergence"}, {"message", e.what()}}.dump()
              << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}
