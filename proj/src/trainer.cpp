#include "mtp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"

namespace mtp {

AdamW::AdamW(const std::vector<std::pair<std::string, Tensor>>& params,
             const TrainConfig& cfg)
    : params_(params), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t->numel(), 0.0);
    v_.emplace_back(t->numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& t = params_[p].second;
    t->ensure_grad();
    const bool decayed = t->rank() >= 2;
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < t->v.size(); ++i) {
      const double g = t->g[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg_.adam_eps);
      if (decayed) update += cfg_.weight_decay * t->v[i];
      t->v[i] -= cfg_.lr * update;
    }
  }
}

double clip_gradients(const std::vector<std::pair<std::string, Tensor>>& params,
                      double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    t->ensure_grad();
    for (double g : t->g) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, t] : params)
      for (double& g : t->g) g *= scale;
  }
  return norm;
}

std::vector<EpochStats> train_model(Model& model,
                                    const std::vector<PathSample>& train,
                                    const TrainConfig& cfg) {
  if (train.empty()) throw ContractError("train_model: empty training set");
  if (cfg.epochs < 0) throw ContractError("train_model: negative epoch count");
  if (cfg.batch_size < 1) throw ContractError("train_model: bad batch size");
  for (const auto& s : train) {
    if (s.tokens.size() < 2)
      throw ContractError("train_model: sequences need at least two tokens");
    if (int(s.tokens.size()) > model.config().max_seq_len)
      throw ContractError("train_model: sequence exceeds the model's max_seq_len");
  }

  // Fixed batches: order by (length, original index), chunk, shuffle order
  // per epoch.
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto la = train[std::size_t(a)].tokens.size();
    const auto lb = train[std::size_t(b)].tokens.size();
    return la != lb ? la < lb : a < b;
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
    const auto end = std::min(order.size(), start + std::size_t(cfg.batch_size));
    batches.emplace_back(order.begin() + std::ptrdiff_t(start),
                         order.begin() + std::ptrdiff_t(end));
  }

  AdamW opt(model.params(), cfg);
  const int k = model.config().k_tokens;
  std::vector<EpochStats> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-" + std::to_string(epoch)));
    shuffle_rng.shuffle(batch_order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.per_step.assign(std::size_t(k), 0.0);

    for (int bi : batch_order) {
      const auto& batch = batches[std::size_t(bi)];
      int max_len = 0;
      for (int idx : batch)
        max_len = std::max(max_len, int(train[std::size_t(idx)].tokens.size()));
      const int b = int(batch.size());
      std::vector<int> tokens(std::size_t(b) * max_len, 0);
      std::vector<int> lengths(std::size_t(b), 0);
      for (int r = 0; r < b; ++r) {
        const auto& seq = train[std::size_t(batch[std::size_t(r)])].tokens;
        std::copy(seq.begin(), seq.end(), tokens.begin() + std::size_t(r) * max_len);
        lengths[std::size_t(r)] = int(seq.size());
      }

      Tape tape;
      std::vector<double> per_step;
      auto loss = model.loss(tape, tokens, b, max_len, lengths, &per_step);
      const double value = loss->v[0];
      if (!std::isfinite(value) || value > cfg.divergence_limit)
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              " (batch loss " + std::to_string(value) + ")");

      for (const auto& [name, t] : model.params()) {
        t->ensure_grad();
        t->zero_grad();
      }
      tape.backward(loss);
      clip_gradients(model.params(), cfg.clip_norm);
      opt.step();

      stats.total += value;
      for (int j = 0; j < k; ++j) stats.per_step[std::size_t(j)] += per_step[std::size_t(j)];
    }

    const double nb = double(batches.size());
    stats.total /= nb;
    for (double& s : stats.per_step) s /= nb;
    history.push_back(std::move(stats));
  }

  if (!cfg.history_path.empty()) save_history_csv(history, cfg.history_path);
  return history;
}

void save_history_csv(const std::vector<EpochStats>& history,
                      const std::string& path) {
  std::ostringstream os;
  os << std::setprecision(17);
  const std::size_t k = history.empty() ? 0 : history.front().per_step.size();
  os << "epoch,total";
  for (std::size_t j = 1; j <= k; ++j) os << ",l" << j;
  os << "\n";
  for (const auto& e : history) {
    os << e.epoch << "," << e.total;
    for (double s : e.per_step) os << "," << s;
    os << "\n";
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << os.str();
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace mtp
