#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtp/dataset.hpp"
#include "mtp/model.hpp"

namespace mtp {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;     // decoupled decay, matrices only (rank >= 2)
  double clip_norm = 1.0;         // global gradient norm ceiling; <= 0 disables
  double divergence_limit = 1e4;  // non-finite or larger batch loss aborts
  std::uint64_t seed = 0;         // stream for per-epoch batch-order shuffles
  std::string history_path;       // per-epoch loss CSV, empty to skip
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double total = 0.0;
  std::vector<double> per_step;  // one entry per prediction step
};

// Decoupled-weight-decay Adam over a model's parameter registry. Parameter
// and moment iteration order is the registry order, so updates are
// bit-reproducible.
class AdamW {
 public:
  AdamW(const std::vector<std::pair<std::string, Tensor>>& params,
        const TrainConfig& cfg);
  // Applies one update from the gradients currently stored on the params.
  void step();

 private:
  const std::vector<std::pair<std::string, Tensor>>& params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(const std::vector<std::pair<std::string, Tensor>>& params,
                      double max_norm);

// Epoch loop: sequences are bucketed by length into fixed batches (sorted by
// (length, index), chunked), the batch order is reshuffled each epoch from a
// seed derived as derive_seed(seed, "epoch-<e>"), and each batch is
// right-padded to its own maximum length. Reported epoch losses are plain
// means over the epoch's batch losses. Throws DivergenceError when a batch
// loss is non-finite or exceeds divergence_limit.
std::vector<EpochStats> train_model(Model& model,
                                    const std::vector<PathSample>& train,
                                    const TrainConfig& cfg);

// "epoch,total,l1..lK" rows, one per epoch, full double precision.
void save_history_csv(const std::vector<EpochStats>& history,
                      const std::string& path);

}  // namespace mtp
