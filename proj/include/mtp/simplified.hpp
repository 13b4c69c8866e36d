#pragma once

#include <cstdint>
#include <vector>

#include "mtp/dataset.hpp"
#include "mtp/matrix.hpp"

namespace mtp {

// Sufficient statistics of a training corpus for the two-step factored
// predictor. For every sequence u_1..u_N (terminator included) with announced
// target j = u_2:
//   n1[(i, j, k)]  counts positions n in [1, N-1] with u_n = i, u_{n+1} = k
//   n2[(i, j, k')] counts positions n in [1, N-2] with u_n = i, u_{n+2} = k'
// The future token may be the terminator; the current token never is.
struct CountStats {
  int vocab = 0;
  std::vector<double> n1;  // vocab^3, index (i*vocab + j)*vocab + k
  std::vector<double> n2;

  double& at1(int i, int j, int k) {
    return n1[(std::size_t(i) * vocab + j) * vocab + k];
  }
  double at1(int i, int j, int k) const {
    return n1[(std::size_t(i) * vocab + j) * vocab + k];
  }
  double& at2(int i, int j, int k) {
    return n2[(std::size_t(i) * vocab + j) * vocab + k];
  }
  double at2(int i, int j, int k) const {
    return n2[(std::size_t(i) * vocab + j) * vocab + k];
  }
};

// Dense tables are vocab^3 doubles; refuse vocabularies that would not fit.
CountStats build_counts(const std::vector<PathSample>& train, int vocab);

// Two learned prediction channels plus one transfer matrix, all (vocab x
// vocab). The token one ahead is scored by wm(u_n, .) + wv(u_2, .); the token
// two ahead by (wm wt)(u_n, .) + (wv wt)(u_2, .).
struct SimplifiedModel {
  int vocab = 0;
  MatD wm, wv, wt;
};

SimplifiedModel make_simplified(int vocab, std::uint64_t seed);  // N(0, 0.1^2)

// Overwrites wt with the graph adjacency embedded in token space (terminator
// row and column zero), the frozen-transfer configuration.
void fix_transfer_to_adjacency(SimplifiedModel& m, const BoolMatrix& adj_true);

struct SimplifiedLoss {
  double total = 0.0;
  double offset1 = 0.0;  // one-ahead negative log likelihood, count-weighted
  double offset2 = 0.0;
};
SimplifiedLoss simplified_loss(const SimplifiedModel& m, const CountStats& c);

struct SimplifiedGrads {
  MatD wm, wv, wt;
};
// Closed-form gradient of simplified_loss().total in the model parameters.
SimplifiedGrads simplified_grads(const SimplifiedModel& m, const CountStats& c);

// Sign structure of the two-ahead gradient. For every active context (i, j)
// with prediction error e(k') = p_model(k') - p_data(k'):
//   transfer entries wt(d, k'): when wm(i, d) + wv(j, d) > 0, the context's
//     gradient contribution must carry the sign of e(k');
//   channel entries wm(i, d) / wv(j, d): when wt(d, k') > 0, likewise.
// Exact zero errors are recorded as skipped, never checked.
struct TheoremReport {
  long long transfer_checked = 0;
  long long transfer_violations = 0;
  long long channel_checked = 0;
  long long channel_violations = 0;
  long long skipped = 0;
};
TheoremReport verify_theorems(const SimplifiedModel& m, const CountStats& c);

struct SimplifiedTrainConfig {
  int steps = 2000;
  double lr = 0.05;
  bool fixed_wt = false;          // keep the transfer matrix frozen
  double divergence_limit = 1e7;  // non-finite or larger loss aborts
};

// Plain full-batch gradient descent. Returns steps+1 loss totals: the value
// before any update, then one after each step. Throws DivergenceError.
std::vector<double> train_simplified(SimplifiedModel& m, const CountStats& c,
                                     const SimplifiedTrainConfig& cfg);

// Entries a gradient signal can push up for structural reasons even though
// the underlying relation is absent from the supervision:
//   channel wm(i, k): some observed context (i, *) continues to a true
//     successor of k, while (i, k) itself is not a true edge;
//   channel wv(j, k): some context (*, j) continues to a true successor of
//     k, while k was never generated on the way to j.
// Both are (vocab x vocab) with terminator rows/columns all zero.
BoolMatrix learnable_mask_m(const CountStats& c, const BoolMatrix& adj_true);
BoolMatrix learnable_mask_v(const CountStats& c, const BoolMatrix& adj_true,
                            const BoolMatrix& reach_obs);

}  // namespace mtp
