#include "mtp/simplified.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"
#include "mtp/tensor.hpp"

namespace mtp {

namespace {

constexpr int kMaxDenseVocab = 160;  // two vocab^3 double tables, ~65 MB

MatD zeros(int v) { return MatD(v, v); }

// logits row for context (i, j) under channel matrices a, b
void context_logits(const MatD& a, const MatD& b, int i, int j, double* out) {
  const int v = a.cols;
  const double* ra = a.a.data() + std::size_t(i) * v;
  const double* rb = b.a.data() + std::size_t(j) * v;
  for (int k = 0; k < v; ++k) out[k] = ra[k] + rb[k];
}

double log_sum_exp(const double* x, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return std::log(s) + mx;
}

// C += A^T @ B for (v x v) matrices, through the shared deterministic kernel.
void gemm_at_b(const MatD& a, const MatD& b, MatD& c) {
  const int v = a.rows;
  std::vector<double> at(std::size_t(v) * v);
  for (int r = 0; r < v; ++r)
    for (int s = 0; s < v; ++s) at[std::size_t(s) * v + r] = a.at(r, s);
  detail::gemm_acc(v, v, v, at.data(), b.a.data(), c.a.data());
}

// C += A @ B^T
void gemm_a_bt(const MatD& a, const MatD& b, MatD& c) {
  const int v = a.rows;
  std::vector<double> bt(std::size_t(v) * v);
  for (int r = 0; r < v; ++r)
    for (int s = 0; s < v; ++s) bt[std::size_t(s) * v + r] = b.at(r, s);
  detail::gemm_acc(v, v, v, a.a.data(), bt.data(), c.a.data());
}

MatD matmul(const MatD& a, const MatD& b) {
  MatD c(a.rows, b.cols);
  detail::gemm_acc(a.rows, a.cols, b.cols, a.a.data(), b.a.data(), c.a.data());
  return c;
}

}  // namespace

CountStats build_counts(const std::vector<PathSample>& train, int vocab) {
  if (vocab < 2) throw ContractError("build_counts: vocab must be at least 2");
  if (vocab > kMaxDenseVocab)
    throw ContractError("build_counts: vocabulary too large for dense count tables (" +
                        std::to_string(vocab) + " > " +
                        std::to_string(kMaxDenseVocab) + ")");
  CountStats c;
  c.vocab = vocab;
  c.n1.assign(std::size_t(vocab) * vocab * vocab, 0.0);
  c.n2.assign(c.n1.size(), 0.0);
  for (const auto& s : train) {
    const auto& u = s.tokens;
    if (u.size() < 2) throw ContractError("build_counts: sequence shorter than 2");
    for (int tk : u)
      if (tk < 0 || tk >= vocab)
        throw ContractError("build_counts: token id out of range");
    const int j = u[1];
    const int n = int(u.size());
    for (int p = 0; p + 1 < n; ++p) c.at1(u[std::size_t(p)], j, u[std::size_t(p) + 1]) += 1.0;
    for (int p = 0; p + 2 < n; ++p) c.at2(u[std::size_t(p)], j, u[std::size_t(p) + 2]) += 1.0;
  }
  return c;
}

SimplifiedModel make_simplified(int vocab, std::uint64_t seed) {
  if (vocab < 2) throw ContractError("make_simplified: vocab must be at least 2");
  SimplifiedModel m;
  m.vocab = vocab;
  m.wm = zeros(vocab);
  m.wv = zeros(vocab);
  m.wt = zeros(vocab);
  Rng rng(seed);
  for (double& x : m.wm.a) x = 0.1 * rng.normal();
  for (double& x : m.wv.a) x = 0.1 * rng.normal();
  for (double& x : m.wt.a) x = 0.1 * rng.normal();
  return m;
}

void fix_transfer_to_adjacency(SimplifiedModel& m, const BoolMatrix& adj_true) {
  if (adj_true.rows != adj_true.cols || adj_true.rows > m.vocab)
    throw ContractError("fix_transfer_to_adjacency: adjacency does not fit the vocab");
  std::fill(m.wt.a.begin(), m.wt.a.end(), 0.0);
  for (int i = 0; i < adj_true.rows; ++i)
    for (int k = 0; k < adj_true.cols; ++k)
      if (adj_true.at(i, k)) m.wt.at(i, k) = 1.0;
}

namespace {

// Shared traversal: for each active context of one offset table, hand the
// caller (i, j, total count, data counts row, logits row).
template <typename Fn>
void for_each_context(const CountStats& c, const std::vector<double>& table,
                      const MatD& a, const MatD& b, Fn&& fn) {
  const int v = c.vocab;
  std::vector<double> logits(std::size_t(v), 0.0);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) {
      const double* row = table.data() + (std::size_t(i) * v + j) * v;
      double total = 0.0;
      for (int k = 0; k < v; ++k) total += row[k];
      if (total == 0.0) continue;
      context_logits(a, b, i, j, logits.data());
      fn(i, j, total, row, logits.data());
    }
  }
}

double offset_loss(const CountStats& c, const std::vector<double>& table,
                   const MatD& a, const MatD& b) {
  const int v = c.vocab;
  double loss = 0.0;
  for_each_context(c, table, a, b,
                   [&](int, int, double total, const double* row, const double* logits) {
                     const double lse = log_sum_exp(logits, v);
                     double dot = 0.0;
                     for (int k = 0; k < v; ++k) dot += row[k] * logits[k];
                     loss += total * lse - dot;
                   });
  return loss;
}

// Accumulates dL/d(logits) rows into per-channel gradients:
//   ga(i, .) += count * (softmax(logits) - p_data)
//   gb(j, .) += the same row
void offset_error_grads(const CountStats& c, const std::vector<double>& table,
                        const MatD& a, const MatD& b, MatD& ga, MatD& gb) {
  const int v = c.vocab;
  std::vector<double> err(std::size_t(v), 0.0);
  for_each_context(c, table, a, b,
                   [&](int i, int j, double total, const double* row, const double* logits) {
                     double mx = logits[0];
                     for (int k = 1; k < v; ++k) mx = std::max(mx, logits[k]);
                     double s = 0.0;
                     for (int k = 0; k < v; ++k) {
                       err[std::size_t(k)] = std::exp(logits[k] - mx);
                       s += err[std::size_t(k)];
                     }
                     const double inv = 1.0 / s;
                     for (int k = 0; k < v; ++k)
                       err[std::size_t(k)] = total * (err[std::size_t(k)] * inv) - row[k];
                     double* gar = ga.a.data() + std::size_t(i) * v;
                     double* gbr = gb.a.data() + std::size_t(j) * v;
                     for (int k = 0; k < v; ++k) {
                       gar[k] += err[std::size_t(k)];
                       gbr[k] += err[std::size_t(k)];
                     }
                   });
}

void check_model_counts(const SimplifiedModel& m, const CountStats& c) {
  if (m.vocab != c.vocab)
    throw ContractError("simplified model and counts disagree on vocab");
  if (m.wm.rows != m.vocab || m.wm.cols != m.vocab || m.wv.rows != m.vocab ||
      m.wv.cols != m.vocab || m.wt.rows != m.vocab || m.wt.cols != m.vocab)
    throw ContractError("simplified model matrices must be vocab x vocab");
}

}  // namespace

SimplifiedLoss simplified_loss(const SimplifiedModel& m, const CountStats& c) {
  check_model_counts(m, c);
  SimplifiedLoss out;
  out.offset1 = offset_loss(c, c.n1, m.wm, m.wv);
  const MatD a2 = matmul(m.wm, m.wt);
  const MatD b2 = matmul(m.wv, m.wt);
  out.offset2 = offset_loss(c, c.n2, a2, b2);
  out.total = out.offset1 + out.offset2;
  return out;
}

SimplifiedGrads simplified_grads(const SimplifiedModel& m, const CountStats& c) {
  check_model_counts(m, c);
  const int v = m.vocab;
  SimplifiedGrads g{zeros(v), zeros(v), zeros(v)};

  // One ahead: the channels are scored directly.
  offset_error_grads(c, c.n1, m.wm, m.wv, g.wm, g.wv);

  // Two ahead: errors land on the transferred channels, then chain through.
  const MatD a2 = matmul(m.wm, m.wt);
  const MatD b2 = matmul(m.wv, m.wt);
  MatD ga = zeros(v), gb = zeros(v);
  offset_error_grads(c, c.n2, a2, b2, ga, gb);

  gemm_a_bt(ga, m.wt, g.wm);               // d/dwm  += ga wt^T
  gemm_a_bt(gb, m.wt, g.wv);               // d/dwv  += gb wt^T
  gemm_at_b(m.wm, ga, g.wt);               // d/dwt  += wm^T ga
  gemm_at_b(m.wv, gb, g.wt);               //        += wv^T gb
  return g;
}

TheoremReport verify_theorems(const SimplifiedModel& m, const CountStats& c) {
  check_model_counts(m, c);
  const int v = m.vocab;
  TheoremReport rep;

  const MatD a2 = matmul(m.wm, m.wt);
  const MatD b2 = matmul(m.wv, m.wt);
  std::vector<double> err(std::size_t(v), 0.0);
  for_each_context(
      c, c.n2, a2, b2,
      [&](int i, int j, double total, const double* row, const double* logits) {
        double mx = logits[0];
        for (int k = 1; k < v; ++k) mx = std::max(mx, logits[k]);
        double s = 0.0;
        for (int k = 0; k < v; ++k) {
          err[std::size_t(k)] = std::exp(logits[k] - mx);
          s += err[std::size_t(k)];
        }
        const double inv = 1.0 / s;
        for (int k = 0; k < v; ++k)
          err[std::size_t(k)] = err[std::size_t(k)] * inv - row[k] / total;

        for (int k2 = 0; k2 < v; ++k2) {
          const double e = err[std::size_t(k2)];
          if (e == 0.0) {
            ++rep.skipped;  // exact zero error carries no sign to check
            continue;
          }
          const double want = e > 0.0 ? 1.0 : -1.0;
          for (int d = 0; d < v; ++d) {
            // transfer entry wt(d, k2), qualifying factor wm(i,d)+wv(j,d)
            const double factor = m.wm.at(i, d) + m.wv.at(j, d);
            if (factor > 0.0) {
              const double contribution = total * e * factor;
              if (contribution == 0.0) {
                ++rep.skipped;  // underflowed to zero, sign undefined
              } else {
                ++rep.transfer_checked;
                if ((contribution > 0.0 ? 1.0 : -1.0) != want)
                  ++rep.transfer_violations;
              }
            }
            // channel entries wm(i,d) and wv(j,d), qualifying factor wt(d,k2)
            const double tf = m.wt.at(d, k2);
            if (tf > 0.0) {
              const double contribution = total * e * tf;
              if (contribution == 0.0) {
                ++rep.skipped;
              } else {
                rep.channel_checked += 2;  // identical term reaches wm and wv
                if ((contribution > 0.0 ? 1.0 : -1.0) != want)
                  rep.channel_violations += 2;
              }
            }
          }
        }
      });
  return rep;
}

std::vector<double> train_simplified(SimplifiedModel& m, const CountStats& c,
                                     const SimplifiedTrainConfig& cfg) {
  check_model_counts(m, c);
  if (cfg.steps < 0) throw ContractError("train_simplified: negative step count");
  std::vector<double> losses;
  losses.reserve(std::size_t(cfg.steps) + 1);
  losses.push_back(simplified_loss(m, c).total);
  if (!std::isfinite(losses.back()) || losses.back() > cfg.divergence_limit)
    throw DivergenceError("simplified training started divergent (loss " +
                          std::to_string(losses.back()) + ")");
  for (int s = 0; s < cfg.steps; ++s) {
    const auto g = simplified_grads(m, c);
    for (std::size_t i = 0; i < m.wm.a.size(); ++i) m.wm.a[i] -= cfg.lr * g.wm.a[i];
    for (std::size_t i = 0; i < m.wv.a.size(); ++i) m.wv.a[i] -= cfg.lr * g.wv.a[i];
    if (!cfg.fixed_wt)
      for (std::size_t i = 0; i < m.wt.a.size(); ++i) m.wt.a[i] -= cfg.lr * g.wt.a[i];
    losses.push_back(simplified_loss(m, c).total);
    if (!std::isfinite(losses.back()) || losses.back() > cfg.divergence_limit)
      throw DivergenceError("simplified training diverged at step " +
                            std::to_string(s + 1) + " (loss " +
                            std::to_string(losses.back()) + ")");
  }
  return losses;
}

BoolMatrix learnable_mask_m(const CountStats& c, const BoolMatrix& adj_true) {
  const int v = c.vocab;
  if (adj_true.rows != adj_true.cols || adj_true.rows > v)
    throw ContractError("learnable_mask_m: adjacency does not fit the vocab");
  const int n = adj_true.rows;

  // continues(i, k') = some context (i, *) was followed two ahead by k'
  BoolMatrix continues(v, v);
  for (int i = 0; i < v; ++i)
    for (int k2 = 0; k2 < v; ++k2) {
      double s = 0.0;
      for (int j = 0; j < v; ++j) s += c.at2(i, j, k2);
      continues.at(i, k2) = s > 0.0 ? 1 : 0;
    }

  BoolMatrix mask(v, v);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      if (adj_true.at(i, k)) continue;  // true edges are their own category
      for (int k2 = 0; k2 < n; ++k2)
        if (continues.at(i, k2) && adj_true.at(k, k2)) {
          mask.at(i, k) = 1;
          break;
        }
    }
  return mask;
}

BoolMatrix learnable_mask_v(const CountStats& c, const BoolMatrix& adj_true,
                            const BoolMatrix& reach_obs) {
  const int v = c.vocab;
  if (adj_true.rows != adj_true.cols || adj_true.rows > v)
    throw ContractError("learnable_mask_v: adjacency does not fit the vocab");
  if (reach_obs.rows != adj_true.rows || reach_obs.cols != adj_true.cols)
    throw ContractError("learnable_mask_v: observed reach shape mismatch");
  const int n = adj_true.rows;

  // continues(j, k') = some context (*, j) was followed two ahead by k'
  BoolMatrix continues(v, v);
  for (int j = 0; j < v; ++j)
    for (int k2 = 0; k2 < v; ++k2) {
      double s = 0.0;
      for (int i = 0; i < v; ++i) s += c.at2(i, j, k2);
      continues.at(j, k2) = s > 0.0 ? 1 : 0;
    }

  BoolMatrix mask(v, v);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      if (reach_obs.at(j, k)) continue;  // observed entries are their own category
      for (int k2 = 0; k2 < n; ++k2)
        if (continues.at(j, k2) && adj_true.at(k, k2)) {
          mask.at(j, k) = 1;
          break;
        }
    }
  return mask;
}

}  // namespace mtp
