#include "mtp/analysis.hpp"

#include <string>

#include "mtp/error.hpp"

namespace mtp {

TransferProjection project_transfer(const Model& m, int step) {
  const auto& cfg = m.config();
  if (cfg.head_mode != HeadMode::SharedTransfer ||
      cfg.transfer != TransferKind::Linear)
    throw ContractError(
        "project_transfer: only shared linear transfers have a token-space matrix");
  if (step < 2 || step > cfg.k_tokens)
    throw ContractError("project_transfer: step outside [2, k_tokens]");

  const auto t = m.param("step" + std::to_string(step) + ".transfer.t");
  TransferProjection proj;
  proj.step = step;
  proj.t = MatD(cfg.vocab, cfg.vocab);
  proj.t.a = t->v;
  return proj;
}

MatD composed_transfer(const Model& m, int step) {
  const auto proj = project_transfer(m, step);
  const auto& cfg = m.config();
  const auto emb = m.param("tok_emb");  // vocab x d
  const auto out = m.param("w_out");    // d x vocab
  const int v = cfg.vocab, d = cfg.d_model;

  // bigram = emb . w_out, then route it through the transfer matrix
  MatD bigram(v, v);
  for (int u = 0; u < v; ++u)
    for (int j = 0; j < d; ++j) {
      const double e = emb->v[std::size_t(u * d + j)];
      if (e == 0.0) continue;
      for (int k = 0; k < v; ++k)
        bigram.at(u, k) += e * out->v[std::size_t(j * v + k)];
    }
  MatD composed(v, v);
  for (int u = 0; u < v; ++u)
    for (int j = 0; j < v; ++j) {
      const double b = bigram.at(u, j);
      if (b == 0.0) continue;
      for (int k = 0; k < v; ++k) composed.at(u, k) += b * proj.t.at(j, k);
    }
  return composed;
}

double adjacency_gap(const MatD& t, const BoolMatrix& adj) {
  const int n = adj.rows;
  if (adj.cols != n || t.rows < n || t.cols < n)
    throw ContractError("adjacency_gap: node block does not fit the matrix");
  double on = 0.0, off = 0.0;
  long long n_on = 0, n_off = 0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      if (i == k) continue;
      if (adj.at(i, k)) {
        on += t.at(i, k);
        ++n_on;
      } else {
        off += t.at(i, k);
        ++n_off;
      }
    }
  if (n_on == 0 || n_off == 0)
    throw ContractError("adjacency_gap: need at least one edge and one non-edge");
  return on / double(n_on) - off / double(n_off);
}

EntryStats entry_stats(const MatD& w, const BoolMatrix& primary,
                       const BoolMatrix& learnable) {
  if (primary.rows != w.rows || primary.cols != w.cols ||
      learnable.rows != w.rows || learnable.cols != w.cols)
    throw ContractError("entry_stats: mask shape mismatch");
  EntryStats st;
  for (int i = 0; i < w.rows; ++i)
    for (int k = 0; k < w.cols; ++k) {
      const bool p = primary.at(i, k) != 0;
      const bool l = learnable.at(i, k) != 0;
      if (p && l)
        throw ContractError("entry_stats: masks overlap at a cell");
      if (p) {
        st.primary_mean += w.at(i, k);
        ++st.primary_count;
      } else if (l) {
        st.learnable_mean += w.at(i, k);
        ++st.learnable_count;
      } else {
        st.rest_mean += w.at(i, k);
        ++st.rest_count;
      }
    }
  if (st.primary_count > 0) st.primary_mean /= double(st.primary_count);
  if (st.learnable_count > 0) st.learnable_mean /= double(st.learnable_count);
  if (st.rest_count > 0) st.rest_mean /= double(st.rest_count);
  return st;
}

std::vector<std::vector<MatD>> average_attention(
    const Model& m, const std::vector<PathSample>& seqs) {
  if (seqs.empty())
    throw ContractError("average_attention: no sequences given");
  const auto& cfg = m.config();
  int n_min = int(seqs.front().tokens.size());
  for (const auto& s : seqs) {
    if (s.tokens.size() < 2)
      throw ContractError("average_attention: sequence shorter than two tokens");
    n_min = std::min<int>(n_min, int(s.tokens.size()));
  }

  std::vector<std::vector<MatD>> avg(
      std::size_t(cfg.n_layers),
      std::vector<MatD>(std::size_t(cfg.n_heads), MatD(n_min, n_min)));

  for (const auto& s : seqs) {
    const int len = int(s.tokens.size());
    const auto trace = fast_forward(m, s.tokens, 1, len);
    for (int l = 0; l < cfg.n_layers; ++l) {
      const auto& att = trace.attention[std::size_t(l)];
      for (int h = 0; h < cfg.n_heads; ++h) {
        auto& out = avg[std::size_t(l)][std::size_t(h)];
        const double* base = att.data() + std::size_t(h) * len * len;
        for (int q = 0; q < n_min; ++q)
          for (int k = 0; k < n_min; ++k)
            out.at(q, k) += base[std::size_t(q) * len + k];
      }
    }
  }
  const double inv = 1.0 / double(seqs.size());
  for (auto& layer : avg)
    for (auto& head : layer)
      for (auto& x : head.a) x *= inv;
  return avg;
}

}  // namespace mtp
