#pragma once

#include <string>
#include <vector>

#include "mtp/dataset.hpp"
#include "mtp/matrix.hpp"
#include "mtp/model.hpp"

namespace mtp {

// The learned linear transfer map for a given prediction step, read straight
// out of the model in token space (it acts on logits, so it is vocab x vocab
// already). Only defined for shared-head models with a linear transfer;
// transformer-stack transfers and independent heads have no single matrix to
// report and are rejected with ContractError.
struct TransferProjection {
  int step = 2;  // which look-ahead step the map belongs to
  MatD t;        // vocab x vocab
};
TransferProjection project_transfer(const Model& m, int step = 2);

// The same transfer map viewed through the model's own token maps: row u is
// (emb(u) . W_out) . T, i.e. the route a token identity takes into the
// step-ahead logits. Weight structure that training pushes into the
// embeddings rather than into T itself still shows up here, so this is the
// right object when asking "how does the model map one node to candidate
// successors", while project_transfer reports the raw learned matrix. Same
// architecture restrictions as project_transfer.
MatD composed_transfer(const Model& m, int step = 2);

// Mean entry on true edges minus mean entry off them, over the node block
// (terminator row/column and the diagonal excluded). Positive values mean the
// matrix orders true edges above non-edges.
double adjacency_gap(const MatD& t, const BoolMatrix& adj);

// Entry means over three disjoint cells categories of one matrix: cells the
// objective visits directly ("primary"), cells reachable only through the
// two-ahead product ("learnable"), and everything else. The two masks must
// match the matrix shape and never overlap.
struct EntryStats {
  double primary_mean = 0.0;
  long long primary_count = 0;
  double learnable_mean = 0.0;
  long long learnable_count = 0;
  double rest_mean = 0.0;
  long long rest_count = 0;
};
EntryStats entry_stats(const MatD& w, const BoolMatrix& primary,
                       const BoolMatrix& learnable);

// Attention weights averaged over a corpus: every sequence is run through the
// model, maps are truncated to the shortest sequence length, and averaged.
// Result is [layer][head], each an N_min x N_min query-major matrix.
std::vector<std::vector<MatD>> average_attention(
    const Model& m, const std::vector<PathSample>& seqs);

}  // namespace mtp
