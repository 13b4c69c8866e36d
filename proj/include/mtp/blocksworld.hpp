#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtp/dataset.hpp"
#include "mtp/graph.hpp"

namespace mtp {

// One tabletop configuration: every tower listed bottom block first.
// Canonical form sorts towers lexicographically (equivalently by bottom
// block, which is unique), making equal configurations compare equal.
using BlockState = std::vector<std::vector<int>>;

BlockState canonical_state(BlockState s);

// All states reachable by legal moves from everything-on-the-table, in
// canonical sorted order. Sizes grow as 1, 3, 13, 73, 501, ...
std::vector<BlockState> enumerate_states(int blocks);

// Successors of s: any tower's top block moves onto another tower, or onto
// the table when its tower holds at least two blocks (unstacking a singleton
// onto the table would be the identity). Results are canonical.
std::vector<BlockState> legal_moves(const BlockState& s);

struct BlocksWorld {
  int blocks = 0;
  std::vector<BlockState> states;  // index -> configuration, sorted
  DirectedGraph graph;             // symmetric move edges over state indices
};

BlocksWorld build_blocksworld(int blocks);

// Training corpus: one direct path per directed move edge plus
// walks_per_length self-avoiding walks for every move count in
// [min_len, max_len]. Test corpus: n_test self-avoiding walks with move
// counts drawn uniformly from the same range; its random stream is derived
// independently of walks_per_length so the test set is stable while the
// training budget varies. Test pairs carry degrees measured against the
// training corpus.
struct BlocksDatasetConfig {
  int walks_per_length = 1000;
  int n_test = 5000;
  int min_len = 2;
  int max_len = 6;
  std::uint64_t seed = 0;
};

PathDataset build_blocks_dataset(const BlocksWorld& w,
                                 const BlocksDatasetConfig& cfg);

// JSON file mapping every state index to its towers.
void save_states(const BlocksWorld& w, const std::string& path);

}  // namespace mtp
