#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace metatne {

// Undirected graph over dense internal node ids. The loader compacts
// arbitrary external ids to ranks (sorted unique order), so row i of the
// embedding matrix always addresses node i directly. external_ids maps
// internal -> external; identity for inputs already indexed 0..n-1.
struct Graph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;      // unique undirected edges, u < v
  std::vector<std::vector<int>> adjacency;     // sorted neighbor lists
  std::vector<int64_t> external_ids;

  int degree(int v) const { return static_cast<int>(adjacency[v].size()); }

  // -1 when the external id never appeared in the edge list.
  int to_internal(int64_t external) const;
};

// Binary node-label indicators. positives[y] holds the nodes with label y
// (sorted, deduplicated); every other node counts as a negative for y.
struct LabelMatrix {
  int label_count = 0;
  int node_count = 0;
  std::vector<std::vector<int>> positives;
  std::vector<int64_t> external_labels;

  int negative_count(int label) const {
    return node_count - static_cast<int>(positives[label].size());
  }
};

struct LabelSplit {
  std::vector<int> known;
  std::vector<int> validation;
  std::vector<int> novel;
};

// Text edge list: one "u v" pair per line, '#'-comments ignored. Self-loops
// dropped (endpoints still registered as nodes), duplicates collapsed.
Graph load_edge_list(std::istream& in);

// Writes "u v" lines in external ids; re-loading reproduces the adjacency.
void save_edge_list(const Graph& g, std::ostream& out);

// Two-column "internal external" remap table, written alongside outputs.
void save_remap(const Graph& g, std::ostream& out);

// "node_id label_id" per line, ids taken as internal; node_id must be
// < node_count. Label ids are compacted like node ids in the loader above.
LabelMatrix load_labels(std::istream& in, int node_count);

// Same format, but node ids are external and translated through the graph's
// remap table. Unknown node ids are range errors.
LabelMatrix load_labels(std::istream& in, const Graph& g);

// Deterministic split of label ids into known/validation/novel sets with
// sizes floor(r * label_count); the remainder goes train-first.
LabelSplit split_labels(const LabelMatrix& labels, double r_train, double r_val,
                        double r_test, uint64_t seed);

}  // namespace metatne
