#include "metatne/sbm.hpp"

#include <algorithm>

#include "metatne/error.hpp"
#include "metatne/rng.hpp"

namespace metatne {

SbmData make_sbm_dataset(const SbmConfig& cfg, uint64_t seed) {
  if (cfg.nodes < cfg.communities || cfg.communities < 2)
    throw UsageError("SBM needs nodes >= communities >= 2");

  SbmData data;
  data.community.resize(cfg.nodes);
  for (int v = 0; v < cfg.nodes; ++v)
    data.community[v] = static_cast<int>(static_cast<long long>(v) * cfg.communities / cfg.nodes);

  Graph& g = data.graph;
  g.node_count = cfg.nodes;
  g.external_ids.resize(cfg.nodes);
  for (int v = 0; v < cfg.nodes; ++v) g.external_ids[v] = v;
  g.adjacency.assign(cfg.nodes, {});

  Rng rng(seed, "sbm-edges");
  for (int u = 0; u < cfg.nodes; ++u) {
    for (int v = u + 1; v < cfg.nodes; ++v) {
      const double p = data.community[u] == data.community[v] ? cfg.p_in : cfg.p_out;
      if (rng.uniform() < p) g.edges.emplace_back(u, v);
    }
  }
  for (const auto& [u, v] : g.edges) {
    g.adjacency[u].push_back(v);
    g.adjacency[v].push_back(u);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());

  // Labels: one per community, then unions of distinct community pairs.
  LabelMatrix& labels = data.labels;
  labels.node_count = cfg.nodes;
  labels.label_count = cfg.communities + cfg.union_labels;
  labels.positives.assign(labels.label_count, {});
  labels.external_labels.resize(labels.label_count);
  for (int y = 0; y < labels.label_count; ++y) labels.external_labels[y] = y;

  for (int v = 0; v < cfg.nodes; ++v) labels.positives[data.community[v]].push_back(v);

  Rng rng_pairs(seed, "sbm-unions");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < cfg.communities; ++a)
    for (int b = a + 1; b < cfg.communities; ++b) pairs.emplace_back(a, b);
  if (cfg.union_labels > static_cast<int>(pairs.size()))
    throw UsageError("not enough community pairs for the requested union labels");
  rng_pairs.shuffle(pairs);
  for (int k = 0; k < cfg.union_labels; ++k) {
    const auto [a, b] = pairs[k];
    auto& pos = labels.positives[cfg.communities + k];
    for (int v = 0; v < cfg.nodes; ++v)
      if (data.community[v] == a || data.community[v] == b) pos.push_back(v);
  }
  return data;
}

}  // namespace metatne
