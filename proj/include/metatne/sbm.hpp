#pragma once

#include <cstdint>
#include <vector>

#include "metatne/graph.hpp"

namespace metatne {

// Planted-community benchmark generator: a stochastic block model with
// contiguous equal-size blocks, labeled by community membership plus
// union-of-two-community labels.
struct SbmConfig {
  int nodes = 400;
  int communities = 8;
  double p_in = 0.2;
  double p_out = 0.01;
  int union_labels = 8;
};

struct SbmData {
  Graph graph;
  LabelMatrix labels;
  std::vector<int> community;  // node -> block
};

SbmData make_sbm_dataset(const SbmConfig& cfg, uint64_t seed);

}  // namespace metatne
