#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metatne/graph.hpp"
#include "metatne/matrix.hpp"
#include "metatne/rng.hpp"

namespace metatne {

// Task-agnostic node representations. `center` is the matrix exposed to the
// meta-learning side; `context` holds the negative-sampling output vectors
// and never leaves this module.
struct EmbeddingMatrix {
  Mat center;
  Mat context;
  int dim = 0;
};

EmbeddingMatrix init_embeddings(int node_count, int d, uint64_t seed);

// Unigram noise distribution over nodes, weight = degree^exponent. Only
// positive-weight nodes enter the table (so the cumulative array is strictly
// increasing); all-zero degrees fall back to uniform over every node.
struct NoiseDistribution {
  std::vector<int> support;        // node ids with positive weight, ascending
  std::vector<double> cumulative;  // running weight sums over support
  double exponent = 0.75;

  int draw(Rng& rng) const;
  double prob(int node) const;
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

NoiseDistribution build_noise(const Graph& g, double exponent);

// n1 (center, neighbor) pairs uniform over directed edge occurrences.
std::vector<std::pair<int, int>> sample_edge_batch(const Graph& g, int n1, Rng& rng);

// Loss and gradients of one skip-gram negative-sampling term:
//   -log s(u_i . c_j) - sum_k log s(-u_i . c_k).
// grad_center receives d(loss)/d(u_i); grad_ctx[0] pairs with the true
// neighbor and grad_ctx[1..] with the negatives. Exposed for gradient tests.
double sgns_pair_loss_grad(const double* center, const double* ctx_pos,
                           const std::vector<const double*>& ctx_neg, int dim,
                           double* grad_center, std::vector<std::vector<double>>& grad_ctx);

// Classic stochastic pass: applies per-pair SGD updates at rate lr as it
// goes, drawing n_neg negatives per pair (collisions with the true neighbor
// resampled up to 8 times). Returns the mean pair loss. threads > 1 runs
// hogwild: lock-free row updates, nondeterministic by design.
double sgns_step(EmbeddingMatrix& emb, std::span<const std::pair<int, int>> pairs,
                 const NoiseDistribution& noise, int n_neg, double lr, Rng& rng,
                 int threads = 1);

// Accumulated-gradient alternative used by the Adam structural phase: sums
// per-pair gradients into sparse row buffers without touching the model.
struct SparseRowGrad {
  std::vector<int> rows;                   // touched row ids, insertion order
  std::vector<std::vector<double>> grads;  // parallel to rows
  void add(int row, const double* g, int dim);
  void merge(const SparseRowGrad& other, int dim);
  void clear();

 private:
  std::vector<int> index_;  // row -> position+1, lazily sized
};

double sgns_batch_grad(const EmbeddingMatrix& emb, std::span<const std::pair<int, int>> pairs,
                       const NoiseDistribution& noise, int n_neg, Rng& rng,
                       SparseRowGrad& grad_center, SparseRowGrad& grad_context, int threads = 1);

// Checkpoint: binary header (magic, |V|, d) then row-major f32 center and
// context, plus a text sidecar holding the config snapshot.
void save_embeddings(const EmbeddingMatrix& emb, const std::string& path,
                     const std::string& sidecar_text);
EmbeddingMatrix load_embeddings(const std::string& path);

}  // namespace metatne
