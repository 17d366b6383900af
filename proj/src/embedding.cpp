#include "metatne/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "metatne/error.hpp"
#include "metatne/io.hpp"

namespace metatne {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'E', 'B'};

double log_sigmoid(double z) {
  // -log(1 + e^-z) without overflow on either tail.
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

EmbeddingMatrix init_embeddings(int node_count, int d, uint64_t seed) {
  if (d < 1) throw UsageError("embedding dimension must be >= 1");
  EmbeddingMatrix emb;
  emb.dim = d;
  emb.center = Mat(node_count, d);
  emb.context = Mat(node_count, d);
  Rng rng(seed, "init-emb");
  const double bound = 0.5 / d;
  for (double& v : emb.center.a) v = rng.uniform(-bound, bound);
  return emb;
}

int NoiseDistribution::draw(Rng& rng) const {
  const double x = rng.uniform() * total();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  const size_t idx = std::min<size_t>(it - cumulative.begin(), cumulative.size() - 1);
  return support[idx];
}

double NoiseDistribution::prob(int node) const {
  const auto it = std::lower_bound(support.begin(), support.end(), node);
  if (it == support.end() || *it != node) return 0.0;
  const size_t i = it - support.begin();
  const double w = i == 0 ? cumulative[0] : cumulative[i] - cumulative[i - 1];
  return w / total();
}

NoiseDistribution build_noise(const Graph& g, double exponent) {
  if (g.node_count == 0) throw UsageError("cannot build noise distribution for empty graph");
  NoiseDistribution noise;
  noise.exponent = exponent;
  double running = 0.0;
  for (int v = 0; v < g.node_count; ++v) {
    const int deg = g.degree(v);
    if (deg == 0) continue;
    running += std::pow(static_cast<double>(deg), exponent);
    noise.support.push_back(v);
    noise.cumulative.push_back(running);
  }
  if (noise.support.empty()) {
    // Degenerate all-isolated graph: uniform over every node.
    for (int v = 0; v < g.node_count; ++v) {
      noise.support.push_back(v);
      noise.cumulative.push_back(static_cast<double>(v + 1));
    }
  }
  return noise;
}

std::vector<std::pair<int, int>> sample_edge_batch(const Graph& g, int n1, Rng& rng) {
  if (g.edges.empty()) throw UsageError("cannot sample node pairs from an edgeless graph");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(n1);
  const uint64_t directed = 2 * static_cast<uint64_t>(g.edges.size());
  for (int k = 0; k < n1; ++k) {
    const uint64_t t = rng.below(directed);
    const auto& [u, v] = g.edges[t / 2];
    pairs.emplace_back(t % 2 == 0 ? std::make_pair(u, v) : std::make_pair(v, u));
  }
  return pairs;
}

double sgns_pair_loss_grad(const double* center, const double* ctx_pos,
                           const std::vector<const double*>& ctx_neg, int dim,
                           double* grad_center, std::vector<std::vector<double>>& grad_ctx) {
  grad_ctx.assign(ctx_neg.size() + 1, std::vector<double>(dim, 0.0));
  std::fill(grad_center, grad_center + dim, 0.0);

  const double z_pos = dot(center, ctx_pos, dim);
  double loss = -log_sigmoid(z_pos);
  const double g_pos = sigmoid(z_pos) - 1.0;
  axpy(g_pos, ctx_pos, grad_center, dim);
  axpy(g_pos, center, grad_ctx[0].data(), dim);

  for (size_t k = 0; k < ctx_neg.size(); ++k) {
    const double z = dot(center, ctx_neg[k], dim);
    loss -= log_sigmoid(-z);
    const double g = sigmoid(z);
    axpy(g, ctx_neg[k], grad_center, dim);
    axpy(g, center, grad_ctx[k + 1].data(), dim);
  }
  return loss;
}

namespace {

// Negatives colliding with the true neighbor get resampled a few times.
int draw_negative(const NoiseDistribution& noise, int true_neighbor, Rng& rng) {
  int k = noise.draw(rng);
  for (int attempt = 0; attempt < 8 && k == true_neighbor; ++attempt) k = noise.draw(rng);
  return k;
}

double sgns_process_range(EmbeddingMatrix& emb, std::span<const std::pair<int, int>> pairs,
                          size_t begin, size_t end, size_t stride,
                          const NoiseDistribution& noise, int n_neg, double lr, Rng& rng) {
  const int dim = emb.dim;
  std::vector<const double*> negs(n_neg);
  std::vector<int> neg_ids(n_neg);
  std::vector<double> gc(dim);
  std::vector<std::vector<double>> gx;
  double loss_sum = 0.0;
  for (size_t p = begin; p < end; p += stride) {
    const auto& [i, j] = pairs[p];
    for (int k = 0; k < n_neg; ++k) {
      neg_ids[k] = draw_negative(noise, j, rng);
      negs[k] = emb.context.row(neg_ids[k]);
    }
    const double loss =
        sgns_pair_loss_grad(emb.center.row(i), emb.context.row(j), negs, dim, gc.data(), gx);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss in structural step");
    loss_sum += loss;
    axpy(-lr, gc.data(), emb.center.row(i), dim);
    axpy(-lr, gx[0].data(), emb.context.row(j), dim);
    for (int k = 0; k < n_neg; ++k)
      axpy(-lr, gx[k + 1].data(), emb.context.row(neg_ids[k]), dim);
  }
  return loss_sum;
}

}  // namespace

double sgns_step(EmbeddingMatrix& emb, std::span<const std::pair<int, int>> pairs,
                 const NoiseDistribution& noise, int n_neg, double lr, Rng& rng, int threads) {
  if (n_neg < 1) throw UsageError("n_neg must be >= 1");
  if (lr <= 0) throw UsageError("learning rate must be positive");
  if (pairs.empty()) return 0.0;

  double loss_sum = 0.0;
  if (threads <= 1) {
    loss_sum = sgns_process_range(emb, pairs, 0, pairs.size(), 1, noise, n_neg, lr, rng);
  } else {
    // Hogwild: unsynchronized row updates, nondeterministic.
    const uint64_t base = rng.next_u64();
    bool failed = false;
#pragma omp parallel for num_threads(threads) reduction(+ : loss_sum) reduction(|| : failed)
    for (int t = 0; t < threads; ++t) {
      try {
        Rng local(base, "hogwild", static_cast<uint64_t>(t));
        loss_sum += sgns_process_range(emb, pairs, static_cast<size_t>(t), pairs.size(),
                                       static_cast<size_t>(threads), noise, n_neg, lr, local);
      } catch (const NumericError&) {
        failed = true;
      }
    }
    if (failed) throw NumericError("non-finite loss in structural step");
  }
  return loss_sum / static_cast<double>(pairs.size());
}

void SparseRowGrad::add(int row, const double* g, int dim) {
  if (row >= static_cast<int>(index_.size())) index_.resize(row + 1, 0);
  if (index_[row] == 0) {
    rows.push_back(row);
    grads.emplace_back(dim, 0.0);
    index_[row] = static_cast<int>(rows.size());
  }
  double* dst = grads[index_[row] - 1].data();
  for (int i = 0; i < dim; ++i) dst[i] += g[i];
}

void SparseRowGrad::clear() {
  for (const int r : rows) index_[r] = 0;
  rows.clear();
  grads.clear();
}

void SparseRowGrad::merge(const SparseRowGrad& other, int dim) {
  for (size_t k = 0; k < other.rows.size(); ++k) add(other.rows[k], other.grads[k].data(), dim);
}

namespace {

double sgns_accumulate_range(const EmbeddingMatrix& emb,
                             std::span<const std::pair<int, int>> pairs, size_t begin, size_t end,
                             size_t stride, const NoiseDistribution& noise, int n_neg, Rng& rng,
                             SparseRowGrad& grad_center, SparseRowGrad& grad_context) {
  const int dim = emb.dim;
  std::vector<const double*> negs(n_neg);
  std::vector<int> neg_ids(n_neg);
  std::vector<double> gc(dim);
  std::vector<std::vector<double>> gx;
  double loss_sum = 0.0;
  for (size_t p = begin; p < end; p += stride) {
    const auto& [i, j] = pairs[p];
    for (int k = 0; k < n_neg; ++k) {
      neg_ids[k] = draw_negative(noise, j, rng);
      negs[k] = emb.context.row(neg_ids[k]);
    }
    const double loss =
        sgns_pair_loss_grad(emb.center.row(i), emb.context.row(j), negs, dim, gc.data(), gx);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss in structural step");
    loss_sum += loss;
    grad_center.add(i, gc.data(), dim);
    grad_context.add(j, gx[0].data(), dim);
    for (int k = 0; k < n_neg; ++k) grad_context.add(neg_ids[k], gx[k + 1].data(), dim);
  }
  return loss_sum;
}

}  // namespace

double sgns_batch_grad(const EmbeddingMatrix& emb, std::span<const std::pair<int, int>> pairs,
                       const NoiseDistribution& noise, int n_neg, Rng& rng,
                       SparseRowGrad& grad_center, SparseRowGrad& grad_context, int threads) {
  if (pairs.empty()) return 0.0;
  double loss_sum = 0.0;
  if (threads <= 1) {
    loss_sum = sgns_accumulate_range(emb, pairs, 0, pairs.size(), 1, noise, n_neg, rng,
                                     grad_center, grad_context);
  } else {
    const uint64_t base = rng.next_u64();
    std::vector<SparseRowGrad> local_c(threads), local_x(threads);
    std::vector<double> local_loss(threads, 0.0);
    bool failed = false;
#pragma omp parallel for num_threads(threads) reduction(|| : failed)
    for (int t = 0; t < threads; ++t) {
      try {
        Rng local(base, "struct-batch", static_cast<uint64_t>(t));
        local_loss[t] =
            sgns_accumulate_range(emb, pairs, static_cast<size_t>(t), pairs.size(),
                                  static_cast<size_t>(threads), noise, n_neg, local, local_c[t],
                                  local_x[t]);
      } catch (const NumericError&) {
        failed = true;
      }
    }
    if (failed) throw NumericError("non-finite loss in structural step");
    for (int t = 0; t < threads; ++t) {
      loss_sum += local_loss[t];
      grad_center.merge(local_c[t], emb.dim);
      grad_context.merge(local_x[t], emb.dim);
    }
  }
  return loss_sum / static_cast<double>(pairs.size());
}

void save_embeddings(const EmbeddingMatrix& emb, const std::string& path,
                     const std::string& sidecar_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write embedding checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, static_cast<uint32_t>(emb.center.rows));
  write_u32(out, static_cast<uint32_t>(emb.dim));
  write_f32_array(out, emb.center.a.data(), emb.center.size());
  write_f32_array(out, emb.context.a.data(), emb.context.size());
  if (!out) throw UsageError("short write on embedding checkpoint: " + path);

  std::ofstream side(path + ".cfg");
  if (!side) throw UsageError("cannot write embedding sidecar: " + path + ".cfg");
  side << sidecar_text;
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open embedding checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw UsageError("bad magic in embedding checkpoint: " + path);
  EmbeddingMatrix emb;
  const uint32_t rows = read_u32(in);
  emb.dim = static_cast<int>(read_u32(in));
  if (emb.dim < 1) throw UsageError("embedding checkpoint header has d < 1");
  emb.center = Mat(static_cast<int>(rows), emb.dim);
  emb.context = Mat(static_cast<int>(rows), emb.dim);
  read_f32_array(in, emb.center.a.data(), emb.center.size());
  read_f32_array(in, emb.context.a.data(), emb.context.size());
  return emb;
}

}  // namespace metatne
