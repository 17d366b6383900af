// Throughput comparison of the serial reference paths against the
// OpenMP-parallel kernels: hogwild SGNS updates, batched structural
// gradients, meta-phase episode gradients, and task evaluation.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "metatne/episode.hpp"
#include "metatne/metrics.hpp"
#include "metatne/sbm.hpp"
#include "metatne/schedule.hpp"

using namespace metatne;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const char* kernel, double serial_s, double parallel_s, int threads) {
  std::printf("%-24s serial %8.3fs   %d threads %8.3fs   speedup %.2fx\n", kernel, serial_s,
              threads, parallel_s, serial_s / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 4;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  if (argc > 1) threads = std::atoi(argv[1]);
  std::printf("comparing serial reference vs %d-thread kernels\n\n", threads);

  const SbmData data = make_sbm_dataset({2000, 10, 0.05, 0.002, 10}, 1);
  const int d = 64;
  const NoiseDistribution noise = build_noise(data.graph, 0.75);

  {  // hogwild SGNS
    Rng rng(1, "bench-pairs");
    const auto pairs = sample_edge_batch(data.graph, 200000, rng);
    EmbeddingMatrix emb = init_embeddings(data.graph.node_count, d, 1);
    Rng r1(2, "bench-sgns");
    auto t0 = Clock::now();
    sgns_step(emb, pairs, noise, 5, 0.025, r1, 1);
    const double serial = seconds_since(t0);

    EmbeddingMatrix emb2 = init_embeddings(data.graph.node_count, d, 1);
    Rng r2(2, "bench-sgns");
    t0 = Clock::now();
    sgns_step(emb2, pairs, noise, 5, 0.025, r2, threads);
    report("sgns hogwild", serial, seconds_since(t0), threads);
  }

  {  // accumulated structural gradients
    Rng rng(3, "bench-pairs2");
    const auto pairs = sample_edge_batch(data.graph, 200000, rng);
    const EmbeddingMatrix emb = init_embeddings(data.graph.node_count, d, 1);
    SparseRowGrad gc, gx;
    Rng r1(4, "bench-batch");
    auto t0 = Clock::now();
    sgns_batch_grad(emb, pairs, noise, 5, r1, gc, gx, 1);
    const double serial = seconds_since(t0);

    SparseRowGrad gc2, gx2;
    Rng r2(4, "bench-batch");
    t0 = Clock::now();
    sgns_batch_grad(emb, pairs, noise, 5, r2, gc2, gx2, threads);
    report("sgns batch grad", serial, seconds_since(t0), threads);
  }

  {  // meta-phase episode gradients
    const EmbeddingMatrix emb = init_embeddings(data.graph.node_count, d, 1);
    const TransformParams params = init_transform({d, d, 2, 2 * d, 1, 0.0, 1e-5}, 1);
    std::vector<int> pool(data.labels.label_count);
    for (int y = 0; y < data.labels.label_count; ++y) pool[y] = y;
    Rng rng(5, "bench-tasks");
    std::vector<Task> tasks;
    for (int i = 0; i < 64; ++i)
      tasks.push_back(sample_task(data.labels, pool, TaskShape{10, 20, 10, 20}, rng));

    auto run = [&](int n_threads) {
      std::vector<TransformParams> grads(n_threads, zeros_like(params));
      std::vector<SparseRowGrad> rows(n_threads);
      const auto t0 = Clock::now();
#pragma omp parallel for num_threads(n_threads) if (n_threads > 1)
      for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
        int w = 0;
#ifdef _OPENMP
        w = omp_get_thread_num();
#endif
        episode_loss_grad(emb.center, tasks[i], params, TransformMode::eval, nullptr, grads[w],
                          rows[w]);
      }
      return seconds_since(t0);
    };
    const double serial = run(1);
    report("meta episode grads", serial, run(threads), threads);
  }

  {  // task evaluation
    Model model;
    model.emb = init_embeddings(data.graph.node_count, d, 1);
    model.transform = init_transform({d, d, 2, 2 * d, 1, 0.0, 1e-5}, 1);
    std::vector<int> pool(data.labels.label_count);
    for (int y = 0; y < data.labels.label_count; ++y) pool[y] = y;
    Rng rng(6, "bench-eval");
    std::vector<Task> tasks;
    for (int i = 0; i < 200; ++i)
      tasks.push_back(sample_task(data.labels, pool, TaskShape{10, 20, 10, 20}, rng));

    auto t0 = Clock::now();
    const TrialMetrics serial_metrics = evaluate_trial(model, tasks, 0.5, false, 1);
    const double serial = seconds_since(t0);
    t0 = Clock::now();
    const TrialMetrics parallel_metrics = evaluate_trial(model, tasks, 0.5, false, threads);
    const double parallel = seconds_since(t0);
    report("task evaluation", serial, parallel, threads);
    if (serial_metrics.f1 != parallel_metrics.f1)
      std::printf("WARNING: serial and parallel evaluation disagree\n");
  }

  return 0;
}
