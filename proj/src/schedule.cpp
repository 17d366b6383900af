#include "metatne/schedule.hpp"

#include <cmath>

#include "metatne/episode.hpp"
#include "metatne/error.hpp"
#include "metatne/metrics.hpp"

namespace metatne {

double tau(long long step, const ScheduleConfig& cfg) {
  if (step < 0) throw UsageError("tau: step must be >= 0");
  if (cfg.gamma <= 0.0) throw UsageError("tau: gamma must be > 0");
  if (cfg.decay_period < 1) throw UsageError("tau: decay_period must be >= 1");
  return 1.0 / (1.0 + cfg.gamma * static_cast<double>(step / cfg.decay_period));
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, long long t, double lr, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void TransformAdam::step(TransformParams& params, const TransformParams& grads, double lr) {
  ++t_;
  auto pv = tensor_views(params);
  const auto gv = tensor_views(grads);
  auto mv = tensor_views(m_);
  auto vv = tensor_views(v_);
  for (size_t i = 0; i < pv.size(); ++i) adam_update(pv[i], gv[i], mv[i], vv[i], t_, lr, cfg_);
}

void RowAdam::update_row(Mat& target, int row, const double* grad, double lr) {
  const int dim = target.cols;
  adam_update({target.row(row), static_cast<size_t>(dim)}, {grad, static_cast<size_t>(dim)},
              {m_.row(row), static_cast<size_t>(dim)}, {v_.row(row), static_cast<size_t>(dim)},
              t_, lr, cfg_);
}

namespace {

bool grads_finite(const TransformParams& grads, const SparseRowGrad& rows) {
  for (const auto view : tensor_views(grads))
    for (const double g : view)
      if (!std::isfinite(g)) return false;
  for (const auto& r : rows.grads)
    for (const double g : r)
      if (!std::isfinite(g)) return false;
  return true;
}

double validation_f1(const Model& model, const std::vector<Task>& tasks, double threshold,
                     int threads) {
  return evaluate_trial(model, tasks, threshold, false, threads).f1;
}

}  // namespace

TrainResult train(const Graph& graph, const LabelMatrix& labels, const LabelSplit& split,
                  const RunConfig& cfg, const TrainLogger& logger) {
  cfg.validate();
  const TaskShape shape = cfg.shape();
  if (!cfg.struct_only && eligible_labels(labels, split.known, shape).empty())
    throw UsageError("no eligible training labels for the task shape");

  TrainResult result;
  result.model.emb = init_embeddings(graph.node_count, cfg.d, cfg.seed);
  result.model.transform = init_transform(cfg.transform(), cfg.seed);
  Model& model = result.model;

  const NoiseDistribution noise = build_noise(graph, cfg.noise_exponent);
  const ScheduleConfig sched{cfg.steps, cfg.gamma, cfg.decay_period};

  Rng rng_phase(cfg.seed, "phase");
  Rng rng_struct(cfg.seed, "struct");
  Rng rng_tasks(cfg.seed, "tasks");

  // Validation episodes are fixed up front so every periodic evaluation
  // scores the same tasks.
  std::vector<Task> val_tasks;
  if (cfg.val_tasks > 0 && !split.validation.empty() &&
      !eligible_labels(labels, split.validation, shape).empty()) {
    Rng rng_val(cfg.seed, "val-tasks");
    for (int i = 0; i < cfg.val_tasks; ++i)
      val_tasks.push_back(sample_task(labels, split.validation, shape, rng_val));
  }

  // Separate optimizer states per module, as in training with two Adam
  // instances over shared parameters.
  RowAdam struct_center(graph.node_count, cfg.d);
  RowAdam struct_context(graph.node_count, cfg.d);
  TransformAdam meta_theta(model.transform);
  RowAdam meta_center(graph.node_count, cfg.d);

  SparseRowGrad gc, gx;
  TransformParams theta_grads = zeros_like(model.transform);
  std::vector<TransformParams> worker_theta;
  std::vector<SparseRowGrad> worker_rows;

  Model best;
  bool have_best = false;
  long long consecutive_skips = 0;
  uint64_t meta_task_counter = 0;

  for (long long step = 0; step < cfg.steps; ++step) {
    const double t = tau(step, sched);
    const double r = rng_phase.uniform();
    const bool structural = cfg.struct_only || r < t;
    double loss = 0.0;

    if (structural) {
      try {
        const auto pairs = sample_edge_batch(graph, cfg.n1, rng_struct);
        if (cfg.struct_opt == "sgd") {
          loss = sgns_step(model.emb, pairs, noise, cfg.n_neg, cfg.lr_struct, rng_struct,
                           cfg.threads);
        } else {
          gc.clear();
          gx.clear();
          loss = sgns_batch_grad(model.emb, pairs, noise, cfg.n_neg, rng_struct, gc, gx,
                                 cfg.threads);
          const double scale = 1.0 / static_cast<double>(pairs.size());
          for (auto& g : gc.grads)
            for (double& v : g) v *= scale;
          for (auto& g : gx.grads)
            for (double& v : g) v *= scale;
          struct_center.begin_step();
          for (size_t i = 0; i < gc.rows.size(); ++i)
            struct_center.update_row(model.emb.center, gc.rows[i], gc.grads[i].data(),
                                     cfg.lr_struct);
          struct_context.begin_step();
          for (size_t i = 0; i < gx.rows.size(); ++i)
            struct_context.update_row(model.emb.context, gx.rows[i], gx.grads[i].data(),
                                      cfg.lr_struct);
        }
        consecutive_skips = 0;
      } catch (const NumericError&) {
        ++result.skipped_steps;
        if (++consecutive_skips > 10) {
          result.aborted = true;
          break;
        }
      }
    } else {
      std::vector<Task> batch;
      batch.reserve(cfg.n2);
      for (int i = 0; i < cfg.n2; ++i)
        batch.push_back(sample_task(labels, split.known, shape, rng_tasks));

      for (auto view : tensor_views(theta_grads)) std::fill(view.begin(), view.end(), 0.0);
      gc.clear();
      double loss_sum = 0.0;
      bool numeric_failure = false;

      const int workers = std::min<int>(cfg.threads, cfg.n2);
      if (workers <= 1) {
        try {
          for (int i = 0; i < cfg.n2; ++i) {
            Rng drop(cfg.seed, "dropout", meta_task_counter + i);
            loss_sum += episode_loss_grad(model.emb.center, batch[i], model.transform,
                                          TransformMode::train, &drop, theta_grads, gc);
          }
        } catch (const NumericError&) {
          numeric_failure = true;
        }
      } else {
        worker_theta.assign(workers, zeros_like(model.transform));
        worker_rows.assign(workers, SparseRowGrad{});
        std::vector<double> worker_loss(workers, 0.0);
        std::vector<char> worker_failed(workers, 0);
#pragma omp parallel for num_threads(workers)
        for (int w = 0; w < workers; ++w) {
          // NumericError must not unwind across the parallel region.
          try {
            for (int i = w; i < cfg.n2; i += workers) {
              Rng drop(cfg.seed, "dropout", meta_task_counter + i);
              worker_loss[w] +=
                  episode_loss_grad(model.emb.center, batch[i], model.transform,
                                    TransformMode::train, &drop, worker_theta[w],
                                    worker_rows[w]);
            }
          } catch (const NumericError&) {
            worker_failed[w] = 1;
          }
        }
        for (int w = 0; w < workers; ++w) {
          numeric_failure |= worker_failed[w] != 0;
          loss_sum += worker_loss[w];
          auto dst = tensor_views(theta_grads);
          const auto src = tensor_views(worker_theta[w]);
          for (size_t k = 0; k < dst.size(); ++k)
            for (size_t j = 0; j < dst[k].size(); ++j) dst[k][j] += src[k][j];
          gc.merge(worker_rows[w], cfg.d);
        }
      }
      meta_task_counter += static_cast<uint64_t>(cfg.n2);

      // Batch loss averages over tasks; the weight decay applies once.
      const double inv_n2 = 1.0 / cfg.n2;
      for (auto view : tensor_views(theta_grads))
        for (double& v : view) v *= inv_n2;
      for (auto& g : gc.grads)
        for (double& v : g) v *= inv_n2;
      loss = loss_sum * inv_n2;
      if (cfg.lambda > 0.0) {
        loss += cfg.lambda * model.transform.squared_norm();
        auto dst = tensor_views(theta_grads);
        const auto prm = tensor_views(model.transform);
        for (size_t k = 0; k < dst.size(); ++k)
          for (size_t j = 0; j < dst[k].size(); ++j) dst[k][j] += 2.0 * cfg.lambda * prm[k][j];
      }

      if (numeric_failure || !std::isfinite(loss) || !grads_finite(theta_grads, gc)) {
        ++result.skipped_steps;
        if (++consecutive_skips > 10) {
          result.aborted = true;
          break;
        }
      } else {
        consecutive_skips = 0;
        meta_theta.step(model.transform, theta_grads, cfg.lr_meta);
        meta_center.begin_step();
        for (size_t i = 0; i < gc.rows.size(); ++i)
          meta_center.update_row(model.emb.center, gc.rows[i], gc.grads[i].data(), cfg.lr_meta);
      }
    }

    if (logger && step % cfg.log_every == 0)
      logger(TrainEvent{step, structural ? 's' : 'm', t, loss});

    if (!val_tasks.empty() && (step + 1) % cfg.decay_period == 0) {
      const double f1 = validation_f1(model, val_tasks, cfg.threshold, cfg.threads);
      result.history.push_back({step, f1});
      if (!have_best || f1 > result.best_f1) {
        best = model;
        result.best_f1 = f1;
        result.best_step = step;
        have_best = true;
      }
    }
  }

  if (have_best) {
    // Keep the checkpoint that scored best on the validation tasks.
    result.model = std::move(best);
  }
  return result;
}

}  // namespace metatne
