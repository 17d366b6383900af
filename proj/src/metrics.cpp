#include "metatne/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "metatne/episode.hpp"
#include "metatne/error.hpp"

namespace metatne {

TaskResult classify_task(const Model& model, const Task& task, bool identity_transform) {
  const EpisodeScores scores = episode_forward(model.emb.center, task, model.transform,
                                               TransformMode::eval, nullptr, identity_transform);
  TaskResult result;
  result.queries.reserve(scores.predictions.size());
  for (size_t i = 0; i < scores.predictions.size(); ++i)
    result.queries.push_back({scores.predictions[i].prob_positive, scores.truths[i]});
  return result;
}

double auc(const std::vector<ScoredQuery>& results) {
  size_t n_pos = 0;
  for (const auto& r : results) n_pos += r.truth ? 1 : 0;
  const size_t n_neg = results.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUC undefined for single-class input");

  std::vector<size_t> order(results.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return results[a].score < results[b].score; });

  // Rank sum of positives with average ranks over tied scores.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && results[order[j]].score == results[order[i]].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (results[order[k]].truth) rank_sum_pos += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::pair<double, double> f1_recall(const std::vector<ScoredQuery>& results, double threshold) {
  long tp = 0, fp = 0, fn = 0;
  for (const auto& r : results) {
    const bool pred = r.score >= threshold;
    if (pred && r.truth)
      ++tp;
    else if (pred && !r.truth)
      ++fp;
    else if (!pred && r.truth)
      ++fn;
  }
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double f1 =
      precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return {f1, recall};
}

TrialMetrics evaluate_trial(const Model& model, const std::vector<Task>& tasks, double threshold,
                            bool identity_transform, int threads) {
  const int n = static_cast<int>(tasks.size());
  for (const Task& t : tasks)  // validate before the parallel region
    for (const auto* list : {&t.support_pos, &t.support_neg, &t.query_pos, &t.query_neg})
      for (const int v : *list)
        if (v < 0 || v >= model.emb.center.rows)
          throw UsageError("task references node " + std::to_string(v) +
                           " outside the embedding matrix");

  std::vector<TaskResult> results(n);
  bool failed = false;
#pragma omp parallel for num_threads(threads) schedule(dynamic) if (threads > 1) \
    reduction(|| : failed)
  for (int i = 0; i < n; ++i) {
    try {
      results[i] = classify_task(model, tasks[i], identity_transform);
    } catch (const std::exception&) {
      failed = true;
    }
  }
  if (failed) throw NumericError("non-finite activations while scoring tasks");

  TrialMetrics m;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (int i = 0; i < n; ++i) {
    bool has_pos = false, has_neg = false;
    for (const auto& q : results[i].queries) (q.truth ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      auc_sum += auc(results[i].queries);
      ++auc_count;
    } else {
      ++m.auc_skipped;
    }
    const auto [f1, recall] = f1_recall(results[i].queries, threshold);
    m.f1 += f1;
    m.recall += recall;
  }
  m.auc = auc_count > 0 ? auc_sum / auc_count : 0.0;
  m.f1 /= n;
  m.recall /= n;
  return m;
}

namespace {

MetricsReport aggregate(const std::vector<TrialMetrics>& trials, int n_tasks) {
  MetricsReport r;
  r.n_trials = static_cast<int>(trials.size());
  r.n_tasks = n_tasks;
  auto mean_std = [&](auto get, double& mean, double& std_out) {
    double s = 0.0;
    for (const auto& t : trials) s += get(t);
    mean = s / trials.size();
    double var = 0.0;
    for (const auto& t : trials) var += (get(t) - mean) * (get(t) - mean);
    std_out = std::sqrt(var / trials.size());
  };
  mean_std([](const TrialMetrics& t) { return t.auc; }, r.auc_mean, r.auc_std);
  mean_std([](const TrialMetrics& t) { return t.f1; }, r.f1_mean, r.f1_std);
  mean_std([](const TrialMetrics& t) { return t.recall; }, r.recall_mean, r.recall_std);
  for (const auto& t : trials) r.auc_skipped += t.auc_skipped;
  return r;
}

}  // namespace

MetricsReport evaluate(const Model& model, const LabelMatrix& labels, const std::vector<int>& pool,
                       const TaskShape& shape, int n_tasks, int n_trials, uint64_t seed,
                       double threshold, bool identity_transform, int threads) {
  if (n_tasks < 1 || n_trials < 1) throw UsageError("n_tasks and n_trials must be >= 1");
  if (eligible_labels(labels, pool, shape).empty())
    throw UsageError("no eligible labels in the evaluation pool for this shape");
  std::vector<TrialMetrics> trials;
  trials.reserve(n_trials);
  for (int t = 0; t < n_trials; ++t) {
    Rng rng(seed, "eval", static_cast<uint64_t>(t));
    std::vector<Task> tasks;
    tasks.reserve(n_tasks);
    for (int i = 0; i < n_tasks; ++i) tasks.push_back(sample_task(labels, pool, shape, rng));
    trials.push_back(evaluate_trial(model, tasks, threshold, identity_transform, threads));
  }
  return aggregate(trials, n_tasks);
}

MetricsReport evaluate_frozen(const Model& model, const std::vector<Task>& tasks, int n_trials,
                              double threshold, bool identity_transform, int threads) {
  if (tasks.empty()) throw UsageError("frozen task list is empty");
  if (n_trials < 1) throw UsageError("n_trials must be >= 1");
  const TrialMetrics one = evaluate_trial(model, tasks, threshold, identity_transform, threads);
  const std::vector<TrialMetrics> trials(n_trials, one);
  return aggregate(trials, static_cast<int>(tasks.size()));
}

void write_report(std::ostream& out, const MetricsReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "auc %.6f %.6f\n", r.auc_mean, r.auc_std);
  out << buf;
  std::snprintf(buf, sizeof(buf), "f1 %.6f %.6f\n", r.f1_mean, r.f1_std);
  out << buf;
  std::snprintf(buf, sizeof(buf), "recall %.6f %.6f\n", r.recall_mean, r.recall_std);
  out << buf;
  out << "n_tasks " << r.n_tasks << "\n";
  out << "n_trials " << r.n_trials << "\n";
  out << "auc_skipped " << r.auc_skipped << "\n";
}

void print_report(std::ostream& out, const MetricsReport& r) {
  char buf[160];
  out << "metric      mean     std\n";
  std::snprintf(buf, sizeof(buf), "AUC       %.4f  %.4f\n", r.auc_mean, r.auc_std);
  out << buf;
  std::snprintf(buf, sizeof(buf), "F1        %.4f  %.4f\n", r.f1_mean, r.f1_std);
  out << buf;
  std::snprintf(buf, sizeof(buf), "Recall    %.4f  %.4f\n", r.recall_mean, r.recall_std);
  out << buf;
  out << "tasks/trial " << r.n_tasks << ", trials " << r.n_trials;
  if (r.auc_skipped > 0) out << ", AUC-skipped tasks " << r.auc_skipped;
  out << "\n";
}

}  // namespace metatne
