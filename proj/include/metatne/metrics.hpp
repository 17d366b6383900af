#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "metatne/graph.hpp"
#include "metatne/model.hpp"
#include "metatne/tasks.hpp"

namespace metatne {

struct ScoredQuery {
  double score = 0.0;
  int truth = 0;
};

struct TaskResult {
  int task_index = 0;
  std::vector<ScoredQuery> queries;
};

// Scores every query node of the task with the trained model (eval mode).
// identity_transform classifies on the raw embeddings instead.
TaskResult classify_task(const Model& model, const Task& task, bool identity_transform = false);

// Mann-Whitney AUC via rank sums with average ranks for ties. Throws
// MetricError when the input has a single class.
double auc(const std::vector<ScoredQuery>& results);

// Threshold classification: prediction = score >= threshold. Zero
// denominators yield 0.
std::pair<double, double> f1_recall(const std::vector<ScoredQuery>& results, double threshold);

struct TrialMetrics {
  double auc = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  int auc_skipped = 0;  // single-class tasks, skipped for AUC only
};

// Macro-average over one trial's tasks; parallel over tasks, reduced in task
// order so results do not depend on the thread count.
TrialMetrics evaluate_trial(const Model& model, const std::vector<Task>& tasks, double threshold,
                            bool identity_transform, int threads);

struct MetricsReport {
  double auc_mean = 0.0, auc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  int n_trials = 0;
  int n_tasks = 0;
  long long auc_skipped = 0;
};

// Samples n_tasks fresh tasks per trial from the pool and aggregates
// mean +- std across trials.
MetricsReport evaluate(const Model& model, const LabelMatrix& labels, const std::vector<int>& pool,
                       const TaskShape& shape, int n_tasks, int n_trials, uint64_t seed,
                       double threshold, bool identity_transform, int threads);

// Evaluation over a frozen task list (every trial sees the same tasks).
MetricsReport evaluate_frozen(const Model& model, const std::vector<Task>& tasks, int n_trials,
                              double threshold, bool identity_transform, int threads);

// Machine-readable line format: "metric mean std", then counters.
void write_report(std::ostream& out, const MetricsReport& r);
// Human-readable table.
void print_report(std::ostream& out, const MetricsReport& r);

}  // namespace metatne
