#include <doctest.h>

#include <cmath>

#include "../oracle/brute_metrics.hpp"
#include "metatne/error.hpp"
#include "metatne/metrics.hpp"
#include "metatne/rng.hpp"

using namespace metatne;

namespace {

std::vector<ScoredQuery> random_results(Rng& rng, int n, int distinct_scores = 0) {
  std::vector<ScoredQuery> r(n);
  for (auto& q : r) {
    q.truth = rng.below(2) ? 1 : 0;
    q.score = distinct_scores > 0
                  ? static_cast<double>(rng.below(distinct_scores)) / distinct_scores
                  : rng.uniform();
  }
  return r;
}

bool single_class(const std::vector<ScoredQuery>& r) {
  bool pos = false, neg = false;
  for (const auto& q : r) (q.truth ? pos : neg) = true;
  return !(pos && neg);
}

Model degenerate_model(int nodes, int d) {
  Model m;
  m.emb = init_embeddings(nodes, d, 1);
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < d; ++j) m.emb.center(i, j) = 0.1 * j;  // identical rows
  m.transform = init_transform({d, d, 1, d, 1, 0.0, 1e-5}, 1);
  for (auto& b : m.transform.blocks) {
    for (auto& w : b.w_q) w.zero();
    for (auto& w : b.w_k) w.zero();
    for (auto& w : b.w_v) w.zero();
    b.ffn_w1.zero();
    b.ffn_w2.zero();
    std::fill(b.ffn_b1.begin(), b.ffn_b1.end(), 0.0);
    std::fill(b.ffn_b2.begin(), b.ffn_b2.end(), 0.0);
  }
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("auc on frozen examples") {
  CHECK(auc({{0.9, 1}, {0.1, 0}}) == 1.0);
  CHECK(auc({{0.5, 1}, {0.5, 0}}) == 0.5);
  // brute force over the 4 positive-negative pairs: wins 3 of 4
  const std::vector<ScoredQuery> r{{0.8, 1}, {0.6, 0}, {0.4, 1}, {0.2, 0}};
  CHECK(auc(r) == 0.75);
  CHECK(oracle::brute_auc(r) == 0.75);
}

TEST_CASE("auc rejects single-class input") {
  CHECK_THROWS_AS(auc({{0.5, 1}, {0.6, 1}}), MetricError);
  CHECK_THROWS_AS(auc({{0.5, 0}}), MetricError);
}

TEST_CASE("auc equals the pairwise oracle exactly, ties included") {
  Rng rng(8, "auc");
  int checked = 0;
  while (checked < 400) {
    const auto r = random_results(rng, 2 + static_cast<int>(rng.below(12)), 4);
    if (single_class(r)) continue;
    CHECK(auc(r) == oracle::brute_auc(r));
    ++checked;
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(9, "auc-mono");
  for (int trial = 0; trial < 100; ++trial) {
    auto r = random_results(rng, 10, 5);
    if (single_class(r)) continue;
    const double base = auc(r);
    const double a = rng.uniform(0.5, 3.0), b = rng.uniform(0.1, 2.0);
    auto mapped = r;
    for (auto& q : mapped) q.score = a * std::atan(b * q.score) + 7.0;
    CHECK(auc(mapped) == base);
    for (auto& q : mapped) q.score = std::exp(q.score);
    CHECK(auc(mapped) == base);
  }
}

TEST_CASE("auc of random labels concentrates near one half") {
  Rng rng(10, "auc-random");
  double sum = 0.0;
  int n = 0;
  while (n < 1000) {
    const auto r = random_results(rng, 30);
    if (single_class(r)) continue;
    sum += auc(r);
    ++n;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.02);
}

TEST_CASE("f1 and recall on frozen examples") {
  // truths (1,1,0,0), scores (0.9,0.4,0.6,0.1), threshold 0.5:
  // TP=1 FP=1 FN=1 -> precision = recall = f1 = 0.5
  const std::vector<ScoredQuery> r{{0.9, 1}, {0.4, 1}, {0.6, 0}, {0.1, 0}};
  const auto [f1, recall] = f1_recall(r, 0.5);
  CHECK(f1 == 0.5);
  CHECK(recall == 0.5);

  const auto [f1_all, recall_all] = f1_recall({{0.9, 1}, {0.2, 0}}, 0.5);
  CHECK(f1_all == 1.0);
  CHECK(recall_all == 1.0);

  const auto [f1_none, recall_none] = f1_recall({{0.1, 1}, {0.2, 1}}, 0.5);
  CHECK(f1_none == 0.0);
  CHECK(recall_none == 0.0);
}

TEST_CASE("threshold zero recalls every positive") {
  Rng rng(11, "recall");
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = random_results(rng, 12);
    bool has_pos = false;
    for (const auto& q : r) has_pos |= q.truth == 1;
    if (!has_pos) continue;
    CHECK(f1_recall(r, 0.0).second == 1.0);
  }
}

TEST_CASE("f1_recall equals the confusion-matrix oracle") {
  Rng rng(12, "f1");
  for (int trial = 0; trial < 400; ++trial) {
    const auto r = random_results(rng, 1 + static_cast<int>(rng.below(15)), 6);
    const double threshold = rng.uniform();
    CHECK(f1_recall(r, threshold) == oracle::brute_f1_recall(r, threshold));
  }
}

TEST_CASE("identical embeddings with a zero-weight transform score one half") {
  const Model m = degenerate_model(20, 4);
  Task t;
  t.label_id = 0;
  t.support_pos = {0, 1};
  t.support_neg = {2, 3, 4};
  t.query_pos = {5};
  t.query_neg = {6, 7};
  for (const bool identity : {false, true}) {
    const TaskResult r = classify_task(m, t, identity);
    REQUIRE(r.queries.size() == 3);
    for (const auto& q : r.queries) CHECK(q.score == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("separated clusters put the query on the right side") {
  Model m;
  m.emb = init_embeddings(10, 4, 1);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 4; ++j) m.emb.center(i, j) = i < 5 ? 1.0 + 0.01 * j : -1.0 - 0.01 * j;
  m.transform = init_transform({4, 4, 1, 4, 1, 0.0, 1e-5}, 1);
  Task t;
  t.label_id = 0;
  t.support_pos = {0, 1};
  t.support_neg = {5, 6};
  t.query_pos = {2};
  t.query_neg = {7};
  const TaskResult r = classify_task(m, t, /*identity_transform=*/true);
  CHECK(r.queries[0].score > 0.5);
  CHECK(r.queries[1].score < 0.5);
}

TEST_CASE("evaluation is deterministic and reports skip counts") {
  const Model m = degenerate_model(30, 4);
  std::vector<Task> tasks;
  for (int i = 0; i < 5; ++i) {
    Task t;
    t.label_id = 0;
    t.support_pos = {0, 1};
    t.support_neg = {2, 3};
    t.query_pos = {4 + i};
    t.query_neg = {10 + i};
    tasks.push_back(t);
  }
  // One degenerate record: single-class query set, AUC must skip it.
  Task degenerate = tasks[0];
  degenerate.query_neg.clear();
  tasks.push_back(degenerate);

  const MetricsReport a = evaluate_frozen(m, tasks, 2, 0.5, false, 1);
  const MetricsReport b = evaluate_frozen(m, tasks, 2, 0.5, false, 1);
  CHECK(a.auc_mean == b.auc_mean);
  CHECK(a.f1_mean == b.f1_mean);
  CHECK(a.auc_skipped == 2);  // one task per trial, two trials
  CHECK(a.auc_std == 0.0);    // frozen tasks: every trial identical
  CHECK(a.n_tasks == 6);
}

TEST_CASE("parallel evaluation reduces in task order, matching serial") {
  Model m;
  m.emb = init_embeddings(40, 6, 3);
  Rng rng(3, "par-eval");
  for (double& v : m.emb.center.a) v = rng.uniform(-1, 1);
  m.transform = init_transform({6, 6, 2, 8, 1, 0.0, 1e-5}, 3);

  std::vector<Task> tasks;
  for (int i = 0; i < 12; ++i) {
    Task t;
    t.label_id = 0;
    t.support_pos = {i, i + 1};
    t.support_neg = {i + 13, i + 14};
    t.query_pos = {i + 26};
    t.query_neg = {(i + 28) % 40};
    tasks.push_back(t);
  }
  const TrialMetrics serial = evaluate_trial(m, tasks, 0.5, false, 1);
  const TrialMetrics parallel = evaluate_trial(m, tasks, 0.5, false, 3);
  CHECK(serial.auc == parallel.auc);
  CHECK(serial.f1 == parallel.f1);
  CHECK(serial.recall == parallel.recall);
}

TEST_CASE("evaluation rejects tasks outside the embedding matrix") {
  Model m;
  m.emb = init_embeddings(10, 4, 1);
  m.transform = init_transform({4, 4, 1, 4, 1, 0.0, 1e-5}, 1);
  Task t;
  t.label_id = 0;
  t.support_pos = {0};
  t.support_neg = {1};
  t.query_pos = {99};  // out of range
  t.query_neg = {2};
  CHECK_THROWS_AS(evaluate_trial(m, {t}, 0.5, false, 2), UsageError);
}

TEST_CASE("report fields stay in range") {
  const Model m = degenerate_model(30, 4);
  std::vector<Task> tasks(4);
  for (int i = 0; i < 4; ++i) {
    tasks[i].label_id = 0;
    tasks[i].support_pos = {0, 1};
    tasks[i].support_neg = {2, 3};
    tasks[i].query_pos = {4 + i};
    tasks[i].query_neg = {14 + i};
  }
  const MetricsReport r = evaluate_frozen(m, tasks, 3, 0.5, false, 1);
  for (const double v : {r.auc_mean, r.f1_mean, r.recall_mean}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (const double v : {r.auc_std, r.f1_std, r.recall_std}) CHECK(v >= 0.0);
}

}  // TEST_SUITE
