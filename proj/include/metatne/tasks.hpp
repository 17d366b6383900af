#pragma once

#include <iosfwd>
#include <vector>

#include "metatne/graph.hpp"
#include "metatne/rng.hpp"

namespace metatne {

// Episode shape: numbers of positive/negative support and query nodes.
struct TaskShape {
  int k_support_pos = 10;
  int k_support_neg = 20;
  int k_query_pos = 10;
  int k_query_neg = 20;

  int pos_needed() const { return k_support_pos + k_query_pos; }
  int neg_needed() const { return k_support_neg + k_query_neg; }
};

// One few-shot binary classification episode for label_id. Support and query
// sets are disjoint and duplicate-free by construction.
struct Task {
  int label_id = -1;
  std::vector<int> support_pos;
  std::vector<int> support_neg;
  std::vector<int> query_pos;
  std::vector<int> query_neg;
};

// Labels in `pool` with enough positives and negatives for the shape.
std::vector<int> eligible_labels(const LabelMatrix& labels, const std::vector<int>& pool,
                                 const TaskShape& shape);

Task sample_task(const LabelMatrix& labels, const std::vector<int>& pool, const TaskShape& shape,
                 Rng& rng);

// Frozen-task text format, one record per line:
//   label_id | S+ ids | S- ids | Q+ ids | Q- ids
// Ids are external so files stay meaningful across runs and implementations.
void write_task_file(std::ostream& out, const std::vector<Task>& tasks, const Graph& g,
                     const LabelMatrix& labels);
std::vector<Task> read_task_file(std::istream& in, const Graph& g, const LabelMatrix& labels);

}  // namespace metatne
