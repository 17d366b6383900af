#include "metatne/tasks.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "metatne/error.hpp"

namespace metatne {

std::vector<int> eligible_labels(const LabelMatrix& labels, const std::vector<int>& pool,
                                 const TaskShape& shape) {
  std::vector<int> out;
  for (const int y : pool) {
    const int pos = static_cast<int>(labels.positives[y].size());
    const int neg = labels.node_count - pos;
    if (pos >= shape.pos_needed() && neg >= shape.neg_needed()) out.push_back(y);
  }
  return out;
}

namespace {

bool is_positive(const LabelMatrix& labels, int y, int node) {
  const auto& p = labels.positives[y];
  return std::binary_search(p.begin(), p.end(), node);
}

// k_s + k_q distinct negatives for label y, split support-first. Negatives
// are the complement of the positive set; for sparse labels rejection
// sampling is cheap, otherwise the complement is materialized.
void sample_negatives(const LabelMatrix& labels, int y, int k_s, int k_q, Rng& rng,
                      std::vector<int>& support, std::vector<int>& query) {
  const int need = k_s + k_q;
  const auto& pos = labels.positives[y];
  const int neg_count = labels.node_count - static_cast<int>(pos.size());
  std::vector<int> chosen;
  chosen.reserve(need);
  if (neg_count <= 4 * need) {
    std::vector<int> complement;
    complement.reserve(neg_count);
    size_t pi = 0;
    for (int v = 0; v < labels.node_count; ++v) {
      if (pi < pos.size() && pos[pi] == v) {
        ++pi;
        continue;
      }
      complement.push_back(v);
    }
    for (const int idx : rng.sample_indices(neg_count, need)) chosen.push_back(complement[idx]);
  } else {
    while (static_cast<int>(chosen.size()) < need) {
      const int v = static_cast<int>(rng.below(static_cast<uint64_t>(labels.node_count)));
      if (is_positive(labels, y, v)) continue;
      if (std::find(chosen.begin(), chosen.end(), v) != chosen.end()) continue;
      chosen.push_back(v);
    }
  }
  support.assign(chosen.begin(), chosen.begin() + k_s);
  query.assign(chosen.begin() + k_s, chosen.end());
  std::sort(support.begin(), support.end());
  std::sort(query.begin(), query.end());
}

}  // namespace

Task sample_task(const LabelMatrix& labels, const std::vector<int>& pool, const TaskShape& shape,
                 Rng& rng) {
  if (shape.k_support_pos < 1 || shape.k_support_neg < 1 || shape.k_query_pos < 1 ||
      shape.k_query_neg < 1)
    throw UsageError("all task shape counts must be >= 1");
  const std::vector<int> eligible = eligible_labels(labels, pool, shape);
  if (eligible.empty())
    throw UsageError("no eligible label for shape (" + std::to_string(shape.k_support_pos) + "," +
                     std::to_string(shape.k_support_neg) + "," +
                     std::to_string(shape.k_query_pos) + "," +
                     std::to_string(shape.k_query_neg) + ")");

  Task t;
  t.label_id = eligible[rng.below(eligible.size())];
  const auto& pos = labels.positives[t.label_id];

  const std::vector<int> pos_idx =
      rng.sample_indices(static_cast<int>(pos.size()), shape.pos_needed());
  for (int k = 0; k < shape.k_support_pos; ++k) t.support_pos.push_back(pos[pos_idx[k]]);
  for (int k = shape.k_support_pos; k < shape.pos_needed(); ++k)
    t.query_pos.push_back(pos[pos_idx[k]]);
  std::sort(t.support_pos.begin(), t.support_pos.end());
  std::sort(t.query_pos.begin(), t.query_pos.end());

  sample_negatives(labels, t.label_id, shape.k_support_neg, shape.k_query_neg, rng,
                   t.support_neg, t.query_neg);
  return t;
}

namespace {

void validate_task(const Task& t, const LabelMatrix& labels) {
  if (t.label_id < 0 || t.label_id >= labels.label_count)
    throw UsageError("task has label id " + std::to_string(t.label_id) + " out of range");
  auto sorted_unique = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end() ? v : std::vector<int>{};
  };
  const std::vector<int> sp = sorted_unique(t.support_pos);
  const std::vector<int> qp = sorted_unique(t.query_pos);
  const std::vector<int> sn = sorted_unique(t.support_neg);
  const std::vector<int> qn = sorted_unique(t.query_neg);
  if ((sp.empty() && !t.support_pos.empty()) || (qp.empty() && !t.query_pos.empty()) ||
      (sn.empty() && !t.support_neg.empty()) || (qn.empty() && !t.query_neg.empty()))
    throw UsageError("task has duplicate nodes within a set");
  for (const int v : sp)
    if (std::binary_search(qp.begin(), qp.end(), v))
      throw UsageError("task support and query sets overlap");
  for (const int v : sn)
    if (std::binary_search(qn.begin(), qn.end(), v))
      throw UsageError("task support and query sets overlap");
  for (const int v : t.support_pos)
    if (!is_positive(labels, t.label_id, v))
      throw UsageError("task positive support is not a positive of its label");
  for (const int v : t.query_pos)
    if (!is_positive(labels, t.label_id, v))
      throw UsageError("task positive query is not a positive of its label");
  for (const int v : t.support_neg)
    if (is_positive(labels, t.label_id, v))
      throw UsageError("task negative support holds its label");
  for (const int v : t.query_neg)
    if (is_positive(labels, t.label_id, v))
      throw UsageError("task negative query holds its label");
}

void write_ids(std::ostream& out, const std::vector<int>& ids, const Graph& g) {
  for (size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << g.external_ids[ids[i]];
}

std::vector<int> parse_ids(const std::string& field, const Graph& g, long line_no) {
  std::vector<int> out;
  std::istringstream ss(field);
  int64_t ext;
  while (ss >> ext) {
    const int internal = g.to_internal(ext);
    if (internal < 0)
      throw UsageError("task file line " + std::to_string(line_no) + ": unknown node id " +
                       std::to_string(ext));
    out.push_back(internal);
  }
  return out;
}

}  // namespace

void write_task_file(std::ostream& out, const std::vector<Task>& tasks, const Graph& g,
                     const LabelMatrix& labels) {
  for (const Task& t : tasks) validate_task(t, labels);
  for (const Task& t : tasks) {
    out << labels.external_labels[t.label_id] << " | ";
    write_ids(out, t.support_pos, g);
    out << " | ";
    write_ids(out, t.support_neg, g);
    out << " | ";
    write_ids(out, t.query_pos, g);
    out << " | ";
    write_ids(out, t.query_neg, g);
    out << '\n';
  }
}

std::vector<Task> read_task_file(std::istream& in, const Graph& g, const LabelMatrix& labels) {
  std::vector<Task> tasks;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    for (size_t p = line.find('|'); p != std::string::npos; p = line.find('|', start)) {
      fields.push_back(line.substr(start, p - start));
      start = p + 1;
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 5)
      throw UsageError("task file line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));

    Task t;
    int64_t ext_label;
    if (!(std::istringstream(fields[0]) >> ext_label))
      throw UsageError("task file line " + std::to_string(line_no) + ": bad label id");
    const auto it = std::lower_bound(labels.external_labels.begin(),
                                     labels.external_labels.end(), ext_label);
    if (it == labels.external_labels.end() || *it != ext_label)
      throw UsageError("task file line " + std::to_string(line_no) + ": unknown label " +
                       std::to_string(ext_label));
    t.label_id = static_cast<int>(it - labels.external_labels.begin());
    t.support_pos = parse_ids(fields[1], g, line_no);
    t.support_neg = parse_ids(fields[2], g, line_no);
    t.query_pos = parse_ids(fields[3], g, line_no);
    t.query_neg = parse_ids(fields[4], g, line_no);

    for (const int v : t.support_pos)
      if (!is_positive(labels, t.label_id, v))
        throw UsageError("task file line " + std::to_string(line_no) +
                         ": support node is not a positive of its label");
    for (const int v : t.query_pos)
      if (!is_positive(labels, t.label_id, v))
        throw UsageError("task file line " + std::to_string(line_no) +
                         ": query node is not a positive of its label");
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace metatne
