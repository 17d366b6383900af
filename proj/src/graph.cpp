#include "metatne/graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "metatne/error.hpp"
#include "metatne/rng.hpp"

namespace metatne {

namespace {

bool is_comment_or_blank(const std::string& line) {
  for (const char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// Parses exactly `need` integers from a line; anything else is a parse error.
void parse_ints(const std::string& line, long line_no, int64_t* out, int need) {
  const char* p = line.c_str();
  const char* end = p + line.size();
  for (int k = 0; k < need; ++k) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    bool neg = false;
    if (p < end && (*p == '-' || *p == '+')) neg = (*p++ == '-');
    if (p >= end || !std::isdigit(static_cast<unsigned char>(*p)))
      throw UsageError("parse error at line " + std::to_string(line_no) + ": '" + line + "'");
    int64_t v = 0;
    while (p < end && std::isdigit(static_cast<unsigned char>(*p))) v = v * 10 + (*p++ - '0');
    out[k] = neg ? -v : v;
  }
  while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
  if (p != end)
    throw UsageError("parse error at line " + std::to_string(line_no) + ": trailing content");
}

int rank_of(const std::vector<int64_t>& sorted, int64_t v) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
  if (it == sorted.end() || *it != v) return -1;
  return static_cast<int>(it - sorted.begin());
}

}  // namespace

int Graph::to_internal(int64_t external) const {
  return rank_of(external_ids, external);
}

Graph load_edge_list(std::istream& in) {
  std::vector<std::pair<int64_t, int64_t>> raw;
  std::vector<int64_t> ids;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_comment_or_blank(line)) continue;
    int64_t uv[2];
    parse_ints(line, line_no, uv, 2);
    if (uv[0] < 0 || uv[1] < 0)
      throw UsageError("parse error at line " + std::to_string(line_no) + ": negative node id");
    ids.push_back(uv[0]);
    ids.push_back(uv[1]);
    if (uv[0] != uv[1]) raw.emplace_back(uv[0], uv[1]);  // self-loops dropped, endpoints kept
  }
  if (ids.empty()) throw UsageError("empty graph: no edges in input");

  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Graph g;
  g.external_ids = std::move(ids);
  g.node_count = static_cast<int>(g.external_ids.size());
  g.adjacency.assign(g.node_count, {});

  for (auto& [eu, ev] : raw) {
    int u = rank_of(g.external_ids, eu);
    int v = rank_of(g.external_ids, ev);
    if (u > v) std::swap(u, v);
    g.edges.emplace_back(u, v);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  for (const auto& [u, v] : g.edges) {
    g.adjacency[u].push_back(v);
    g.adjacency[v].push_back(u);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

void save_edge_list(const Graph& g, std::ostream& out) {
  for (const auto& [u, v] : g.edges)
    out << g.external_ids[u] << ' ' << g.external_ids[v] << '\n';
}

void save_remap(const Graph& g, std::ostream& out) {
  for (int i = 0; i < g.node_count; ++i) out << i << ' ' << g.external_ids[i] << '\n';
}

namespace {

LabelMatrix build_labels(std::vector<std::pair<int, int64_t>>&& pairs, int node_count) {
  std::vector<int64_t> label_ids;
  label_ids.reserve(pairs.size());
  for (const auto& [node, label] : pairs) label_ids.push_back(label);
  std::sort(label_ids.begin(), label_ids.end());
  label_ids.erase(std::unique(label_ids.begin(), label_ids.end()), label_ids.end());

  LabelMatrix m;
  m.external_labels = std::move(label_ids);
  m.label_count = static_cast<int>(m.external_labels.size());
  m.node_count = node_count;
  m.positives.assign(m.label_count, {});
  for (const auto& [node, label] : pairs)
    m.positives[rank_of(m.external_labels, label)].push_back(node);
  for (auto& p : m.positives) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());  // duplicate rows collapse
  }
  return m;
}

std::vector<std::pair<int64_t, int64_t>> read_label_lines(std::istream& in) {
  std::vector<std::pair<int64_t, int64_t>> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_comment_or_blank(line)) continue;
    int64_t nl[2];
    parse_ints(line, line_no, nl, 2);
    if (nl[0] < 0 || nl[1] < 0)
      throw UsageError("parse error at line " + std::to_string(line_no) + ": negative id");
    out.emplace_back(nl[0], nl[1]);
  }
  return out;
}

}  // namespace

LabelMatrix load_labels(std::istream& in, int node_count) {
  std::vector<std::pair<int, int64_t>> pairs;
  for (const auto& [node, label] : read_label_lines(in)) {
    if (node >= node_count)
      throw UsageError("label references node " + std::to_string(node) + " >= node_count " +
                       std::to_string(node_count));
    pairs.emplace_back(static_cast<int>(node), label);
  }
  return build_labels(std::move(pairs), node_count);
}

LabelMatrix load_labels(std::istream& in, const Graph& g) {
  std::vector<std::pair<int, int64_t>> pairs;
  for (const auto& [node, label] : read_label_lines(in)) {
    const int internal = g.to_internal(node);
    if (internal < 0)
      throw UsageError("label references node " + std::to_string(node) +
                       " absent from the edge list");
    pairs.emplace_back(internal, label);
  }
  return build_labels(std::move(pairs), g.node_count);
}

LabelSplit split_labels(const LabelMatrix& labels, double r_train, double r_val, double r_test,
                        uint64_t seed) {
  if (r_train <= 0 || r_val <= 0 || r_test <= 0)
    throw UsageError("split ratios must be positive");
  if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
    throw UsageError("split ratios must sum to 1");
  const int n = labels.label_count;
  if (n < 3) throw UsageError("cannot split " + std::to_string(n) + " labels three ways");

  int sizes[3] = {static_cast<int>(std::floor(r_train * n)),
                  static_cast<int>(std::floor(r_val * n)),
                  static_cast<int>(std::floor(r_test * n))};
  int remainder = n - sizes[0] - sizes[1] - sizes[2];
  for (int k = 0; remainder > 0; k = (k + 1) % 3, --remainder) ++sizes[k];  // train-first

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, "split");
  rng.shuffle(order);

  LabelSplit s;
  s.known.assign(order.begin(), order.begin() + sizes[0]);
  s.validation.assign(order.begin() + sizes[0], order.begin() + sizes[0] + sizes[1]);
  s.novel.assign(order.begin() + sizes[0] + sizes[1], order.end());
  std::sort(s.known.begin(), s.known.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.novel.begin(), s.novel.end());
  return s;
}

}  // namespace metatne
