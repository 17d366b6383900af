#include "metatne/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "metatne/config.hpp"
#include "metatne/error.hpp"
#include "metatne/graph.hpp"
#include "metatne/io.hpp"
#include "metatne/metrics.hpp"
#include "metatne/model.hpp"
#include "metatne/schedule.hpp"
#include "metatne/tasks.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace metatne {

namespace {

struct CommonOpts {
  std::string edges_path, labels_path, config_path, out_dir = ".";
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_data) {
  auto* e = cmd->add_option("--edges", o.edges_path, "edge list file");
  auto* l = cmd->add_option("--labels", o.labels_path, "label list file");
  if (needs_data) {
    e->required();
    l->required();
  }
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--threads", o.threads, "worker threads (1 = deterministic)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--set", o.overrides, "override any config key, key=value")
      ->take_all();
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config_file(o.config_path);
  apply_env_overrides(cfg);
  for (const std::string& kv : o.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set_key(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

Graph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open edge file: " + path);
  return load_edge_list(in);
}

LabelMatrix load_label_file(const std::string& path, const Graph& g) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open label file: " + path);
  return load_labels(in, g);
}

const std::vector<int>& pick_pool(const LabelSplit& split, const std::string& pool) {
  if (pool == "known" || pool == "train") return split.known;
  if (pool == "validation" || pool == "val") return split.validation;
  if (pool == "novel" || pool == "test") return split.novel;
  throw UsageError("unknown label pool: " + pool);
}

void write_manifest(const fs::path& out_dir, const RunConfig& cfg, const CommonOpts& opts,
                    const std::vector<std::string>& checkpoint_names,
                    const TrainResult* train_result) {
  ordered_json m;
  m["seed"] = cfg.seed;
  m["config"] = cfg.to_text();
  ordered_json data;
  for (const auto& [name, path] :
       {std::pair{"edges", opts.edges_path}, std::pair{"labels", opts.labels_path}}) {
    if (path.empty()) continue;
    data[name] = {{"path", path}, {"digest", file_digest(path)}};
  }
  m["datasets"] = data;
  ordered_json cps;
  for (const std::string& name : checkpoint_names)
    cps[name] = {{"path", name}, {"digest", file_digest((out_dir / name).string())}};
  m["checkpoints"] = cps;
  if (train_result) {
    ordered_json hist = ordered_json::array();
    for (const auto& v : train_result->history)
      hist.push_back({{"step", v.step}, {"f1", v.f1}});
    m["validation"] = hist;
    m["best"] = {{"step", train_result->best_step}, {"f1", train_result->best_f1}};
    m["skipped_steps"] = train_result->skipped_steps;
    m["aborted"] = train_result->aborted;
  }
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw UsageError("cannot write manifest in " + out_dir.string());
  out << m.dump(2) << "\n";
}

Model load_checkpoint(const std::string& dir) {
  Model model;
  model.emb = load_embeddings((fs::path(dir) / "embeddings.bin").string());
  model.transform = load_transform((fs::path(dir) / "transform.bin").string());
  if (model.emb.dim != model.transform.config.d)
    throw UsageError("checkpoint mismatch: embeddings have d=" + std::to_string(model.emb.dim) +
                     " but transform header says d=" + std::to_string(model.transform.config.d));
  return model;
}

int cmd_train(const CommonOpts& opts) {
  const RunConfig cfg = resolve_config(opts);
  const Graph graph = load_graph_file(opts.edges_path);
  const LabelMatrix labels = load_label_file(opts.labels_path, graph);
  const LabelSplit split =
      split_labels(labels, cfg.split_train, cfg.split_val, cfg.split_test, cfg.seed);

  fs::create_directories(opts.out_dir);
  const fs::path out_dir(opts.out_dir);

  std::ofstream log(out_dir / "train.log");
  if (!log) throw UsageError("cannot write training log in " + opts.out_dir);
  const auto logger = [&](const TrainEvent& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step=%lld phase=%s tau=%.6f loss=%.6f\n",
                  static_cast<long long>(e.step), e.phase == 's' ? "struct" : "meta", e.tau_value,
                  e.loss);
    log << buf;
  };

  const TrainResult result = train(graph, labels, split, cfg, logger);

  save_embeddings(result.model.emb, (out_dir / "embeddings.bin").string(), cfg.to_text());
  save_transform(result.model.transform, (out_dir / "transform.bin").string());
  {
    std::ofstream remap(out_dir / "remap.txt");
    save_remap(graph, remap);
  }
  write_manifest(out_dir, cfg, opts, {"embeddings.bin", "transform.bin"}, &result);

  if (result.aborted) {
    std::cerr << "training aborted after repeated numerical errors; checkpoint written to "
              << opts.out_dir << "\n";
    return 1;
  }
  std::cout << "trained " << cfg.steps << " steps";
  if (result.best_step >= 0) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "; best validation F1 %.4f at step %lld", result.best_f1,
                  static_cast<long long>(result.best_step));
    std::cout << buf;
  }
  std::cout << "; checkpoints in " << opts.out_dir << "\n";
  return 0;
}

struct EvalOpts {
  CommonOpts common;
  std::string checkpoint_dir;
  std::string tasks_path;
  std::string pool = "novel";
  int n_tasks = 1000;
  int trials = 50;
  std::optional<double> threshold;
  std::optional<int> ksp, ksn, kqp, kqn;
  bool identity_transform = false;
};

int cmd_eval(const EvalOpts& eo) {
  RunConfig cfg = resolve_config(eo.common);
  if (eo.threshold) cfg.threshold = *eo.threshold;
  if (eo.ksp) cfg.k_support_pos = *eo.ksp;
  if (eo.ksn) cfg.k_support_neg = *eo.ksn;
  if (eo.kqp) cfg.k_query_pos = *eo.kqp;
  if (eo.kqn) cfg.k_query_neg = *eo.kqn;
  cfg.validate();

  const Graph graph = load_graph_file(eo.common.edges_path);
  const LabelMatrix labels = load_label_file(eo.common.labels_path, graph);
  const Model model = load_checkpoint(eo.checkpoint_dir);
  if (model.emb.center.rows != graph.node_count)
    throw UsageError("checkpoint mismatch: embeddings cover " +
                     std::to_string(model.emb.center.rows) + " nodes but the graph has " +
                     std::to_string(graph.node_count));

  MetricsReport report;
  if (!eo.tasks_path.empty()) {
    std::ifstream in(eo.tasks_path);
    if (!in) throw UsageError("cannot open task file: " + eo.tasks_path);
    const std::vector<Task> tasks = read_task_file(in, graph, labels);
    report = evaluate_frozen(model, tasks, eo.trials, cfg.threshold, eo.identity_transform,
                             cfg.threads);
  } else {
    const LabelSplit split =
        split_labels(labels, cfg.split_train, cfg.split_val, cfg.split_test, cfg.seed);
    report = evaluate(model, labels, pick_pool(split, eo.pool), cfg.shape(), eo.n_tasks,
                      eo.trials, cfg.seed, cfg.threshold, eo.identity_transform, cfg.threads);
  }

  fs::create_directories(eo.common.out_dir);
  const fs::path out_dir(eo.common.out_dir);
  {
    std::ofstream kv(out_dir / "report.kv");
    write_report(kv, report);
    std::ofstream txt(out_dir / "report.txt");
    print_report(txt, report);
  }
  print_report(std::cout, report);
  return 0;
}

struct SampleOpts {
  CommonOpts common;
  std::string pool = "novel";
  std::string out_file = "tasks.txt";
  int count = 1000;
  std::optional<int> ksp, ksn, kqp, kqn;
};

int cmd_sample_tasks(const SampleOpts& so) {
  RunConfig cfg = resolve_config(so.common);
  if (so.ksp) cfg.k_support_pos = *so.ksp;
  if (so.ksn) cfg.k_support_neg = *so.ksn;
  if (so.kqp) cfg.k_query_pos = *so.kqp;
  if (so.kqn) cfg.k_query_neg = *so.kqn;
  cfg.validate();

  const Graph graph = load_graph_file(so.common.edges_path);
  const LabelMatrix labels = load_label_file(so.common.labels_path, graph);
  const LabelSplit split =
      split_labels(labels, cfg.split_train, cfg.split_val, cfg.split_test, cfg.seed);
  const std::vector<int>& pool = pick_pool(split, so.pool);

  Rng rng(cfg.seed, "sample-tasks");
  std::vector<Task> tasks;
  tasks.reserve(so.count);
  for (int i = 0; i < so.count; ++i) tasks.push_back(sample_task(labels, pool, cfg.shape(), rng));

  std::ofstream out(so.out_file);
  if (!out) throw UsageError("cannot write task file: " + so.out_file);
  write_task_file(out, tasks, graph, labels);
  std::cout << "wrote " << tasks.size() << " tasks to " << so.out_file << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint_dir) {
  const Model model = load_checkpoint(checkpoint_dir);
  const TransformConfig& c = model.transform.config;

  std::cout << "transform config: d=" << c.d << " d_prime=" << c.d_prime << " heads=" << c.heads
            << " d_ff=" << c.d_ff << " blocks=" << c.blocks << " p_drop=" << c.p_drop
            << " ln_epsilon=" << c.ln_epsilon << "\n";
  std::cout << "parameter count: " << model.transform.param_count() << "\n";

  char buf[160];
  std::snprintf(buf, sizeof(buf), "parameter l2 norm: %.6f\n",
                std::sqrt(model.transform.squared_norm()));
  std::cout << buf;

  double gain_sum = 0.0;
  size_t gain_n = 0;
  for (const auto& b : model.transform.blocks) {
    for (const double g : b.ln1_gain) gain_sum += g;
    for (const double g : b.ln2_gain) gain_sum += g;
    gain_n += b.ln1_gain.size() + b.ln2_gain.size();
  }
  std::snprintf(buf, sizeof(buf), "layer-norm gain mean: %.6f\n", gain_sum / gain_n);
  std::cout << buf;

  const Mat& u = model.emb.center;
  double min_norm = 0.0, max_norm = 0.0, mean_norm = 0.0;
  for (int i = 0; i < u.rows; ++i) {
    const double norm = std::sqrt(dot(u.row(i), u.row(i), u.cols));
    if (i == 0 || norm < min_norm) min_norm = norm;
    if (i == 0 || norm > max_norm) max_norm = norm;
    mean_norm += norm;
  }
  if (u.rows > 0) mean_norm /= u.rows;
  std::cout << "embeddings: " << u.rows << " nodes, d=" << model.emb.dim << "\n";
  std::snprintf(buf, sizeof(buf), "embedding row norms: min=%.6f max=%.6f mean=%.6f\n", min_norm,
                max_norm, mean_norm);
  std::cout << buf;
  return 0;
}

}  // namespace

bool verify_manifest(const std::string& out_dir) {
  std::ifstream in(fs::path(out_dir) / "manifest.json");
  if (!in) return false;
  ordered_json m;
  in >> m;
  for (const auto& section : {"datasets", "checkpoints"}) {
    if (!m.contains(section)) continue;
    for (const auto& [name, entry] : m[section].items()) {
      std::string path = entry["path"].get<std::string>();
      if (section == std::string("checkpoints")) path = (fs::path(out_dir) / path).string();
      if (file_digest(path) != entry["digest"].get<std::string>()) return false;
    }
  }
  return true;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"MetaTNE: few-shot node classification via meta-transformed network embedding"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model end to end");
  add_common(train_cmd, train_opts, true);

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on few-shot tasks");
  add_common(eval_cmd, eval_opts.common, true);
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint_dir, "checkpoint directory")
      ->required();
  eval_cmd->add_option("--tasks", eval_opts.tasks_path, "frozen task file");
  eval_cmd->add_option("--pool", eval_opts.pool, "label pool: known|validation|novel");
  eval_cmd->add_option("--n-tasks", eval_opts.n_tasks, "tasks per trial");
  eval_cmd->add_option("--trials", eval_opts.trials, "number of trials");
  eval_cmd->add_option("--threshold", eval_opts.threshold, "classification threshold");
  eval_cmd->add_option("--k-support-pos", eval_opts.ksp, "positive support nodes per task");
  eval_cmd->add_option("--k-support-neg", eval_opts.ksn, "negative support nodes per task");
  eval_cmd->add_option("--k-query-pos", eval_opts.kqp, "positive query nodes per task");
  eval_cmd->add_option("--k-query-neg", eval_opts.kqn, "negative query nodes per task");
  eval_cmd->add_flag("--identity-transform", eval_opts.identity_transform,
                     "classify on raw embeddings (task-agnostic reference path)");

  SampleOpts sample_opts;
  auto* sample_cmd = app.add_subcommand("sample-tasks", "export a frozen task file");
  add_common(sample_cmd, sample_opts.common, true);
  sample_cmd->add_option("--pool", sample_opts.pool, "label pool: known|validation|novel");
  sample_cmd->add_option("--n", sample_opts.count, "number of tasks");
  sample_cmd->add_option("--out-file", sample_opts.out_file, "output task file");
  sample_cmd->add_option("--k-support-pos", sample_opts.ksp, "positive support nodes per task");
  sample_cmd->add_option("--k-support-neg", sample_opts.ksn, "negative support nodes per task");
  sample_cmd->add_option("--k-query-pos", sample_opts.kqp, "positive query nodes per task");
  sample_cmd->add_option("--k-query-neg", sample_opts.kqn, "negative query nodes per task");

  std::string inspect_dir;
  auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint statistics");
  inspect_cmd->add_option("--checkpoint", inspect_dir, "checkpoint directory")->required();

  try {
    // CLI11 wants argv-style reversed arguments.
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (eval_cmd->parsed()) return cmd_eval(eval_opts);
    if (sample_cmd->parsed()) return cmd_sample_tasks(sample_opts);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace metatne
