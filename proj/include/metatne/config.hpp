#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "metatne/tasks.hpp"
#include "metatne/transform.hpp"

namespace metatne {

// Every tunable of a run, loadable from a flat "key = value" file, with
// METATNE_<KEY> environment overrides and CLI flag overrides on top.
struct RunConfig {
  // optimization schedule
  long long steps = 10000;
  double gamma = 0.1;
  long long decay_period = 1000;
  // structural module
  int n1 = 512;
  int n_neg = 5;
  double lr_struct = 0.001;
  double noise_exponent = 0.75;
  std::string struct_opt = "adam";  // adam | sgd (sgd allows hogwild updates)
  bool struct_only = false;         // skip meta phases entirely
  int d = 128;
  // meta-learning module
  int n2 = 32;
  double lr_meta = 0.001;
  double lambda = 0.001;
  int d_prime = 128;
  int heads = 2;
  int d_ff = 256;
  int blocks = 2;
  double p_drop = 0.1;
  double ln_epsilon = 1e-5;
  // task shape
  int k_support_pos = 10;
  int k_support_neg = 20;
  int k_query_pos = 10;
  int k_query_neg = 20;
  // label split
  double split_train = 0.6;
  double split_val = 0.2;
  double split_test = 0.2;
  // validation / evaluation
  int val_tasks = 200;
  double threshold = 0.5;
  // run control
  uint64_t seed = 1;
  int threads = 1;
  long long log_every = 100;

  TaskShape shape() const {
    return {k_support_pos, k_support_neg, k_query_pos, k_query_neg};
  }
  TransformConfig transform() const {
    return {d, d_prime, heads, d_ff, blocks, p_drop, ln_epsilon};
  }

  void validate() const;
  void set_key(const std::string& key, const std::string& value);
  std::string to_text() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config_file(const std::string& path);

// Applies METATNE_<UPPERCASE_KEY> environment variables.
void apply_env_overrides(RunConfig& cfg);

}  // namespace metatne
