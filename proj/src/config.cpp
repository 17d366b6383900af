#include "metatne/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <vector>

#include "metatne/error.hpp"

namespace metatne {

namespace {

struct KeyBinding {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T v;
  if (!(ss >> v)) throw UsageError("bad value for config key " + key + ": '" + value + "'");
  std::string rest;
  if (ss >> rest) throw UsageError("trailing content for config key " + key);
  return v;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

#define NUM_KEY(field)                                                                   \
  { #field,                                                                              \
    [](RunConfig& c, const std::string& v) {                                             \
      c.field = parse_number<decltype(c.field)>(#field, v);                              \
    },                                                                                   \
    [](const RunConfig& c) {                                                             \
      if constexpr (std::is_floating_point_v<decltype(c.field)>)                         \
        return format_double(c.field);                                                   \
      else                                                                               \
        return std::to_string(c.field);                                                  \
    } }

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = {
      NUM_KEY(steps),
      NUM_KEY(gamma),
      NUM_KEY(decay_period),
      NUM_KEY(n1),
      NUM_KEY(n_neg),
      NUM_KEY(lr_struct),
      NUM_KEY(noise_exponent),
      {"struct_opt", [](RunConfig& c, const std::string& v) { c.struct_opt = v; },
       [](const RunConfig& c) { return c.struct_opt; }},
      {"struct_only",
       [](RunConfig& c, const std::string& v) {
         if (v == "true" || v == "1")
           c.struct_only = true;
         else if (v == "false" || v == "0")
           c.struct_only = false;
         else
           throw UsageError("struct_only must be true/false");
       },
       [](const RunConfig& c) { return std::string(c.struct_only ? "true" : "false"); }},
      NUM_KEY(d),
      NUM_KEY(n2),
      NUM_KEY(lr_meta),
      NUM_KEY(lambda),
      NUM_KEY(d_prime),
      NUM_KEY(heads),
      NUM_KEY(d_ff),
      NUM_KEY(blocks),
      NUM_KEY(p_drop),
      NUM_KEY(ln_epsilon),
      NUM_KEY(k_support_pos),
      NUM_KEY(k_support_neg),
      NUM_KEY(k_query_pos),
      NUM_KEY(k_query_neg),
      NUM_KEY(split_train),
      NUM_KEY(split_val),
      NUM_KEY(split_test),
      NUM_KEY(val_tasks),
      NUM_KEY(threshold),
      NUM_KEY(seed),
      NUM_KEY(threads),
      NUM_KEY(log_every),
  };
  return table;
}

#undef NUM_KEY

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

void RunConfig::validate() const {
  if (steps < 0) throw UsageError("steps must be >= 0");
  if (gamma <= 0.0) throw UsageError("gamma must be > 0");
  if (decay_period < 1) throw UsageError("decay_period must be >= 1");
  if (n1 < 1 || n2 < 1 || n_neg < 1) throw UsageError("batch counts must be >= 1");
  if (lr_struct <= 0.0 || lr_meta <= 0.0) throw UsageError("learning rates must be > 0");
  if (lambda < 0.0) throw UsageError("lambda must be >= 0");
  if (struct_opt != "adam" && struct_opt != "sgd")
    throw UsageError("struct_opt must be adam or sgd");
  if (k_support_pos < 1 || k_support_neg < 1 || k_query_pos < 1 || k_query_neg < 1)
    throw UsageError("task shape counts must be >= 1");
  if (val_tasks < 0) throw UsageError("val_tasks must be >= 0");
  if (threshold < 0.0 || threshold > 1.0) throw UsageError("threshold must be in [0, 1]");
  if (threads < 1) throw UsageError("threads must be >= 1");
  if (log_every < 1) throw UsageError("log_every must be >= 1");
  transform().validate();
}

void RunConfig::set_key(const std::string& key, const std::string& value) {
  for (const auto& b : bindings()) {
    if (key == b.name) {
      b.set(*this, value);
      return;
    }
  }
  throw UsageError("unknown config key: " + key);
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& b : bindings()) out << b.name << " = " << b.get(*this) << "\n";
  return out.str();
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " has no '='");
    cfg.set_key(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  return parse_config(in);
}

void apply_env_overrides(RunConfig& cfg) {
  for (const auto& b : bindings()) {
    std::string env_name = "METATNE_";
    for (const char* p = b.name; *p; ++p)
      env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    if (const char* v = std::getenv(env_name.c_str())) cfg.set_key(b.name, v);
  }
}

}  // namespace metatne
