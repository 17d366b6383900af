#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metatne/config.hpp"
#include "metatne/graph.hpp"
#include "metatne/model.hpp"

namespace metatne {

struct ScheduleConfig {
  long long total_steps = 10000;
  double gamma = 0.1;
  long long decay_period = 1000;
};

// Staircase threshold: 1 / (1 + gamma * floor(step / decay_period)).
// Probability of running a structural phase at the given step.
double tau(long long step, const ScheduleConfig& cfg);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over a flat parameter view. t is the
// 1-based count of updates applied to these moments so far.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, long long t, double lr, const AdamConfig& cfg = {});

// Adam over the whole transform parameter set.
class TransformAdam {
 public:
  explicit TransformAdam(const TransformParams& shape)
      : m_(zeros_like(shape)), v_(zeros_like(shape)) {}
  void step(TransformParams& params, const TransformParams& grads, double lr);

 private:
  TransformParams m_, v_;
  long long t_ = 0;
  AdamConfig cfg_;
};

// Lazy row-sparse Adam for embedding matrices: only touched rows move, with
// a shared step counter for bias correction.
class RowAdam {
 public:
  RowAdam(int rows, int dim) : m_(rows, dim), v_(rows, dim) {}
  void begin_step() { ++t_; }
  void update_row(Mat& target, int row, const double* grad, double lr);

 private:
  Mat m_, v_;
  long long t_ = 0;
  AdamConfig cfg_;
};

struct TrainEvent {
  long long step = 0;
  char phase = 's';  // 's' structural, 'm' meta
  double tau_value = 1.0;
  double loss = 0.0;
};

struct ValidationPoint {
  long long step = 0;
  double f1 = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<ValidationPoint> history;
  long long best_step = -1;  // -1 when validation never ran
  double best_f1 = 0.0;
  long long skipped_steps = 0;
  bool aborted = false;  // > 10 consecutive numerically-skipped steps
};

using TrainLogger = std::function<void(const TrainEvent&)>;

// Algorithm: alternate structural and meta phases with probability tau /
// 1-tau, Adam on both modules, periodic validation keeping the best-F1
// checkpoint.
TrainResult train(const Graph& graph, const LabelMatrix& labels, const LabelSplit& split,
                  const RunConfig& cfg, const TrainLogger& logger = {});

}  // namespace metatne
