#include "metatne/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "metatne/error.hpp"

namespace metatne {

namespace {
constexpr double kProbClamp = 1e-12;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}
}  // namespace

std::vector<double> prototype(const Mat& support_outs) {
  if (support_outs.rows < 1) throw UsageError("prototype of an empty support set");
  std::vector<double> proto(support_outs.cols, 0.0);
  for (int i = 0; i < support_outs.rows; ++i)
    axpy(1.0, support_outs.row(i), proto.data(), support_outs.cols);
  const double inv = 1.0 / support_outs.rows;
  for (double& v : proto) v *= inv;
  return proto;
}

Prediction predict_prob(std::span<const double> query_pos_out, std::span<const double> proto_pos,
                        std::span<const double> query_neg_out, std::span<const double> proto_neg) {
  Prediction p;
  p.dist_pos = squared_distance(query_pos_out, proto_pos);
  p.dist_neg = squared_distance(query_neg_out, proto_neg);
  if (!std::isfinite(p.dist_pos) || !std::isfinite(p.dist_neg))
    throw NumericError("non-finite distance in prediction");
  // Two-way softmax over (-dist_pos, -dist_neg), evaluated as a stable
  // sigmoid of the distance gap.
  const double gap = p.dist_neg - p.dist_pos;
  if (gap >= 0.0)
    p.prob_positive = 1.0 / (1.0 + std::exp(-gap));
  else {
    const double e = std::exp(gap);
    p.prob_positive = e / (1.0 + e);
  }
  return p;
}

double cross_entropy(double prob_positive, int truth) {
  const double p = std::clamp(prob_positive, kProbClamp, 1.0 - kProbClamp);
  return truth ? -std::log(p) : -std::log(1.0 - p);
}

double task_loss(const std::vector<std::pair<Prediction, int>>& predictions,
                 const TransformParams& params, double lambda) {
  if (predictions.empty()) throw UsageError("task_loss needs at least one prediction");
  if (lambda < 0.0) throw UsageError("lambda must be >= 0");
  double loss = 0.0;
  for (const auto& [pred, truth] : predictions) loss += cross_entropy(pred.prob_positive, truth);
  if (lambda > 0.0) loss += lambda * params.squared_norm();
  return loss;
}

PredictionGrad prediction_backward(std::span<const double> query_pos_out,
                                   std::span<const double> proto_pos,
                                   std::span<const double> query_neg_out,
                                   std::span<const double> proto_neg, const Prediction& pred,
                                   int truth) {
  // Softmax cross-entropy over logits (-dist_pos, -dist_neg):
  //   dL/d(dist_pos) = -(p - truth),  dL/d(dist_neg) = p - truth.
  const double d_dist_pos = -(pred.prob_positive - truth);
  const double d_dist_neg = pred.prob_positive - truth;

  const size_t d = query_pos_out.size();
  PredictionGrad g;
  g.d_query_pos.resize(d);
  g.d_proto_pos.resize(d);
  g.d_query_neg.resize(d);
  g.d_proto_neg.resize(d);
  for (size_t i = 0; i < d; ++i) {
    const double diff_pos = 2.0 * (query_pos_out[i] - proto_pos[i]);
    const double diff_neg = 2.0 * (query_neg_out[i] - proto_neg[i]);
    g.d_query_pos[i] = d_dist_pos * diff_pos;
    g.d_proto_pos[i] = -d_dist_pos * diff_pos;
    g.d_query_neg[i] = d_dist_neg * diff_neg;
    g.d_proto_neg[i] = -d_dist_neg * diff_neg;
  }
  return g;
}

}  // namespace metatne
