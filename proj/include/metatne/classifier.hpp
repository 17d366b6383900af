#pragma once

#include <span>
#include <utility>
#include <vector>

#include "metatne/matrix.hpp"
#include "metatne/transform.hpp"

namespace metatne {

// One query-node prediction: two-way softmax over negated squared distances
// to the tailored prototypes.
struct Prediction {
  double prob_positive = 0.5;
  double dist_pos = 0.0;
  double dist_neg = 0.0;
};

// Mean of the adapted support embeddings (one polarity).
std::vector<double> prototype(const Mat& support_outs);

Prediction predict_prob(std::span<const double> query_pos_out, std::span<const double> proto_pos,
                        std::span<const double> query_neg_out, std::span<const double> proto_neg);

// Binary cross-entropy with the probability clamped away from 0 and 1.
double cross_entropy(double prob_positive, int truth);

// Sum of query cross-entropies plus lambda * ||Theta||^2.
double task_loss(const std::vector<std::pair<Prediction, int>>& predictions,
                 const TransformParams& params, double lambda);

// Gradients of cross_entropy(prediction, truth) with respect to the two
// adapted query embeddings and the two prototypes. Used by the meta phase.
struct PredictionGrad {
  std::vector<double> d_query_pos, d_proto_pos, d_query_neg, d_proto_neg;
};

PredictionGrad prediction_backward(std::span<const double> query_pos_out,
                                   std::span<const double> proto_pos,
                                   std::span<const double> query_neg_out,
                                   std::span<const double> proto_neg, const Prediction& pred,
                                   int truth);

}  // namespace metatne
