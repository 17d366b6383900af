#include "metatne/episode.hpp"

#include <cstring>

#include "metatne/error.hpp"

namespace metatne {

namespace {

Mat gather(const Mat& center, const std::vector<int>& nodes) {
  Mat out(static_cast<int>(nodes.size()), center.cols);
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || nodes[i] >= center.rows)
      throw UsageError("task references node " + std::to_string(nodes[i]) +
                       " outside the embedding matrix");
    std::memcpy(out.row(static_cast<int>(i)), center.row(nodes[i]), sizeof(double) * center.cols);
  }
  return out;
}

Mat with_query(const double* query, const Mat& supports) {
  Mat x(supports.rows + 1, supports.cols);
  std::memcpy(x.row(0), query, sizeof(double) * supports.cols);
  std::memcpy(x.row(1), supports.a.data(), sizeof(double) * supports.size());
  return x;
}

std::vector<double> mean_of_rows(const Mat& out, int from) {
  std::vector<double> proto(out.cols, 0.0);
  const int n = out.rows - from;
  for (int i = from; i < out.rows; ++i) axpy(1.0, out.row(i), proto.data(), out.cols);
  for (double& v : proto) v /= n;
  return proto;
}

}  // namespace

EpisodeScores episode_forward(const Mat& center, const Task& task, const TransformParams& params,
                              TransformMode mode, Rng* dropout_rng, bool identity_transform) {
  const Mat sup_pos = gather(center, task.support_pos);
  const Mat sup_neg = gather(center, task.support_neg);

  EpisodeScores scores;
  auto run_query = [&](int q, int truth) {
    const double* uq = center.row(q);
    Prediction pred;
    if (identity_transform) {
      const std::vector<double> proto_pos = mean_of_rows(sup_pos, 0);
      const std::vector<double> proto_neg = mean_of_rows(sup_neg, 0);
      std::span<const double> query(uq, static_cast<size_t>(center.cols));
      pred = predict_prob(query, proto_pos, query, proto_neg);
    } else {
      const Mat out_pos =
          transform_forward(with_query(uq, sup_pos), params, mode, dropout_rng, nullptr);
      const Mat out_neg =
          transform_forward(with_query(uq, sup_neg), params, mode, dropout_rng, nullptr);
      const std::vector<double> proto_pos = mean_of_rows(out_pos, 1);
      const std::vector<double> proto_neg = mean_of_rows(out_neg, 1);
      pred = predict_prob({out_pos.row(0), static_cast<size_t>(out_pos.cols)}, proto_pos,
                          {out_neg.row(0), static_cast<size_t>(out_neg.cols)}, proto_neg);
    }
    scores.predictions.push_back(pred);
    scores.truths.push_back(truth);
  };

  for (const int q : task.query_pos) run_query(q, 1);
  for (const int q : task.query_neg) run_query(q, 0);
  return scores;
}

double episode_loss_grad(const Mat& center, const Task& task, const TransformParams& params,
                         TransformMode mode, Rng* dropout_rng, TransformParams& param_grads,
                         SparseRowGrad& center_grads) {
  const int d = center.cols;
  const Mat sup_pos = gather(center, task.support_pos);
  const Mat sup_neg = gather(center, task.support_neg);
  const int n_pos = sup_pos.rows;
  const int n_neg = sup_neg.rows;

  double loss = 0.0;
  auto run_query = [&](int q, int truth) {
    const double* uq = center.row(q);

    TransformCache cache_pos, cache_neg;
    const Mat out_pos =
        transform_forward(with_query(uq, sup_pos), params, mode, dropout_rng, &cache_pos);
    const Mat out_neg =
        transform_forward(with_query(uq, sup_neg), params, mode, dropout_rng, &cache_neg);
    const std::vector<double> proto_pos = mean_of_rows(out_pos, 1);
    const std::vector<double> proto_neg = mean_of_rows(out_neg, 1);
    const Prediction pred =
        predict_prob({out_pos.row(0), static_cast<size_t>(d)}, proto_pos,
                     {out_neg.row(0), static_cast<size_t>(d)}, proto_neg);
    loss += cross_entropy(pred.prob_positive, truth);

    const PredictionGrad pg = prediction_backward({out_pos.row(0), static_cast<size_t>(d)},
                                                  proto_pos, {out_neg.row(0), static_cast<size_t>(d)},
                                                  proto_neg, pred, truth);

    // The prototype is a mean, so its gradient spreads evenly over supports.
    Mat d_out_pos(out_pos.rows, d), d_out_neg(out_neg.rows, d);
    std::memcpy(d_out_pos.row(0), pg.d_query_pos.data(), sizeof(double) * d);
    std::memcpy(d_out_neg.row(0), pg.d_query_neg.data(), sizeof(double) * d);
    for (int i = 1; i < out_pos.rows; ++i)
      for (int j = 0; j < d; ++j) d_out_pos(i, j) = pg.d_proto_pos[j] / n_pos;
    for (int i = 1; i < out_neg.rows; ++i)
      for (int j = 0; j < d; ++j) d_out_neg(i, j) = pg.d_proto_neg[j] / n_neg;

    const Mat d_in_pos = transform_backward(cache_pos, params, d_out_pos, param_grads);
    const Mat d_in_neg = transform_backward(cache_neg, params, d_out_neg, param_grads);

    center_grads.add(q, d_in_pos.row(0), d);
    for (int i = 0; i < n_pos; ++i) center_grads.add(task.support_pos[i], d_in_pos.row(i + 1), d);
    center_grads.add(q, d_in_neg.row(0), d);
    for (int i = 0; i < n_neg; ++i) center_grads.add(task.support_neg[i], d_in_neg.row(i + 1), d);
  };

  for (const int q : task.query_pos) run_query(q, 1);
  for (const int q : task.query_neg) run_query(q, 0);
  return loss;
}

}  // namespace metatne
