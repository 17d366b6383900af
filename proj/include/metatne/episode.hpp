#pragma once

#include <vector>

#include "metatne/classifier.hpp"
#include "metatne/embedding.hpp"
#include "metatne/tasks.hpp"
#include "metatne/transform.hpp"

namespace metatne {

// Per-query scores for one episode, in task order: query_pos then query_neg.
struct EpisodeScores {
  std::vector<Prediction> predictions;
  std::vector<int> truths;
};

// Runs every query of the task through the transformation twice (against the
// positive supports and against the negative supports), computes tailored
// prototypes and predicted probabilities. identity_transform bypasses the
// transformation and classifies on the raw embeddings (the task-agnostic
// reference path).
EpisodeScores episode_forward(const Mat& center, const Task& task,
                              const TransformParams& params, TransformMode mode,
                              Rng* dropout_rng, bool identity_transform = false);

// Sum of query cross-entropies for one task, with gradients accumulated into
// the parameter buffer and into sparse rows of the embedding matrix. The
// regularizer term is NOT included here; the caller owns it so a batch
// applies it once.
double episode_loss_grad(const Mat& center, const Task& task, const TransformParams& params,
                         TransformMode mode, Rng* dropout_rng, TransformParams& param_grads,
                         SparseRowGrad& center_grads);

}  // namespace metatne
