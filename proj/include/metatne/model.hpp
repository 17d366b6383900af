#pragma once

#include "metatne/embedding.hpp"
#include "metatne/transform.hpp"

namespace metatne {

// Trained state: task-agnostic embeddings plus the transformation parameters.
struct Model {
  EmbeddingMatrix emb;
  TransformParams transform;
};

}  // namespace metatne
