#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "../oracle/finite_diff.hpp"
#include "metatne/embedding.hpp"
#include "metatne/error.hpp"
#include "metatne/graph.hpp"

using namespace metatne;

namespace {

Graph from_text(const std::string& text) {
  std::istringstream in(text);
  return load_edge_list(in);
}

double cosine(const double* a, const double* b, int n) {
  return dot(a, b, n) / std::sqrt(dot(a, a, n) * dot(b, b, n));
}

}  // namespace

TEST_SUITE("embedding") {

TEST_CASE("init bounds and determinism") {
  const EmbeddingMatrix a = init_embeddings(3, 4, 42);
  CHECK(a.center.rows == 3);
  CHECK(a.center.cols == 4);
  for (const double v : a.center.a) {
    CHECK(v >= -0.125);
    CHECK(v <= 0.125);
  }
  for (const double v : a.context.a) CHECK(v == 0.0);
  const EmbeddingMatrix b = init_embeddings(3, 4, 42);
  CHECK(a.center.a == b.center.a);
  const EmbeddingMatrix c = init_embeddings(3, 4, 43);
  CHECK(a.center.a != c.center.a);
}

TEST_CASE("noise distribution follows degree^exponent") {
  const Graph path = from_text("0 1\n1 2\n");  // degrees 1,2,1

  SUBCASE("exponent 1") {
    const NoiseDistribution n = build_noise(path, 1.0);
    CHECK(n.prob(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(n.prob(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(n.prob(2) == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("exponent 0.75") {
    // Oracle: direct normalization of degree^0.75.
    const double w1 = std::pow(2.0, 0.75);
    const double total = 2.0 + w1;
    const NoiseDistribution n = build_noise(path, 0.75);
    CHECK(n.prob(0) == doctest::Approx(1.0 / total).epsilon(1e-12));
    CHECK(n.prob(1) == doctest::Approx(w1 / total).epsilon(1e-12));
    double sum = 0.0;
    for (int v = 0; v < 3; ++v) sum += n.prob(v);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("noise falls back to uniform when all degrees are zero") {
  Graph g;
  g.node_count = 2;
  g.adjacency.assign(2, {});
  g.external_ids = {0, 1};
  const NoiseDistribution n = build_noise(g, 0.75);
  CHECK(n.prob(0) == doctest::Approx(0.5));
  CHECK(n.prob(1) == doctest::Approx(0.5));
}

TEST_CASE("isolated nodes never get drawn") {
  const Graph g = from_text("0 1\n3 3\n");  // node 3 isolated via dropped self-loop
  const NoiseDistribution n = build_noise(g, 0.75);
  CHECK(n.prob(g.to_internal(3)) == 0.0);
  Rng rng(5, "noise-draws");
  for (int i = 0; i < 200; ++i) CHECK(n.draw(rng) != g.to_internal(3));
}

TEST_CASE("edge batch on a single edge") {
  const Graph g = from_text("0 1\n");
  Rng rng(3, "batch");
  const auto pairs = sample_edge_batch(g, 4, rng);
  CHECK(pairs.size() == 4);
  for (const auto& [u, v] : pairs) {
    const bool forward = u == 0 && v == 1;
    const bool backward = u == 1 && v == 0;
    CHECK((forward || backward));
  }
}

TEST_CASE("edge batch is uniform over directed pairs on a triangle") {
  const Graph g = from_text("0 1\n1 2\n0 2\n");
  Rng rng(11, "batch-chi2");
  std::map<std::pair<int, int>, long> counts;
  const long draws = 60000;
  for (const auto& p : sample_edge_batch(g, draws, rng)) ++counts[p];
  CHECK(counts.size() == 6);
  double chi2 = 0.0;
  const double expected = draws / 6.0;
  for (const auto& [pair, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 20.515);  // df=5, p=0.001
}

TEST_CASE("edgeless graph cannot be sampled") {
  Graph g;
  g.node_count = 2;
  g.adjacency.assign(2, {});
  Rng rng(1, "x");
  CHECK_THROWS_AS(sample_edge_batch(g, 1, rng), UsageError);
}

TEST_CASE("sgns loss with all-zero dots is 2 ln 2") {
  EmbeddingMatrix emb = init_embeddings(3, 4, 1);
  emb.center.zero();
  emb.context.zero();
  const Graph g = from_text("0 1\n");
  const NoiseDistribution noise = build_noise(g, 0.75);
  Rng rng(1, "sgns");
  const std::vector<std::pair<int, int>> pairs = {{0, 1}};
  const double loss = sgns_step(emb, pairs, noise, 1, 0.01, rng);
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("per-pair gradient matches central finite differences") {
  Rng rng(17, "sgns-fd");
  const int dim = 6;
  std::vector<double> center(dim), ctx_pos(dim);
  std::vector<std::vector<double>> ctx_negs(3, std::vector<double>(dim));
  for (double& v : center) v = rng.uniform(-1, 1);
  for (double& v : ctx_pos) v = rng.uniform(-1, 1);
  for (auto& n : ctx_negs)
    for (double& v : n) v = rng.uniform(-1, 1);

  std::vector<const double*> neg_ptrs;
  for (const auto& n : ctx_negs) neg_ptrs.push_back(n.data());

  std::vector<double> gc(dim);
  std::vector<std::vector<double>> gx;
  sgns_pair_loss_grad(center.data(), ctx_pos.data(), neg_ptrs, dim, gc.data(), gx);

  const auto eval = [&]() {
    std::vector<double> tmp_gc(dim);
    std::vector<std::vector<double>> tmp_gx;
    return sgns_pair_loss_grad(center.data(), ctx_pos.data(), neg_ptrs, dim, tmp_gc.data(),
                               tmp_gx);
  };
  std::vector<double> analytic, numeric;
  for (int i = 0; i < dim; ++i) {
    analytic.insert(analytic.end(), {gc[i], gx[0][i], gx[1][i]});
    numeric.insert(numeric.end(), {oracle::fd_derivative(&center[i], eval),
                                   oracle::fd_derivative(&ctx_pos[i], eval),
                                   oracle::fd_derivative(&ctx_negs[0][i], eval)});
  }
  CHECK(oracle::max_rel_error(analytic, numeric) < 1e-5);
}

TEST_CASE("repeated training on a fixed batch drives the loss down") {
  const Graph g = from_text("0 1\n1 2\n2 0\n");
  EmbeddingMatrix emb = init_embeddings(3, 8, 5);
  const NoiseDistribution noise = build_noise(g, 0.75);
  Rng rng(5, "sgns-trend");
  const auto pairs = sample_edge_batch(g, 16, rng);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double loss = sgns_step(emb, pairs, noise, 2, 0.05, rng);
    CHECK(loss > 0.0);
    if (it == 0) first = loss;
    last = loss;
  }
  CHECK(last < first);
}

TEST_CASE("two cliques separate in embedding space") {
  // Two K5 cliques joined by one bridge edge.
  std::ostringstream text;
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b) {
      text << a << ' ' << b << '\n';
      text << a + 5 << ' ' << b + 5 << '\n';
    }
  text << "0 5\n";
  const Graph g = from_text(text.str());
  EmbeddingMatrix emb = init_embeddings(10, 16, 9);
  const NoiseDistribution noise = build_noise(g, 0.75);
  Rng rng(9, "cliques");
  for (int step = 0; step < 600; ++step) {
    const auto pairs = sample_edge_batch(g, 32, rng);
    sgns_step(emb, pairs, noise, 5, 0.05, rng);
  }
  double intra = 0.0, inter = 0.0;
  int n_intra = 0, n_inter = 0;
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b < 10; ++b) {
      const double c = cosine(emb.center.row(a), emb.center.row(b), 16);
      if ((a < 5) == (b < 5)) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("hogwild and accumulated paths run with multiple threads") {
  const Graph g = from_text("0 1\n1 2\n2 0\n0 3\n3 4\n4 0\n");
  EmbeddingMatrix emb = init_embeddings(5, 8, 5);
  const NoiseDistribution noise = build_noise(g, 0.75);
  Rng rng(5, "hogwild-test");
  const auto pairs = sample_edge_batch(g, 200, rng);

  const double loss = sgns_step(emb, pairs, noise, 3, 0.05, rng, 2);
  CHECK(loss > 0.0);
  CHECK(emb.center.all_finite());
  CHECK(emb.context.all_finite());

  SparseRowGrad gc, gx;
  const double batch_loss = sgns_batch_grad(emb, pairs, noise, 3, rng, gc, gx, 2);
  CHECK(batch_loss > 0.0);
  CHECK(!gc.rows.empty());
  for (const auto& grad : gc.grads)
    for (const double v : grad) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round trip preserves f32 content") {
  const EmbeddingMatrix emb = init_embeddings(7, 5, 21);
  const auto path = std::filesystem::temp_directory_path() / "metatne_test_emb.bin";
  save_embeddings(emb, path.string(), "d = 5\n");
  const EmbeddingMatrix back = load_embeddings(path.string());
  CHECK(back.dim == 5);
  CHECK(back.center.rows == 7);
  for (size_t i = 0; i < emb.center.size(); ++i)
    CHECK(back.center.a[i] == static_cast<double>(static_cast<float>(emb.center.a[i])));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".cfg");
}

}  // TEST_SUITE
