#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../oracle/finite_diff.hpp"
#include "../oracle/naive_transform.hpp"
#include "metatne/error.hpp"
#include "metatne/transform.hpp"

using namespace metatne;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.a) v = rng.uniform(-scale, scale);
  return m;
}

TransformParams random_params(const TransformConfig& cfg, uint64_t seed) {
  return init_transform(cfg, seed);
}

double max_abs_diff(const Mat& a, const Mat& b) {
  double mx = 0.0;
  for (size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a.a[i] - b.a[i]));
  return mx;
}

}  // namespace

TEST_SUITE("transform") {

TEST_CASE("attention on a single element is [[1]]") {
  Rng rng(1, "attn");
  const Mat x = random_mat(1, 4, rng);
  const Mat wq = random_mat(3, 4, rng), wk = random_mat(3, 4, rng);
  const Mat omega = attention_weights(x, wq, wk);
  CHECK(omega.rows == 1);
  CHECK(omega(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero query projection gives uniform rows") {
  Rng rng(2, "attn");
  const Mat x = random_mat(5, 4, rng);
  const Mat wq(3, 4);  // zeros
  const Mat wk = random_mat(3, 4, rng);
  const Mat omega = attention_weights(x, wq, wk);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(omega(i, j) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("attention matches the naive softmax oracle") {
  Rng rng(3, "attn");
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3, d = 6, dh = 4;
    const Mat x = random_mat(n, d, rng);
    const Mat wq = random_mat(dh, d, rng), wk = random_mat(dh, d, rng);
    const Mat fast = attention_weights(x, wq, wk);
    const Mat naive = oracle::naive_attention_weights(x, wq, wk);
    CHECK(max_abs_diff(fast, naive) < 1e-10);
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += fast(i, j);
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("zero-weight blocks reduce to stacked layer norms") {
  TransformConfig cfg{6, 4, 2, 8, 1, 0.0, 1e-5};
  TransformParams params = init_transform(cfg, 4);
  for (auto& b : params.blocks) {
    for (auto& w : b.w_q) w.zero();
    for (auto& w : b.w_k) w.zero();
    for (auto& w : b.w_v) w.zero();
    b.ffn_w1.zero();
    b.ffn_w2.zero();
    std::fill(b.ffn_b1.begin(), b.ffn_b1.end(), 0.0);
    std::fill(b.ffn_b2.begin(), b.ffn_b2.end(), 0.0);
    // w_o stays arbitrary: it multiplies zero value vectors
  }
  Rng rng(5, "zero");
  const Mat x = random_mat(4, 6, rng);
  const Mat out = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);

  Mat expect = x;
  oracle::naive_layernorm(expect, params.blocks[0].ln1_gain, params.blocks[0].ln1_bias, 1e-5);
  oracle::naive_layernorm(expect, params.blocks[0].ln2_gain, params.blocks[0].ln2_bias, 1e-5);
  CHECK(max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("forward matches the independent step-by-step oracle") {
  Rng rng(6, "oracle");
  const TransformConfig cfg{8, 8, 2, 12, 2, 0.0, 1e-5};
  for (int trial = 0; trial < 20; ++trial) {
    const TransformParams params = random_params(cfg, 100 + trial);
    const Mat x = random_mat(5, 8, rng);
    const Mat fast = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);
    const Mat naive = oracle::naive_transform(x, params);
    CHECK(max_abs_diff(fast, naive) < 1e-8);
  }
}

TEST_CASE("support permutation equivariance is bit-exact in eval mode") {
  Rng rng(7, "perm");
  const TransformConfig cfg{6, 6, 3, 8, 2, 0.0, 1e-5};
  const TransformParams params = random_params(cfg, 11);
  const Mat supports = random_mat(5, 6, rng);
  std::vector<double> query(6);
  for (double& v : query) v = rng.uniform(-1, 1);

  const SetOutput base = transform_set(query.data(), supports, params, TransformMode::eval,
                                       nullptr);

  const std::vector<int> perm = {3, 0, 4, 1, 2};
  Mat shuffled(5, 6);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) shuffled(i, j) = supports(perm[i], j);
  const SetOutput permuted = transform_set(query.data(), shuffled, params, TransformMode::eval,
                                           nullptr);

  CHECK(base.query_out == permuted.query_out);  // bitwise
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) CHECK(permuted.support_outs(i, j) == base.support_outs(perm[i], j));
}

TEST_CASE("eval mode is deterministic") {
  Rng rng(8, "det");
  const TransformConfig cfg{6, 4, 2, 8, 2, 0.3, 1e-5};  // dropout configured but eval ignores it
  const TransformParams params = random_params(cfg, 12);
  const Mat x = random_mat(4, 6, rng);
  const Mat a = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);
  const Mat b = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);
  CHECK(a.a == b.a);
}

TEST_CASE("output dimension equals input dimension after every block") {
  Rng rng(9, "dims");
  for (int blocks = 1; blocks <= 3; ++blocks) {
    const TransformConfig cfg{5, 6, 2, 7, blocks, 0.0, 1e-5};
    const TransformParams params = random_params(cfg, 13);
    const Mat x = random_mat(3, 5, rng);
    const Mat out = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);
    CHECK(out.rows == 3);
    CHECK(out.cols == 5);
  }
}

TEST_CASE("train-mode dropout masks replay through backward") {
  // With p_drop > 0 the cached multipliers must make backward consistent:
  // gradient of sum(output) wrt a single input, measured by FD with the same
  // mask, only works with p=0; here we just check backward runs and zero
  // upstream gives zero gradients.
  const TransformConfig cfg{6, 4, 2, 8, 2, 0.4, 1e-5};
  const TransformParams params = random_params(cfg, 14);
  Rng rng(10, "drop");
  const Mat x = random_mat(4, 6, rng);
  Rng drop(1, "dropout");
  TransformCache cache;
  const Mat out = transform_forward(x, params, TransformMode::train, &drop, &cache);
  CHECK(out.all_finite());

  TransformParams grads = zeros_like(params);
  const Mat zero_upstream(4, 6);
  const Mat dx = transform_backward(cache, params, zero_upstream, grads);
  for (const double v : dx.a) CHECK(v == 0.0);
  for (const auto view : tensor_views(grads))
    for (const double v : view) CHECK(v == 0.0);
}

TEST_CASE("backward matches finite differences on a linear functional") {
  const TransformConfig cfg{6, 4, 2, 8, 2, 0.0, 1e-5};
  TransformParams params = random_params(cfg, 15);
  Rng rng(11, "fd");
  Mat x = random_mat(3, 6, rng);
  const Mat weights = random_mat(3, 6, rng);  // loss = sum(weights . output)

  const auto eval = [&]() {
    const Mat out = transform_forward(x, params, TransformMode::eval, nullptr, nullptr);
    double s = 0.0;
    for (size_t i = 0; i < out.size(); ++i) s += weights.a[i] * out.a[i];
    return s;
  };

  TransformCache cache;
  transform_forward(x, params, TransformMode::eval, nullptr, &cache);
  TransformParams grads = zeros_like(params);
  const Mat dx = transform_backward(cache, params, weights, grads);

  std::vector<double> analytic, numeric;
  for (size_t i = 0; i < x.size(); ++i) {
    analytic.push_back(dx.a[i]);
    numeric.push_back(oracle::fd_derivative(&x.a[i], eval));
  }
  auto pviews = tensor_views(params);
  auto gviews = tensor_views(grads);
  Rng pick(12, "fd-pick");
  for (int probe = 0; probe < 120; ++probe) {
    const size_t t = pick.below(pviews.size());
    if (pviews[t].empty()) continue;
    const size_t j = pick.below(pviews[t].size());
    analytic.push_back(gviews[t][j]);
    numeric.push_back(oracle::fd_derivative(&pviews[t][j], eval));
  }
  CHECK(oracle::max_rel_error(analytic, numeric) < 1e-4);
}

TEST_CASE("init layer norms start at identity and are seed-deterministic") {
  const TransformConfig cfg{6, 4, 2, 8, 2, 0.1, 1e-5};
  const TransformParams a = init_transform(cfg, 77);
  for (const auto& b : a.blocks) {
    for (const double g : b.ln1_gain) CHECK(g == 1.0);
    for (const double g : b.ln1_bias) CHECK(g == 0.0);
    for (const double g : b.ln2_gain) CHECK(g == 1.0);
    for (const double v : b.ffn_b1) CHECK(v == 0.0);
  }
  const TransformParams b2 = init_transform(cfg, 77);
  CHECK(a.blocks[0].w_q[0].a == b2.blocks[0].w_q[0].a);
  CHECK(a.blocks[1].ffn_w1.a == b2.blocks[1].ffn_w1.a);
}

TEST_CASE("param count matches the analytic formula") {
  for (const auto& [H, dp, dff, L] : std::vector<std::tuple<int, int, int, int>>{
           {1, 128, 256, 1}, {2, 256, 512, 3}, {4, 128, 256, 2}}) {
    const TransformConfig cfg{128, dp, H, dff, L, 0.1, 1e-5};
    const TransformParams p = init_transform(cfg, 1);
    const size_t d = 128;
    const size_t expected =
        static_cast<size_t>(L) * (3ull * H * (dp / H) * d + d * dp + static_cast<size_t>(dff) * d +
                                  dff + d * dff + d + 4 * d);
    CHECK(p.param_count() == expected);
    size_t total = 0;
    for (const auto view : tensor_views(p)) total += view.size();
    CHECK(total == expected);
  }
}

TEST_CASE("checkpoint round trip") {
  const TransformConfig cfg{6, 4, 2, 8, 2, 0.25, 1e-5};
  const TransformParams p = init_transform(cfg, 33);
  const auto path = std::filesystem::temp_directory_path() / "metatne_test_transform.bin";
  save_transform(p, path.string());
  const TransformParams back = load_transform(path.string());
  CHECK(back.config.d == 6);
  CHECK(back.config.heads == 2);
  CHECK(back.config.p_drop == 0.25);
  const auto a = tensor_views(p);
  const auto b = tensor_views(back);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t)
    for (size_t j = 0; j < a[t].size(); ++j)
      CHECK(b[t][j] == static_cast<double>(static_cast<float>(a[t][j])));
  std::filesystem::remove(path);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(TransformConfig({6, 5, 2, 8, 1, 0.1, 1e-5}).validate(), UsageError);
  CHECK_THROWS_AS(TransformConfig({6, 4, 2, 8, 1, 1.0, 1e-5}).validate(), UsageError);
  CHECK_THROWS_AS(TransformConfig({0, 4, 2, 8, 1, 0.1, 1e-5}).validate(), UsageError);
}

}  // TEST_SUITE
