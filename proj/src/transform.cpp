#include "metatne/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "metatne/error.hpp"
#include "metatne/io.hpp"

namespace metatne {

void TransformConfig::validate() const {
  if (d < 1 || d_prime < 1 || heads < 1 || d_ff < 1 || blocks < 1)
    throw UsageError("transform dimensions must be >= 1");
  if (d_prime % heads != 0) throw UsageError("d_prime must be divisible by heads");
  if (p_drop < 0.0 || p_drop >= 1.0) throw UsageError("p_drop must be in [0, 1)");
  if (ln_epsilon <= 0.0) throw UsageError("ln_epsilon must be positive");
}

size_t TransformParams::param_count() const {
  const auto& c = config;
  const size_t per_block = 3ull * c.heads * c.head_dim() * c.d + static_cast<size_t>(c.d) * c.d_prime +
                           static_cast<size_t>(c.d_ff) * c.d + c.d_ff +
                           static_cast<size_t>(c.d) * c.d_ff + c.d + 4ull * c.d;
  return per_block * c.blocks;
}

double TransformParams::squared_norm() const {
  double s = 0.0;
  for (const auto view : tensor_views(*this))
    for (const double v : view) s += v * v;
  return s;
}

namespace {

template <typename Params, typename Span>
std::vector<Span> views_impl(Params& p) {
  std::vector<Span> out;
  for (auto& b : p.blocks) {
    for (int h = 0; h < p.config.heads; ++h) {
      out.push_back(Span(b.w_q[h].a));
      out.push_back(Span(b.w_k[h].a));
      out.push_back(Span(b.w_v[h].a));
    }
    out.push_back(Span(b.w_o.a));
    out.push_back(Span(b.ffn_w1.a));
    out.push_back(Span(b.ffn_b1));
    out.push_back(Span(b.ffn_w2.a));
    out.push_back(Span(b.ffn_b2));
    out.push_back(Span(b.ln1_gain));
    out.push_back(Span(b.ln1_bias));
    out.push_back(Span(b.ln2_gain));
    out.push_back(Span(b.ln2_bias));
  }
  return out;
}

AttentionBlock empty_block(const TransformConfig& c) {
  AttentionBlock b;
  b.w_q.assign(c.heads, Mat(c.head_dim(), c.d));
  b.w_k.assign(c.heads, Mat(c.head_dim(), c.d));
  b.w_v.assign(c.heads, Mat(c.head_dim(), c.d));
  b.w_o = Mat(c.d, c.d_prime);
  b.ffn_w1 = Mat(c.d_ff, c.d);
  b.ffn_b1.assign(c.d_ff, 0.0);
  b.ffn_w2 = Mat(c.d, c.d_ff);
  b.ffn_b2.assign(c.d, 0.0);
  b.ln1_gain.assign(c.d, 0.0);
  b.ln1_bias.assign(c.d, 0.0);
  b.ln2_gain.assign(c.d, 0.0);
  b.ln2_bias.assign(c.d, 0.0);
  return b;
}

void glorot_fill(Mat& w, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w.a) v = rng.uniform(-a, a);
}

}  // namespace

std::vector<std::span<double>> tensor_views(TransformParams& p) {
  return views_impl<TransformParams, std::span<double>>(p);
}

std::vector<std::span<const double>> tensor_views(const TransformParams& p) {
  return views_impl<const TransformParams, std::span<const double>>(p);
}

TransformParams zeros_like(const TransformParams& p) {
  TransformParams z;
  z.config = p.config;
  z.blocks.assign(p.config.blocks, empty_block(p.config));
  return z;
}

TransformParams init_transform(const TransformConfig& cfg, uint64_t seed) {
  cfg.validate();
  TransformParams p;
  p.config = cfg;
  Rng rng(seed, "init-transform");
  for (int l = 0; l < cfg.blocks; ++l) {
    AttentionBlock b = empty_block(cfg);
    for (int h = 0; h < cfg.heads; ++h) {
      glorot_fill(b.w_q[h], cfg.d, cfg.head_dim(), rng);
      glorot_fill(b.w_k[h], cfg.d, cfg.head_dim(), rng);
      glorot_fill(b.w_v[h], cfg.d, cfg.head_dim(), rng);
    }
    glorot_fill(b.w_o, cfg.d_prime, cfg.d, rng);
    glorot_fill(b.ffn_w1, cfg.d, cfg.d_ff, rng);
    glorot_fill(b.ffn_w2, cfg.d_ff, cfg.d, rng);
    std::fill(b.ln1_gain.begin(), b.ln1_gain.end(), 1.0);
    std::fill(b.ln2_gain.begin(), b.ln2_gain.end(), 1.0);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

namespace {

// In-place row softmax with max subtraction.
void softmax_rows(Mat& m) {
  for (int i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    double mx = r[0];
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m.cols; ++j) r[j] *= inv;
  }
}

void layernorm_forward(const Mat& x, const std::vector<double>& gain,
                       const std::vector<double>& bias, double eps, Mat& xhat,
                       std::vector<double>& rstd, Mat& out) {
  const int n = x.rows, d = x.cols;
  xhat = Mat(n, d);
  out = Mat(n, d);
  rstd.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= d;
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[i] = r;
    double* xh = xhat.row(i);
    double* oi = out.row(i);
    for (int j = 0; j < d; ++j) {
      xh[j] = (xi[j] - mean) * r;
      oi[j] = gain[j] * xh[j] + bias[j];
    }
  }
}

void layernorm_backward(const Mat& d_out, const Mat& xhat, const std::vector<double>& rstd,
                        const std::vector<double>& gain, Mat& d_in, std::vector<double>& d_gain,
                        std::vector<double>& d_bias) {
  const int n = d_out.rows, d = d_out.cols;
  d_in = Mat(n, d);
  for (int i = 0; i < n; ++i) {
    const double* go = d_out.row(i);
    const double* xh = xhat.row(i);
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dxh = go[j] * gain[j];
      m1 += dxh;
      m2 += dxh * xh[j];
      d_gain[j] += go[j] * xh[j];
      d_bias[j] += go[j];
    }
    m1 /= d;
    m2 /= d;
    double* di = d_in.row(i);
    for (int j = 0; j < d; ++j) di[j] = rstd[i] * (go[j] * gain[j] - m1 - xh[j] * m2);
  }
}

void apply_dropout(Mat& m, double p, Rng* rng, std::vector<double>& mult) {
  if (p <= 0.0 || rng == nullptr) {
    mult.clear();
    return;
  }
  // Inverted dropout: kept activations are scaled so eval needs no rescale.
  const double keep_scale = 1.0 / (1.0 - p);
  mult.resize(m.size());
  for (size_t i = 0; i < m.size(); ++i) {
    mult[i] = rng->uniform() < p ? 0.0 : keep_scale;
    m.a[i] *= mult[i];
  }
}

// Canonical slot order: query stays first, support rows sorted by content so
// the arithmetic never sees the caller's ordering.
std::vector<int> canonical_perm(const Mat& x) {
  std::vector<int> perm(x.rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin() + 1, perm.end(), [&](int a, int b) {
    return std::lexicographical_compare(x.row(a), x.row(a) + x.cols, x.row(b), x.row(b) + x.cols);
  });
  return perm;
}

Mat gather_rows(const Mat& x, const std::vector<int>& perm) {
  Mat out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    std::memcpy(out.row(i), x.row(perm[i]), sizeof(double) * x.cols);
  return out;
}

Mat scatter_rows(const Mat& x, const std::vector<int>& perm) {
  Mat out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    std::memcpy(out.row(perm[i]), x.row(i), sizeof(double) * x.cols);
  return out;
}

}  // namespace

Mat attention_weights(const Mat& x, const Mat& w_q, const Mat& w_k) {
  Mat q, k;
  matmul_wt(x, w_q, q);
  matmul_wt(x, w_k, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w_q.rows));
  Mat logits(x.rows, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.rows; ++j) logits(i, j) = dot(q.row(i), k.row(j), q.cols) * scale;
  if (!logits.all_finite()) throw NumericError("non-finite attention logits");
  softmax_rows(logits);
  return logits;
}

Mat transform_forward(const Mat& x_external, const TransformParams& params, TransformMode mode,
                      Rng* dropout_rng, TransformCache* cache) {
  const TransformConfig& c = params.config;
  if (x_external.cols != c.d)
    throw UsageError("transform input has dimension " + std::to_string(x_external.cols) +
                     ", config expects " + std::to_string(c.d));
  const int n = x_external.rows;
  const int dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool train = mode == TransformMode::train;
  Rng* drop = train ? dropout_rng : nullptr;

  const std::vector<int> perm = canonical_perm(x_external);
  Mat x = gather_rows(x_external, perm);

  if (cache) {
    cache->perm = perm;
    cache->mode = mode;
    cache->blocks.assign(c.blocks, BlockCache{});
  }
  BlockCache local;

  for (int l = 0; l < c.blocks; ++l) {
    const AttentionBlock& b = params.blocks[l];
    BlockCache& bc = cache ? cache->blocks[l] : local;
    bc.x = x;

    bc.q.resize(c.heads);
    bc.k.resize(c.heads);
    bc.v.resize(c.heads);
    bc.omega.resize(c.heads);
    bc.concat = Mat(n, c.d_prime);
    for (int h = 0; h < c.heads; ++h) {
      matmul_wt(x, b.w_q[h], bc.q[h]);
      matmul_wt(x, b.w_k[h], bc.k[h]);
      matmul_wt(x, b.w_v[h], bc.v[h]);
      Mat& om = bc.omega[h];
      om = Mat(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          om(i, j) = dot(bc.q[h].row(i), bc.k[h].row(j), dh) * scale;
      softmax_rows(om);
      for (int i = 0; i < n; ++i) {
        double* out = bc.concat.row(i) + h * dh;
        for (int j = 0; j < n; ++j) axpy(om(i, j), bc.v[h].row(j), out, dh);
      }
    }
    matmul_wt(bc.concat, b.w_o, bc.attn_proj);

    Mat dropped = bc.attn_proj;
    apply_dropout(dropped, c.p_drop, drop, bc.drop1);
    Mat r1(n, c.d);
    for (size_t i = 0; i < r1.size(); ++i) r1.a[i] = x.a[i] + dropped.a[i];
    layernorm_forward(r1, b.ln1_gain, b.ln1_bias, c.ln_epsilon, bc.ln1_xhat, bc.ln1_rstd, bc.y);

    matmul_wt(bc.y, b.ffn_w1, bc.ffn_h);
    for (int i = 0; i < n; ++i) axpy(1.0, b.ffn_b1.data(), bc.ffn_h.row(i), c.d_ff);
    Mat act(n, c.d_ff);
    for (size_t i = 0; i < act.size(); ++i) act.a[i] = bc.ffn_h.a[i] > 0.0 ? bc.ffn_h.a[i] : 0.0;
    matmul_wt(act, b.ffn_w2, bc.ffn_out);
    for (int i = 0; i < n; ++i) axpy(1.0, b.ffn_b2.data(), bc.ffn_out.row(i), c.d);

    Mat dropped2 = bc.ffn_out;
    apply_dropout(dropped2, c.p_drop, drop, bc.drop2);
    Mat r2(n, c.d);
    for (size_t i = 0; i < r2.size(); ++i) r2.a[i] = bc.y.a[i] + dropped2.a[i];
    Mat z;
    layernorm_forward(r2, b.ln2_gain, b.ln2_bias, c.ln_epsilon, bc.ln2_xhat, bc.ln2_rstd, z);
    x = std::move(z);
  }

  if (!x.all_finite()) throw NumericError("non-finite activations in transform");
  return scatter_rows(x, perm);
}

SetOutput transform_set(const double* query, const Mat& supports, const TransformParams& params,
                        TransformMode mode, Rng* dropout_rng) {
  if (supports.rows < 1) throw UsageError("transform_set needs at least one support node");
  Mat x(supports.rows + 1, supports.cols);
  std::memcpy(x.row(0), query, sizeof(double) * supports.cols);
  std::memcpy(x.row(1), supports.a.data(), sizeof(double) * supports.size());
  const Mat out = transform_forward(x, params, mode, dropout_rng, nullptr);
  SetOutput res;
  res.query_out.assign(out.row(0), out.row(0) + out.cols);
  res.support_outs = Mat(supports.rows, supports.cols);
  std::memcpy(res.support_outs.a.data(), out.row(1), sizeof(double) * res.support_outs.size());
  return res;
}

Mat transform_backward(const TransformCache& cache, const TransformParams& params,
                       const Mat& d_output, TransformParams& grads) {
  const TransformConfig& c = params.config;
  if (cache.blocks.size() != static_cast<size_t>(c.blocks) || cache.blocks[0].x.rows == 0)
    throw UsageError("transform_backward called without a populated forward cache");
  const int n = d_output.rows;
  const int dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dz = gather_rows(d_output, cache.perm);

  for (int l = c.blocks - 1; l >= 0; --l) {
    const AttentionBlock& b = params.blocks[l];
    const BlockCache& bc = cache.blocks[l];
    AttentionBlock& gb = grads.blocks[l];

    // Second layer norm.
    Mat d_r2;
    layernorm_backward(dz, bc.ln2_xhat, bc.ln2_rstd, b.ln2_gain, d_r2, gb.ln2_gain, gb.ln2_bias);

    // Residual around the feed-forward network.
    Mat d_y = d_r2;
    Mat d_ffn = d_r2;
    if (!bc.drop2.empty())
      for (size_t i = 0; i < d_ffn.size(); ++i) d_ffn.a[i] *= bc.drop2[i];

    // Feed-forward: w2 * relu(w1 * y + b1) + b2.
    Mat act(n, c.d_ff);
    for (size_t i = 0; i < act.size(); ++i) act.a[i] = bc.ffn_h.a[i] > 0.0 ? bc.ffn_h.a[i] : 0.0;
    for (int i = 0; i < n; ++i) {
      const double* dfi = d_ffn.row(i);
      for (int j = 0; j < c.d; ++j) {
        axpy(dfi[j], act.row(i), gb.ffn_w2.row(j), c.d_ff);
        gb.ffn_b2[j] += dfi[j];
      }
    }
    Mat d_h(n, c.d_ff);
    for (int i = 0; i < n; ++i) {
      const double* dfi = d_ffn.row(i);
      double* dhi = d_h.row(i);
      for (int j = 0; j < c.d_ff; ++j) {
        double s = 0.0;
        for (int m = 0; m < c.d; ++m) s += dfi[m] * b.ffn_w2(m, j);
        dhi[j] = bc.ffn_h(i, j) > 0.0 ? s : 0.0;
      }
    }
    for (int i = 0; i < n; ++i) {
      const double* dhi = d_h.row(i);
      for (int j = 0; j < c.d_ff; ++j) {
        axpy(dhi[j], bc.y.row(i), gb.ffn_w1.row(j), c.d);
        gb.ffn_b1[j] += dhi[j];
      }
      for (int m = 0; m < c.d; ++m) {
        double s = 0.0;
        for (int j = 0; j < c.d_ff; ++j) s += dhi[j] * b.ffn_w1(j, m);
        d_y(i, m) += s;
      }
    }

    // First layer norm.
    Mat d_r1;
    layernorm_backward(d_y, bc.ln1_xhat, bc.ln1_rstd, b.ln1_gain, d_r1, gb.ln1_gain, gb.ln1_bias);

    // Residual around the attention module.
    Mat dx = d_r1;
    Mat d_proj = d_r1;
    if (!bc.drop1.empty())
      for (size_t i = 0; i < d_proj.size(); ++i) d_proj.a[i] *= bc.drop1[i];

    // Output projection.
    Mat d_concat(n, c.d_prime);
    for (int i = 0; i < n; ++i) {
      const double* dpi = d_proj.row(i);
      for (int j = 0; j < c.d; ++j) axpy(dpi[j], bc.concat.row(i), gb.w_o.row(j), c.d_prime);
      double* dci = d_concat.row(i);
      for (int m = 0; m < c.d_prime; ++m) {
        double s = 0.0;
        for (int j = 0; j < c.d; ++j) s += dpi[j] * b.w_o(j, m);
        dci[m] = s;
      }
    }

    // Per-head attention.
    for (int h = 0; h < c.heads; ++h) {
      const Mat& om = bc.omega[h];
      Mat d_head(n, dh);
      for (int i = 0; i < n; ++i)
        std::memcpy(d_head.row(i), d_concat.row(i) + h * dh, sizeof(double) * dh);

      Mat d_omega(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d_omega(i, j) = dot(d_head.row(i), bc.v[h].row(j), dh);
      Mat d_v(n, dh);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) axpy(om(i, j), d_head.row(i), d_v.row(j), dh);

      // Softmax backward, then the 1/sqrt(dh) scaling.
      Mat d_logits(n, n);
      for (int i = 0; i < n; ++i) {
        double inner = 0.0;
        for (int j = 0; j < n; ++j) inner += d_omega(i, j) * om(i, j);
        for (int j = 0; j < n; ++j) d_logits(i, j) = om(i, j) * (d_omega(i, j) - inner);
      }
      Mat d_q(n, dh), d_k(n, dh);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          axpy(d_logits(i, j) * scale, bc.k[h].row(j), d_q.row(i), dh);
          axpy(d_logits(i, j) * scale, bc.q[h].row(i), d_k.row(j), dh);
        }

      for (int i = 0; i < n; ++i) {
        for (int r = 0; r < dh; ++r) {
          axpy(d_q(i, r), bc.x.row(i), gb.w_q[h].row(r), c.d);
          axpy(d_k(i, r), bc.x.row(i), gb.w_k[h].row(r), c.d);
          axpy(d_v(i, r), bc.x.row(i), gb.w_v[h].row(r), c.d);
        }
        double* dxi = dx.row(i);
        for (int m = 0; m < c.d; ++m) {
          double s = 0.0;
          for (int r = 0; r < dh; ++r)
            s += d_q(i, r) * b.w_q[h](r, m) + d_k(i, r) * b.w_k[h](r, m) +
                 d_v(i, r) * b.w_v[h](r, m);
          dxi[m] += s;
        }
      }
    }
    dz = std::move(dx);
  }

  return scatter_rows(dz, cache.perm);
}

namespace {
constexpr char kMagic[4] = {'M', 'T', 'T', 'R'};
}

void save_transform(const TransformParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write transform checkpoint: " + path);
  out.write(kMagic, 4);
  const TransformConfig& c = params.config;
  write_u32(out, static_cast<uint32_t>(c.d));
  write_u32(out, static_cast<uint32_t>(c.d_prime));
  write_u32(out, static_cast<uint32_t>(c.heads));
  write_u32(out, static_cast<uint32_t>(c.d_ff));
  write_u32(out, static_cast<uint32_t>(c.blocks));
  write_f64(out, c.p_drop);
  write_f64(out, c.ln_epsilon);
  for (const auto view : tensor_views(params)) write_f32_array(out, view.data(), view.size());
  if (!out) throw UsageError("short write on transform checkpoint: " + path);
}

TransformParams load_transform(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open transform checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw UsageError("bad magic in transform checkpoint: " + path);
  TransformConfig c;
  c.d = static_cast<int>(read_u32(in));
  c.d_prime = static_cast<int>(read_u32(in));
  c.heads = static_cast<int>(read_u32(in));
  c.d_ff = static_cast<int>(read_u32(in));
  c.blocks = static_cast<int>(read_u32(in));
  c.p_drop = read_f64(in);
  c.ln_epsilon = read_f64(in);
  c.validate();
  TransformParams p;
  p.config = c;
  p.blocks.assign(c.blocks, empty_block(c));
  for (auto view : tensor_views(p)) read_f32_array(in, view.data(), view.size());
  return p;
}

}  // namespace metatne
