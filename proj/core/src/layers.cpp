#include "caplab/nn/layers.hpp"

#include <cmath>

#include "caplab/util.hpp"

namespace caplab::nn {

int Linear::apply(Graph& g, int x) const {
  int wt = g.transpose(g.param(*W));
  int y = g.matmul(x, wt);
  if (lora) {
    // (alpha/r) * x A^T B^T
    int xa = g.matmul(x, g.transpose(g.param(*lora->A)));
    int xab = g.matmul(xa, g.transpose(g.param(*lora->B)));
    y = g.add(y, g.scale(xab, lora->scaling));
  }
  return g.add_rowvec(y, g.param(*b));
}

Mat Linear::apply_value(const Mat& x) const {
  Mat y = x * W->value.transpose();
  if (lora) {
    y.noalias() += lora->scaling * ((x * lora->A->value.transpose()) * lora->B->value.transpose());
  }
  y.rowwise() += b->value.row(0);
  return y;
}

int LayerNorm::apply(Graph& g, int x) const {
  int n = g.layer_norm_rows(x, eps);
  return g.add_rowvec(g.cmul_rowvec(n, g.param(*gain)), g.param(*bias));
}

Mat LayerNorm::apply_value(const Mat& x) const {
  Mat y(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    Eigen::RowVectorXd c = x.row(i).array() - mu;
    const double var = c.squaredNorm() / d;
    y.row(i) = (c / std::sqrt(var + eps)).cwiseProduct(gain->value.row(0)) + bias->value.row(0);
  }
  return y;
}

Mat softmax_rows_value(const Mat& z, const Mat* mask) {
  Mat x = z;
  if (mask) x += *mask;
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::ArrayXd e = (x.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  return y;
}

namespace {

Mat mha_value_impl(const AttentionBlock& blk, const Mat& q_in, const Mat& k_proj,
                   const Mat& v_proj, const Mat* mask) {
  const Eigen::Index d = blk.q.W->rows();
  const Eigen::Index dh = d / blk.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mat Q = blk.q.apply_value(q_in);
  Mat ctx(q_in.rows(), d);
  for (int h = 0; h < blk.heads; ++h) {
    const Mat qh = Q.middleCols(h * dh, dh);
    const Mat kh = k_proj.middleCols(h * dh, dh);
    const Mat vh = v_proj.middleCols(h * dh, dh);
    Mat scores = inv_sqrt * (qh * kh.transpose());
    ctx.middleCols(h * dh, dh) = softmax_rows_value(scores, mask) * vh;
  }
  return blk.o.apply_value(ctx);
}

}  // namespace

int multi_head_attention(Graph& g, const AttentionBlock& blk, int q_in, int kv_in,
                         const Mat* mask) {
  const Eigen::Index d = blk.q.W->rows();
  if (d % blk.heads != 0) throw Error("attention: heads must divide model dim");
  const Eigen::Index dh = d / blk.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const int Q = blk.q.apply(g, q_in);
  const int K = blk.k.apply(g, kv_in);
  const int V = blk.v.apply(g, kv_in);

  std::vector<int> ctx;
  ctx.reserve(static_cast<std::size_t>(blk.heads));
  for (int h = 0; h < blk.heads; ++h) {
    const int qh = g.slice_cols(Q, h * dh, dh);
    const int kh = g.slice_cols(K, h * dh, dh);
    const int vh = g.slice_cols(V, h * dh, dh);
    const int scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
    const int attn = g.softmax_rows(scores, mask);
    ctx.push_back(g.matmul(attn, vh));
  }
  return blk.o.apply(g, g.hstack(ctx));
}

Mat multi_head_attention_value(const AttentionBlock& blk, const Mat& q_in, const Mat& kv_in,
                               const Mat* mask) {
  return mha_value_impl(blk, q_in, blk.k.apply_value(kv_in), blk.v.apply_value(kv_in), mask);
}

Mat multi_head_attention_cached(const AttentionBlock& blk, const Mat& q_in, const Mat& k_proj,
                                const Mat& v_proj) {
  return mha_value_impl(blk, q_in, k_proj, v_proj, nullptr);
}

int FeedForward::apply(Graph& g, int x) const {
  return down.apply(g, g.relu(up.apply(g, x)));
}

Mat FeedForward::apply_value(const Mat& x) const {
  return down.apply_value(up.apply_value(x).cwiseMax(0.0));
}

Mat sinusoidal_positions(Eigen::Index n_pos, Eigen::Index dim, Eigen::Index offset) {
  Mat pe(n_pos, dim);
  for (Eigen::Index p = 0; p < n_pos; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(p + offset) / std::pow(10000.0, exponent);
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Linear make_linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
                   Eigen::Index out, std::uint64_t seed) {
  Linear l;
  l.W = &store.create(prefix + ".weight", out, in);
  l.b = &store.create(prefix + ".bias", 1, out);
  init::xavier_uniform(*l.W, seed);
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, const std::string& prefix, Eigen::Index d) {
  LayerNorm ln;
  ln.gain = &store.create(prefix + ".gain", 1, d);
  ln.bias = &store.create(prefix + ".bias", 1, d);
  init::constant(*ln.gain, 1.0);
  return ln;
}

AttentionBlock make_attention(ParamStore& store, const std::string& prefix, Eigen::Index d,
                              int heads, std::uint64_t seed) {
  AttentionBlock blk;
  blk.q = make_linear(store, prefix + ".q", d, d, seed);
  blk.k = make_linear(store, prefix + ".k", d, d, seed);
  blk.v = make_linear(store, prefix + ".v", d, d, seed);
  blk.o = make_linear(store, prefix + ".o", d, d, seed);
  blk.heads = heads;
  return blk;
}

FeedForward make_feed_forward(ParamStore& store, const std::string& prefix, Eigen::Index d,
                              Eigen::Index hidden, std::uint64_t seed) {
  FeedForward ff;
  ff.up = make_linear(store, prefix + ".up", d, hidden, seed);
  ff.down = make_linear(store, prefix + ".down", hidden, d, seed);
  return ff;
}

}  // namespace caplab::nn
