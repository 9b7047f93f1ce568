#include "gssm/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "gssm/errors.hpp"

namespace gssm::nn {

namespace {

Matrix uniform_fan_in(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix m(in, out);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

// Orthogonal square matrix from the QR of a Gaussian draw, sign-fixed so the
// result is deterministic.
Matrix orthogonal(int n, Rng& rng) {
  Matrix a(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) a(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < n; ++c) {
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

Linear make_linear(int in, int out, Rng& rng) {
  Linear l;
  l.w = uniform_fan_in(in, out, rng);
  l.b = Matrix::Zero(1, out);
  return l;
}

Mlp make_mlp(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("make_mlp: need at least one layer");
  Mlp m;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(make_linear(dims[i], dims[i + 1], rng));
  }
  return m;
}

LstmCell make_lstm(int input, int hidden, Rng& rng) {
  LstmCell cell;
  cell.hidden = hidden;
  cell.w_ih = uniform_fan_in(input, 4 * hidden, rng);
  cell.w_hh = Matrix(hidden, 4 * hidden);
  for (int gate = 0; gate < 4; ++gate) {
    cell.w_hh.middleCols(gate * hidden, hidden) = orthogonal(hidden, rng);
  }
  cell.b = Matrix::Zero(1, 4 * hidden);
  // Forget gate biased open.
  cell.b.middleCols(hidden, hidden).setConstant(1.0);
  return cell;
}

LayerNormParams make_layer_norm(int d) {
  return {Matrix::Ones(1, d), Matrix::Zero(1, d)};
}

AttentionBlockParams make_attention_block(int d, int ff_hidden, Rng& rng) {
  AttentionBlockParams b;
  b.ln1 = make_layer_norm(d);
  b.ln2 = make_layer_norm(d);
  b.wq = make_linear(d, d, rng);
  b.wk = make_linear(d, d, rng);
  b.wv = make_linear(d, d, rng);
  b.wo = make_linear(d, d, rng);
  b.ff1 = make_linear(d, ff_hidden, rng);
  b.ff2 = make_linear(ff_hidden, d, rng);
  return b;
}

Conv1dParams make_conv1d(int c_in, int c_out, Rng& rng) {
  Conv1dParams c;
  c.w = uniform_fan_in(3 * c_in, c_out, rng);
  c.b = Matrix::Zero(1, c_out);
  return c;
}

BatchNormParams make_batch_norm(int tokens, int d) {
  BatchNormParams b;
  b.gamma = Matrix::Ones(tokens, d);
  b.beta = Matrix::Zero(tokens, d);
  b.run_mean = Matrix::Zero(tokens, d);
  b.run_var = Matrix::Ones(tokens, d);
  return b;
}

void collect(Linear& l, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &l.w});
  out.push_back({prefix + ".b", &l.b});
}

void collect(Mlp& m, const std::string& prefix, std::vector<ParamRef>& out) {
  for (size_t i = 0; i < m.layers.size(); ++i) {
    collect(m.layers[i], prefix + ".l" + std::to_string(i), out);
  }
}

void collect(LstmCell& l, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w_ih", &l.w_ih});
  out.push_back({prefix + ".w_hh", &l.w_hh});
  out.push_back({prefix + ".b", &l.b});
}

void collect(LayerNormParams& l, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &l.gamma});
  out.push_back({prefix + ".beta", &l.beta});
}

void collect(AttentionBlockParams& b, const std::string& prefix, std::vector<ParamRef>& out) {
  collect(b.ln1, prefix + ".ln1", out);
  collect(b.ln2, prefix + ".ln2", out);
  collect(b.wq, prefix + ".wq", out);
  collect(b.wk, prefix + ".wk", out);
  collect(b.wv, prefix + ".wv", out);
  collect(b.wo, prefix + ".wo", out);
  collect(b.ff1, prefix + ".ff1", out);
  collect(b.ff2, prefix + ".ff2", out);
}

void collect(Conv1dParams& c, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &c.w});
  out.push_back({prefix + ".b", &c.b});
}

void collect(BatchNormParams& b, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &b.gamma});
  out.push_back({prefix + ".beta", &b.beta});
}

int ParamNodes::id(const Matrix& m) {
  auto it = ids_.find(&m);
  if (it != ids_.end()) return it->second;
  const int node = trainable_ ? graph_->leaf(m) : graph_->constant(m);
  ids_.emplace(&m, node);
  return node;
}

int linear_fwd(ad::Graph& g, ParamNodes& p, const Linear& l, int x) {
  return g.add_rowvec(g.matmul(x, p.id(l.w)), p.id(l.b));
}

int mlp_fwd(ad::Graph& g, ParamNodes& p, const Mlp& m, int x) {
  int h = x;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    h = linear_fwd(g, p, m.layers[i], h);
    if (i + 1 < m.layers.size()) h = g.gelu(h);
  }
  return h;
}

int dropout_fwd(ad::Graph& g, int x, const DropoutPlan& plan) {
  if (plan.rng == nullptr || plan.rate <= 0.0) return x;
  const auto& v = g.value(x);
  Matrix mask(v.rows(), v.cols());
  const double keep = 1.0 - plan.rate;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      mask(r, c) = plan.rng->bernoulli(plan.rate) ? 0.0 : 1.0 / keep;
    }
  }
  return g.mul(x, g.constant(std::move(mask)));
}

std::vector<int> lstm_fwd(ad::Graph& g, ParamNodes& p, const LstmCell& cell,
                          const std::vector<int>& step_inputs) {
  const int H = cell.hidden;
  const Eigen::Index B = g.value(step_inputs.front()).rows();
  int h = g.constant(Matrix::Zero(B, H));
  int c = g.constant(Matrix::Zero(B, H));
  const int w_ih = p.id(cell.w_ih);
  const int w_hh = p.id(cell.w_hh);
  const int b = p.id(cell.b);
  std::vector<int> hiddens;
  hiddens.reserve(step_inputs.size());
  for (int x : step_inputs) {
    const int gates = g.add_rowvec(g.add(g.matmul(x, w_ih), g.matmul(h, w_hh)), b);
    const int i_g = g.sigmoid(g.slice_cols(gates, 0, H));
    const int f_g = g.sigmoid(g.slice_cols(gates, H, H));
    const int c_g = g.tanh_op(g.slice_cols(gates, 2 * H, H));
    const int o_g = g.sigmoid(g.slice_cols(gates, 3 * H, H));
    c = g.add(g.mul(f_g, c), g.mul(i_g, c_g));
    h = g.mul(o_g, g.tanh_op(c));
    hiddens.push_back(h);
  }
  return hiddens;
}

int attention_block_fwd(ad::Graph& g, ParamNodes& p, const AttentionBlockParams& blk,
                        int x, int tokens, int heads, const DropoutPlan& plan) {
  const auto d = static_cast<int>(g.value(x).cols());
  if (d % heads != 0) throw ConfigError("attention: repr_dim not divisible by heads");
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const int h = g.layer_norm(x, p.id(blk.ln1.gamma), p.id(blk.ln1.beta));
  const int q = linear_fwd(g, p, blk.wq, h);
  const int k = linear_fwd(g, p, blk.wk, h);
  const int v = linear_fwd(g, p, blk.wv, h);
  std::vector<int> head_outs;
  head_outs.reserve(heads);
  for (int i = 0; i < heads; ++i) {
    const int qi = g.slice_cols(q, i * dh, dh);
    const int ki = g.slice_cols(k, i * dh, dh);
    const int vi = g.slice_cols(v, i * dh, dh);
    const int scores = g.attn_scores(qi, ki, tokens, scale);
    const int probs = g.softmax_rows(scores);
    head_outs.push_back(g.attn_apply(probs, vi, tokens));
  }
  int att = g.concat_cols(head_outs);
  att = linear_fwd(g, p, blk.wo, att);
  att = dropout_fwd(g, att, plan);
  int out = g.add(x, att);

  const int h2 = g.layer_norm(out, p.id(blk.ln2.gamma), p.id(blk.ln2.beta));
  int ff = g.gelu(linear_fwd(g, p, blk.ff1, h2));
  ff = dropout_fwd(g, ff, plan);
  ff = linear_fwd(g, p, blk.ff2, ff);
  return g.add(out, ff);
}

int conv1d_fwd(ad::Graph& g, ParamNodes& p, const Conv1dParams& c, int x, int tokens) {
  return g.conv1d_tokens(x, p.id(c.w), p.id(c.b), tokens);
}

}  // namespace gssm::nn
