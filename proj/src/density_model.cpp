#include "gssm/density_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gssm/errors.hpp"
#include "gssm/gssm_score.hpp"
#include "gssm/mathx.hpp"
#include "gssm/rng.hpp"

namespace gssm {

namespace {

using ad::Matrix;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct BatchInputs {
  Matrix xc;             // [B x nc], raw
  Matrix xe;             // [B x kEnvDim]
  Matrix xt;             // [B x 100], column = step * channels + channel, raw
  Eigen::VectorXd spacing;
};

BatchInputs pack_batch(const ModelConfig& config,
                       const std::vector<const InteractionSample*>& samples) {
  const int nc = config.n_current();
  const auto B = static_cast<Eigen::Index>(samples.size());
  BatchInputs in;
  in.xc.resize(B, nc);
  in.xe.resize(B, kEnvDim);
  in.xt.resize(B, kHistorySteps * kHistoryChannels);
  in.spacing.resize(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const InteractionSample& s = *samples[b];
    if (static_cast<int>(s.current.size()) != nc) {
      throw ConfigError("sample has " + std::to_string(s.current.size()) +
                        " current features, model expects " + std::to_string(nc));
    }
    for (int f = 0; f < nc; ++f) in.xc(b, f) = s.current[f];
    in.xe.row(b) = s.env_onehot.transpose();
    for (int k = 0; k < kHistorySteps; ++k) {
      for (int c = 0; c < kHistoryChannels; ++c) {
        in.xt(b, k * kHistoryChannels + c) = s.history(k, c);
      }
    }
    in.spacing[b] = s.spacing;
  }
  return in;
}

void add_range_noise(BatchInputs& in, const FeatureStats& stats, double frac, Rng& rng) {
  if (frac <= 0.0) return;
  for (Eigen::Index f = 0; f < in.xc.cols(); ++f) {
    const double sigma = frac * (stats.xc_max[f] - stats.xc_min[f]);
    for (Eigen::Index b = 0; b < in.xc.rows(); ++b) in.xc(b, f) += rng.normal(0.0, sigma);
  }
  for (int k = 0; k < kHistorySteps; ++k) {
    for (int c = 0; c < kHistoryChannels; ++c) {
      const double sigma = frac * (stats.xt_max[c] - stats.xt_min[c]);
      const Eigen::Index col = k * kHistoryChannels + c;
      for (Eigen::Index b = 0; b < in.xt.rows(); ++b) in.xt(b, col) += rng.normal(0.0, sigma);
    }
  }
}

Matrix standardize_cols(const Matrix& raw, const Eigen::VectorXd& mean,
                        const Eigen::VectorXd& std, int stride) {
  // stride > 1 reuses per-channel stats across repeated column groups (X_T).
  Matrix out = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const Eigen::Index s = c % stride;
    out.col(c) = (raw.col(c).array() - mean[s]) / std[s];
  }
  return out;
}

struct EncoderOut {
  std::vector<int> tokens;  // each [B x d]
};

EncoderOut build_encoder(ad::Graph& g, nn::ParamNodes& pn, const DensityModel& model,
                         const BatchInputs& in) {
  const ModelConfig& cfg = model.config;
  const auto B = in.xc.rows();
  EncoderOut out;

  const Matrix xc_std =
      standardize_cols(in.xc, model.stats.xc_mean, model.stats.xc_std,
                       static_cast<int>(model.stats.xc_mean.size()));
  for (int f = 0; f < cfg.n_current(); ++f) {
    const int x = g.constant(xc_std.col(f));
    out.tokens.push_back(nn::mlp_fwd(g, pn, model.weights.xc_encoders[f], x));
  }

  const int chunk_sizes[4] = {kLightingCount, kWeatherCount, kSurfaceCount, kTrafficCount};
  int offset = 0;
  for (int c = 0; c < 4; ++c) {
    const int x = g.constant(in.xe.middleCols(offset, chunk_sizes[c]));
    out.tokens.push_back(nn::mlp_fwd(g, pn, model.weights.xe_encoders[c], x));
    offset += chunk_sizes[c];
  }

  // History runs through the LSTM most-recent-first; the is-seen horizon of
  // the hidden state after 5k steps is exactly the last k*0.5 s.
  const Matrix xt_std =
      standardize_cols(in.xt, model.stats.xt_mean, model.stats.xt_std, kHistoryChannels);
  std::vector<int> steps;
  steps.reserve(kHistorySteps);
  for (int k = kHistorySteps - 1; k >= 0; --k) {
    steps.push_back(g.constant(xt_std.middleCols(k * kHistoryChannels, kHistoryChannels)));
  }
  const auto hiddens = nn::lstm_fwd(g, pn, model.weights.lstm, steps);
  for (int horizon = 1; horizon <= 5; ++horizon) {
    out.tokens.push_back(hiddens[horizon * 5 - 1]);
  }

  for (int r = 0; r < cfg.random_tokens; ++r) {
    out.tokens.push_back(
        g.constant(Matrix::Ones(B, 1) * model.random_tokens.row(r)));
  }
  return out;
}

struct DecoderOut {
  int mu = -1;
  int logvar = -1;
  Matrix bn_batch_mean, bn_batch_var;  // only in training mode
};

DecoderOut build_decoder(ad::Graph& g, nn::ParamNodes& pn, const DensityModel& model,
                         int stacked, bool training, const nn::DropoutPlan& plan) {
  const ModelConfig& cfg = model.config;
  const int T = cfg.n_tokens();
  DecoderOut out;

  int x;
  if (training) {
    auto bn = g.batch_norm_train(stacked, pn.id(model.weights.input_bn.gamma),
                                 pn.id(model.weights.input_bn.beta), T);
    x = bn.y;
    out.bn_batch_mean = std::move(bn.batch_mean);
    out.bn_batch_var = std::move(bn.batch_var);
  } else {
    x = g.batch_norm_eval(stacked, pn.id(model.weights.input_bn.gamma),
                          pn.id(model.weights.input_bn.beta),
                          model.weights.input_bn.run_mean,
                          model.weights.input_bn.run_var, T);
  }

  for (const auto& blk : model.weights.blocks) {
    x = nn::attention_block_fwd(g, pn, blk, x, T, cfg.attention_heads, plan);
  }
  for (size_t i = 0; i < model.weights.convs.size(); ++i) {
    x = nn::conv1d_fwd(g, pn, model.weights.convs[i], x, T);
    if (i + 1 < model.weights.convs.size()) x = g.gelu(x);
  }
  const int flat = g.flatten_tokens(x, T);
  out.mu = nn::mlp_fwd(g, pn, model.weights.mu_head, flat);
  out.logvar = g.clamp(nn::mlp_fwd(g, pn, model.weights.logvar_head, flat),
                       kLogVarMin, kLogVarMax);
  return out;
}

// Per-sample NLL column: 0.5*(ln 2 pi + lv + (ln s - mu)^2 * e^{-lv}) + ln s.
int build_nll(ad::Graph& g, int mu, int logvar, const Eigen::VectorXd& spacing) {
  const auto B = spacing.size();
  Matrix lns(B, 1);
  for (Eigen::Index b = 0; b < B; ++b) {
    if (!(spacing[b] > 0.0)) throw ArgumentError("loss: spacing must be positive");
    lns(b, 0) = std::log(spacing[b]);
  }
  const int r = g.sub(g.constant(lns), mu);
  const int rr = g.mul(r, r);
  const int prec = g.exp_op(g.scale(logvar, -1.0));
  const int quad = g.scale(g.add(logvar, g.mul(rr, prec)), 0.5);
  return g.add(quad, g.constant((lns.array() + kHalfLog2Pi).matrix()));
}

// Per-sample JS column between N(mu1, e^{lv1}) and N(mu2, e^{lv2}) in log
// space, by Gauss-Legendre over the union of both mu +- 8 sigma ranges. The
// interval is frozen (densities vanish at its ends); gradients flow through
// the integrand into both parameter pairs.
int build_js(ad::Graph& g, int mu1, int lv1, int mu2, int lv2, int quad_points) {
  const auto& mu1v = g.value(mu1);
  const auto& lv1v = g.value(lv1);
  const auto& mu2v = g.value(mu2);
  const auto& lv2v = g.value(lv2);
  const auto B = mu1v.rows();
  const int K = quad_points;
  const auto& rule = gauss_legendre(K);

  Matrix t(B, K), w(B, K);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double s1 = std::exp(0.5 * lv1v(b, 0));
    const double s2 = std::exp(0.5 * lv2v(b, 0));
    const double lo = std::min(mu1v(b, 0) - 8.0 * s1, mu2v(b, 0) - 8.0 * s2);
    const double hi = std::max(mu1v(b, 0) + 8.0 * s1, mu2v(b, 0) + 8.0 * s2);
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (int k = 0; k < K; ++k) {
      t(b, k) = mid + half * rule.nodes[k];
      w(b, k) = half * rule.weights[k];
    }
  }
  const int t_id = g.constant(std::move(t));

  const auto log_density = [&](int mu, int lv) {
    const int diff = g.sub(t_id, g.bcast_cols(mu, K));
    const int sq = g.mul(diff, diff);
    const int prec = g.bcast_cols(g.exp_op(g.scale(lv, -1.0)), K);
    const int a = g.scale(g.bcast_cols(lv, K), -0.5);
    const int b = g.scale(g.mul(sq, prec), -0.5);
    return g.add_scalar(g.add(a, b), -kHalfLog2Pi);
  };
  const int lnp = log_density(mu1, lv1);
  const int lnq = log_density(mu2, lv2);
  const int p = g.exp_op(lnp);
  const int q = g.exp_op(lnq);
  const int lnm = g.log_op(g.add_scalar(g.scale(g.add(p, q), 0.5), 1e-300));
  const int integrand = g.scale(
      g.add(g.mul(p, g.sub(lnp, lnm)), g.mul(q, g.sub(lnq, lnm))), 0.5);
  return g.rowsum(g.mul(integrand, g.constant(std::move(w))));
}

// M = [ln ln 2 - ln(-ln survival)] / ln 10, survival clamped to
// [kSurvivalClampLo, 1 - kSurvivalClampLo].
int build_risk_level(ad::Graph& g, int mu, int logvar, double s) {
  const auto B = g.value(mu).rows();
  Matrix lns = Matrix::Constant(B, 1, std::log(s));
  const int r = g.sub(g.constant(std::move(lns)), mu);
  const int inv_sigma = g.exp_op(g.scale(logvar, -0.5));
  const int z = g.scale(g.mul(r, inv_sigma), 1.0 / std::sqrt(2.0));
  const int e = g.erf_op(z);
  const int survival = g.clamp(g.scale(g.add_scalar(g.scale(e, -1.0), 1.0), 0.5),
                               kSurvivalClampLo, 1.0 - kSurvivalClampLo);
  const int negln = g.scale(g.log_op(survival), -1.0);
  return g.scale(g.add_scalar(g.scale(g.log_op(negln), -1.0), std::log(std::log(2.0))),
                 1.0 / std::log(10.0));
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["r"] = m.rows();
  j["c"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["d"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("r").get<Eigen::Index>();
  const auto cols = j.at("c").get<Eigen::Index>();
  const auto data = j.at("d").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw SchemaError("checkpoint matrix size mismatch");
  }
  Matrix m(rows, cols);
  size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++];
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"repr_dim", c.repr_dim},
                        {"xc_hidden", c.xc_hidden},
                        {"xe_hidden", c.xe_hidden},
                        {"attention_blocks", c.attention_blocks},
                        {"attention_heads", c.attention_heads},
                        {"ff_mult", c.ff_mult},
                        {"conv_layers", c.conv_layers},
                        {"head_hidden", c.head_hidden},
                        {"random_tokens", c.random_tokens},
                        {"include_accel", c.include_accel},
                        {"beta", c.beta},
                        {"dropout", c.dropout},
                        {"lr", c.lr},
                        {"batch_size", c.batch_size},
                        {"max_epochs", c.max_epochs},
                        {"patience", c.patience},
                        {"seed", c.seed},
                        {"perturb_range_frac", c.perturb_range_frac},
                        {"js_quad_points", c.js_quad_points}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.repr_dim = j.value("repr_dim", c.repr_dim);
  c.xc_hidden = j.value("xc_hidden", c.xc_hidden);
  c.xe_hidden = j.value("xe_hidden", c.xe_hidden);
  c.attention_blocks = j.value("attention_blocks", c.attention_blocks);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.ff_mult = j.value("ff_mult", c.ff_mult);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.random_tokens = j.value("random_tokens", c.random_tokens);
  c.include_accel = j.value("include_accel", c.include_accel);
  c.beta = j.value("beta", c.beta);
  c.dropout = j.value("dropout", c.dropout);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.perturb_range_frac = j.value("perturb_range_frac", c.perturb_range_frac);
  c.js_quad_points = j.value("js_quad_points", c.js_quad_points);
  return c;
}

}  // namespace

void ModelConfig::validate() const {
  if (repr_dim < 1 || xc_hidden < 1 || xe_hidden < 1 || attention_blocks < 1 ||
      attention_heads < 1 || ff_mult < 1 || conv_layers < 1 || head_hidden < 1) {
    throw ConfigError("ModelConfig: all counts must be >= 1");
  }
  if (random_tokens < 0 || random_tokens > repr_dim) {
    throw ConfigError("ModelConfig: random_tokens must be in [0, repr_dim]");
  }
  if (repr_dim % attention_heads != 0) {
    throw ConfigError("ModelConfig: repr_dim must be divisible by attention_heads");
  }
  if (beta < 0.0) throw ConfigError("ModelConfig: beta must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("ModelConfig: dropout in [0,1)");
  if (batch_size < 1 || max_epochs < 1 || patience < 1) {
    throw ConfigError("ModelConfig: batch/epochs/patience must be >= 1");
  }
}

FeatureStats compute_feature_stats(const std::vector<InteractionSample>& samples,
                                   int n_current) {
  if (samples.empty()) throw ArgumentError("compute_feature_stats: no samples");
  FeatureStats st;
  st.xc_mean = Eigen::VectorXd::Zero(n_current);
  st.xc_std = Eigen::VectorXd::Ones(n_current);
  st.xc_min = Eigen::VectorXd::Constant(n_current, std::numeric_limits<double>::infinity());
  st.xc_max = Eigen::VectorXd::Constant(n_current, -std::numeric_limits<double>::infinity());
  st.xt_mean = Eigen::VectorXd::Zero(kHistoryChannels);
  st.xt_std = Eigen::VectorXd::Ones(kHistoryChannels);
  st.xt_min = Eigen::VectorXd::Constant(kHistoryChannels, std::numeric_limits<double>::infinity());
  st.xt_max = Eigen::VectorXd::Constant(kHistoryChannels, -std::numeric_limits<double>::infinity());

  Eigen::VectorXd xc_sq = Eigen::VectorXd::Zero(n_current);
  Eigen::VectorXd xt_sq = Eigen::VectorXd::Zero(kHistoryChannels);
  long xt_count = 0;
  for (const auto& s : samples) {
    if (static_cast<int>(s.current.size()) != n_current) {
      throw ConfigError("compute_feature_stats: current feature count mismatch");
    }
    for (int f = 0; f < n_current; ++f) {
      const double v = s.current[f];
      st.xc_mean[f] += v;
      xc_sq[f] += v * v;
      st.xc_min[f] = std::min(st.xc_min[f], v);
      st.xc_max[f] = std::max(st.xc_max[f], v);
    }
    for (int k = 0; k < kHistorySteps; ++k) {
      for (int c = 0; c < kHistoryChannels; ++c) {
        const double v = s.history(k, c);
        st.xt_mean[c] += v;
        xt_sq[c] += v * v;
        st.xt_min[c] = std::min(st.xt_min[c], v);
        st.xt_max[c] = std::max(st.xt_max[c], v);
      }
    }
    xt_count += kHistorySteps;
  }
  const auto n = static_cast<double>(samples.size());
  for (int f = 0; f < n_current; ++f) {
    st.xc_mean[f] /= n;
    const double var = std::max(0.0, xc_sq[f] / n - st.xc_mean[f] * st.xc_mean[f]);
    st.xc_std[f] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  for (int c = 0; c < kHistoryChannels; ++c) {
    st.xt_mean[c] /= static_cast<double>(xt_count);
    const double var =
        std::max(0.0, xt_sq[c] / static_cast<double>(xt_count) - st.xt_mean[c] * st.xt_mean[c]);
    st.xt_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return st;
}

std::vector<nn::ParamRef> ModelWeights::trainable() {
  std::vector<nn::ParamRef> refs;
  for (size_t i = 0; i < xc_encoders.size(); ++i) {
    collect(xc_encoders[i], "xc" + std::to_string(i), refs);
  }
  for (size_t i = 0; i < xe_encoders.size(); ++i) {
    collect(xe_encoders[i], "xe" + std::to_string(i), refs);
  }
  collect(lstm, "lstm", refs);
  collect(input_bn, "bn", refs);
  for (size_t i = 0; i < blocks.size(); ++i) {
    collect(blocks[i], "blk" + std::to_string(i), refs);
  }
  for (size_t i = 0; i < convs.size(); ++i) {
    collect(convs[i], "conv" + std::to_string(i), refs);
  }
  collect(mu_head, "mu_head", refs);
  collect(logvar_head, "logvar_head", refs);
  return refs;
}

DensityModel DensityModel::init(const ModelConfig& config,
                                const std::vector<InteractionSample>& stats_source) {
  config.validate();
  DensityModel m;
  m.config = config;
  m.stats = compute_feature_stats(stats_source, config.n_current());

  Rng wrng(mix_seed(config.seed, 0x77));
  const int d = config.repr_dim;
  for (int f = 0; f < config.n_current(); ++f) {
    m.weights.xc_encoders.push_back(nn::make_mlp(
        {1, config.xc_hidden, config.xc_hidden, config.xc_hidden, config.xc_hidden, d}, wrng));
  }
  const int chunk_sizes[4] = {kLightingCount, kWeatherCount, kSurfaceCount, kTrafficCount};
  for (int c = 0; c < 4; ++c) {
    m.weights.xe_encoders.push_back(nn::make_mlp(
        {chunk_sizes[c], config.xe_hidden, config.xe_hidden, config.xe_hidden, d}, wrng));
  }
  m.weights.lstm = nn::make_lstm(kHistoryChannels, d, wrng);
  m.weights.input_bn = nn::make_batch_norm(config.n_tokens(), d);
  for (int b = 0; b < config.attention_blocks; ++b) {
    m.weights.blocks.push_back(nn::make_attention_block(d, config.ff_mult * d, wrng));
  }
  for (int c = 0; c < config.conv_layers; ++c) {
    m.weights.convs.push_back(nn::make_conv1d(d, d, wrng));
  }
  const int flat = config.n_tokens() * d;
  m.weights.mu_head =
      nn::make_mlp({flat, config.head_hidden, config.head_hidden, 1}, wrng);
  m.weights.logvar_head =
      nn::make_mlp({flat, config.head_hidden, config.head_hidden, 1}, wrng);

  // Orthogonal Gaussian rows, fixed for the lifetime of the model.
  Rng trng(mix_seed(config.seed, 0x7A));
  Matrix rt(config.random_tokens, d);
  for (Eigen::Index r = 0; r < rt.rows(); ++r) {
    for (Eigen::Index c = 0; c < rt.cols(); ++c) rt(r, c) = trng.normal();
  }
  for (Eigen::Index r = 0; r < rt.rows(); ++r) {
    for (Eigen::Index p = 0; p < r; ++p) {
      rt.row(r) -= rt.row(r).dot(rt.row(p)) * rt.row(p);
    }
    const double nrm = rt.row(r).norm();
    if (nrm > 1e-12) rt.row(r) /= nrm;
  }
  m.random_tokens = std::move(rt);
  m.best_val = std::numeric_limits<double>::infinity();
  return m;
}

std::vector<LognormalParams> DensityModel::forward_params_batch(
    const std::vector<InteractionSample>& samples) const {
  std::vector<const InteractionSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  const BatchInputs in = pack_batch(config, ptrs);

  ad::Graph g;
  nn::ParamNodes pn(g, false);
  const auto enc = build_encoder(g, pn, *this, in);
  const int stacked = g.stack_tokens(enc.tokens);
  const auto dec = build_decoder(g, pn, *this, stacked, false, {});
  std::vector<LognormalParams> out(samples.size());
  for (size_t b = 0; b < samples.size(); ++b) {
    out[b] = {g.value(dec.mu)(static_cast<Eigen::Index>(b), 0),
              g.value(dec.logvar)(static_cast<Eigen::Index>(b), 0)};
  }
  return out;
}

LognormalParams DensityModel::forward_params(const InteractionSample& sample) const {
  return forward_params_batch({sample}).front();
}

Eigen::MatrixXd DensityModel::encode(const InteractionSample& sample) const {
  std::vector<const InteractionSample*> ptrs = {&sample};
  const BatchInputs in = pack_batch(config, ptrs);
  ad::Graph g;
  nn::ParamNodes pn(g, false);
  const auto enc = build_encoder(g, pn, *this, in);
  const int stacked = g.stack_tokens(enc.tokens);
  return g.value(stacked);  // [T x d] for B = 1
}

LognormalParams DensityModel::decode_tokens(const Eigen::MatrixXd& theta) const {
  ad::Graph g;
  nn::ParamNodes pn(g, false);
  const int tokens = g.constant(theta);
  const auto dec = build_decoder(g, pn, *this, tokens, false, {});
  return {g.value(dec.mu)(0, 0), g.value(dec.logvar)(0, 0)};
}

double DensityModel::risk_level_with_grad(const Eigen::MatrixXd& theta, double s,
                                          Eigen::MatrixXd* grad_out) const {
  if (!(s > 0.0)) throw ArgumentError("risk_level_with_grad: spacing must be positive");
  ad::Graph g;
  nn::ParamNodes pn(g, false);
  const int tokens = g.leaf(theta);
  const auto dec = build_decoder(g, pn, *this, tokens, false, {});
  const int level = build_risk_level(g, dec.mu, dec.logvar, s);
  const double value = g.value(level)(0, 0);
  if (grad_out != nullptr) {
    g.backward(level);
    *grad_out = g.grad(tokens);
    if (!grad_out->allFinite()) {
      throw AttributionError("non-finite token gradient in risk level");
    }
  }
  return value;
}

double DensityModel::loss_smooth_nll(const std::vector<const InteractionSample*>& batch,
                                     double beta, uint64_t seed,
                                     std::vector<ad::Matrix>* grads_out, bool training) {
  if (batch.empty()) throw ArgumentError("loss_smooth_nll: empty batch");
  Rng rng(seed);

  BatchInputs in = pack_batch(config, batch);
  BatchInputs perturbed = in;
  add_range_noise(perturbed, stats, config.perturb_range_frac, rng);

  ad::Graph g;
  nn::ParamNodes pn(g, grads_out != nullptr);
  nn::DropoutPlan plan;
  if (training && config.dropout > 0.0) {
    plan.rng = &rng;
    plan.rate = config.dropout;
  }

  const auto enc = build_encoder(g, pn, *this, in);
  const auto dec = build_decoder(g, pn, *this, g.stack_tokens(enc.tokens), training, plan);
  int loss_col = build_nll(g, dec.mu, dec.logvar, in.spacing);
  if (beta != 0.0) {
    const auto enc2 = build_encoder(g, pn, *this, perturbed);
    const auto dec2 =
        build_decoder(g, pn, *this, g.stack_tokens(enc2.tokens), training, plan);
    const int js = build_js(g, dec.mu, dec.logvar, dec2.mu, dec2.logvar,
                            config.js_quad_points);
    loss_col = g.add(loss_col, g.scale(js, beta));
  }
  const int loss = g.mean_all(loss_col);
  const double loss_value = g.value(loss)(0, 0);

  if (grads_out != nullptr) {
    g.backward(loss);
    auto refs = weights.trainable();
    grads_out->clear();
    grads_out->reserve(refs.size());
    for (const auto& ref : refs) {
      grads_out->push_back(g.grad(pn.id(*ref.value)));
    }
    // Running-stat update from the unperturbed branch (momentum 0.1).
    weights.input_bn.run_mean = 0.9 * weights.input_bn.run_mean + 0.1 * dec.bn_batch_mean;
    weights.input_bn.run_var = 0.9 * weights.input_bn.run_var + 0.1 * dec.bn_batch_var;
  }
  return loss_value;
}

double DensityModel::eval_nll(const std::vector<InteractionSample>& samples) const {
  if (samples.empty()) throw ArgumentError("eval_nll: no samples");
  const auto params = forward_params_batch(samples);
  double total = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    total += nll_loss(params[i], samples[i].spacing);
  }
  return total / static_cast<double>(samples.size());
}

std::vector<std::string> DensityModel::token_names() const {
  std::vector<std::string> names = current_feature_names(config.include_accel);
  names.insert(names.end(),
               {"env_lighting", "env_weather", "env_surface", "env_traffic"});
  names.insert(names.end(),
               {"hist_0.5s", "hist_1.0s", "hist_1.5s", "hist_2.0s", "hist_2.5s"});
  for (int r = 0; r < config.random_tokens; ++r) {
    names.push_back("random_" + std::to_string(r + 1));
  }
  return names;
}

void DensityModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "gssm-density-model";
  j["version"] = 1;
  j["config"] = config_to_json(config);
  j["stats"] = {{"xc_mean", vector_to_json(stats.xc_mean)},
                {"xc_std", vector_to_json(stats.xc_std)},
                {"xc_min", vector_to_json(stats.xc_min)},
                {"xc_max", vector_to_json(stats.xc_max)},
                {"xt_mean", vector_to_json(stats.xt_mean)},
                {"xt_std", vector_to_json(stats.xt_std)},
                {"xt_min", vector_to_json(stats.xt_min)},
                {"xt_max", vector_to_json(stats.xt_max)}};
  j["random_tokens"] = matrix_to_json(random_tokens);

  nlohmann::json params;
  auto refs = const_cast<ModelWeights&>(weights).trainable();
  for (const auto& ref : refs) params[ref.name] = matrix_to_json(*ref.value);
  j["params"] = std::move(params);
  j["buffers"] = {{"bn.run_mean", matrix_to_json(weights.input_bn.run_mean)},
                  {"bn.run_var", matrix_to_json(weights.input_bn.run_var)}};

  nlohmann::json adam;
  adam["steps"] = adam_steps;
  nlohmann::json am, av;
  for (size_t i = 0; i < adam_m.size(); ++i) {
    am[refs[i].name] = matrix_to_json(adam_m[i]);
    av[refs[i].name] = matrix_to_json(adam_v[i]);
  }
  adam["m"] = std::move(am);
  adam["v"] = std::move(av);
  j["adam"] = std::move(adam);
  j["epoch"] = epoch;
  j["best_val"] = best_val;

  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << j.dump() << "\n";
}

DensityModel DensityModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", std::string()) != "gssm-density-model") {
    throw SchemaError("not a density-model checkpoint: " + path.string());
  }

  const ModelConfig config = config_from_json(j.at("config"));
  // Rebuild the skeleton, then overwrite every matrix from the file.
  DensityModel m;
  m.config = config;
  {
    // Minimal stats placeholder; overwritten below.
    InteractionSample dummy;
    dummy.spacing = 1.0;
    dummy.current.assign(config.n_current(), 0.0);
    dummy.env_onehot = Eigen::VectorXd::Zero(kEnvDim);
    dummy.history = Eigen::MatrixXd::Zero(kHistorySteps, kHistoryChannels);
    dummy.history_mask = Eigen::MatrixXd::Ones(kHistorySteps, kHistoryChannels);
    m = DensityModel::init(config, {dummy});
  }
  const auto& st = j.at("stats");
  m.stats.xc_mean = vector_from_json(st.at("xc_mean"));
  m.stats.xc_std = vector_from_json(st.at("xc_std"));
  m.stats.xc_min = vector_from_json(st.at("xc_min"));
  m.stats.xc_max = vector_from_json(st.at("xc_max"));
  m.stats.xt_mean = vector_from_json(st.at("xt_mean"));
  m.stats.xt_std = vector_from_json(st.at("xt_std"));
  m.stats.xt_min = vector_from_json(st.at("xt_min"));
  m.stats.xt_max = vector_from_json(st.at("xt_max"));
  m.random_tokens = matrix_from_json(j.at("random_tokens"));

  auto refs = m.weights.trainable();
  for (const auto& ref : refs) {
    *ref.value = matrix_from_json(j.at("params").at(ref.name));
  }
  m.weights.input_bn.run_mean = matrix_from_json(j.at("buffers").at("bn.run_mean"));
  m.weights.input_bn.run_var = matrix_from_json(j.at("buffers").at("bn.run_var"));

  if (j.contains("adam") && j.at("adam").contains("m")) {
    m.adam_steps = j.at("adam").value("steps", 0L);
    m.adam_m.clear();
    m.adam_v.clear();
    for (const auto& ref : refs) {
      if (j.at("adam").at("m").contains(ref.name)) {
        m.adam_m.push_back(matrix_from_json(j.at("adam").at("m").at(ref.name)));
        m.adam_v.push_back(matrix_from_json(j.at("adam").at("v").at(ref.name)));
      }
    }
  }
  m.epoch = j.value("epoch", 0);
  m.best_val = j.value("best_val", std::numeric_limits<double>::infinity());
  return m;
}

DensityModel train(DensityModel model, const std::vector<InteractionSample>& train_set,
                   const std::vector<InteractionSample>& val_set,
                   std::vector<EpochLog>* log) {
  if (train_set.empty() || val_set.empty()) {
    throw ArgumentError("train: train and validation sets must be nonempty");
  }
  auto refs = model.weights.trainable();
  if (model.adam_m.size() != refs.size()) {
    model.adam_m.clear();
    model.adam_v.clear();
    for (const auto& ref : refs) {
      model.adam_m.push_back(Matrix::Zero(ref.value->rows(), ref.value->cols()));
      model.adam_v.push_back(Matrix::Zero(ref.value->rows(), ref.value->cols()));
    }
  }

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;

  DensityModel best = model;
  int epochs_since_best = 0;
  Rng shuffle_rng(mix_seed(model.config.seed, 0x5F));
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<ad::Matrix> grads;
  uint64_t step_counter = 0;
  for (int epoch = model.epoch + 1; epoch <= model.config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double train_loss_sum = 0.0;
    long batches = 0;
    for (size_t at = 0; at < order.size(); at += model.config.batch_size) {
      const size_t stop = std::min(order.size(), at + model.config.batch_size);
      std::vector<const InteractionSample*> batch;
      batch.reserve(stop - at);
      for (size_t i = at; i < stop; ++i) batch.push_back(&train_set[order[i]]);

      const double loss = model.loss_smooth_nll(
          batch, model.config.beta, mix_seed(model.config.seed, 0xB000 + step_counter),
          &grads);
      ++step_counter;
      if (!std::isfinite(loss)) {
        throw TrainingError("divergent loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches));
      }
      train_loss_sum += loss;
      ++batches;

      ++model.adam_steps;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(model.adam_steps));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(model.adam_steps));
      for (size_t i = 0; i < refs.size(); ++i) {
        auto& m = model.adam_m[i];
        auto& v = model.adam_v[i];
        m = kBeta1 * m + (1.0 - kBeta1) * grads[i];
        v = (kBeta2 * v.array() + (1.0 - kBeta2) * grads[i].array().square()).matrix();
        refs[i].value->array() -=
            model.config.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
      }
    }

    const double val_loss = model.eval_nll(val_set);
    model.epoch = epoch;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log != nullptr) {
      log->push_back({epoch, train_loss_sum / std::max(1L, batches), val_loss,
                      model.config.lr, seconds});
    }

    if (val_loss < model.best_val) {
      model.best_val = val_loss;
      best = model;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= model.config.patience) {
      break;
    }
  }
  return best;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training log " + path.string());
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << format_double(e.val_loss) << ',' << format_double(e.lr) << ','
        << format_double(e.seconds) << "\n";
  }
}

}  // namespace gssm
