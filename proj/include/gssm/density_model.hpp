#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gssm/ad.hpp"
#include "gssm/features.hpp"
#include "gssm/lognormal.hpp"
#include "gssm/nn.hpp"

namespace gssm {

struct ModelConfig {
  int repr_dim = 64;
  int xc_hidden = 16;        // per-scalar encoder width (5 linear layers)
  int xe_hidden = 64;        // per-chunk encoder width (4 linear layers)
  int attention_blocks = 6;
  int attention_heads = 4;
  int ff_mult = 2;           // attention feed-forward width multiplier
  int conv_layers = 2;       // kernel size 3
  int head_hidden = 256;     // two 3-layer output stacks
  int random_tokens = 4;
  bool include_accel = false;
  double beta = 5.0;         // smoothness weight
  double dropout = 0.2;
  double lr = 1e-4;
  int batch_size = 512;
  int max_epochs = 150;
  int patience = 10;
  uint64_t seed = 131;
  double perturb_range_frac = 0.01;  // noise sigma as fraction of feature range
  int js_quad_points = 64;

  int n_current() const { return include_accel ? 13 : 12; }
  int n_tokens() const { return n_current() + 4 + 5 + random_tokens; }
  void validate() const;
};

// Training-set statistics for the continuous features; stored in the
// checkpoint so inference standardizes identically.
struct FeatureStats {
  Eigen::VectorXd xc_mean, xc_std, xc_min, xc_max;  // per X_C scalar
  Eigen::VectorXd xt_mean, xt_std, xt_min, xt_max;  // per X_T channel
};

FeatureStats compute_feature_stats(const std::vector<InteractionSample>& samples,
                                   int n_current);

struct ModelWeights {
  std::vector<nn::Mlp> xc_encoders;  // one per X_C scalar
  std::vector<nn::Mlp> xe_encoders;  // four chunk encoders
  nn::LstmCell lstm;
  nn::BatchNormParams input_bn;
  std::vector<nn::AttentionBlockParams> blocks;
  std::vector<nn::Conv1dParams> convs;
  nn::Mlp mu_head;
  nn::Mlp logvar_head;

  std::vector<nn::ParamRef> trainable();
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// The conditional density estimator g_W(X) -> (mu, log sigma^2) plus its
// optimizer state. Checkpoints round-trip bit-exactly through JSON.
class DensityModel {
 public:
  ModelConfig config;
  FeatureStats stats;
  ModelWeights weights;
  ad::Matrix random_tokens;  // [R x d], orthogonal rows, fixed at init

  // Adam moments, parallel to ModelWeights::trainable() order.
  std::vector<ad::Matrix> adam_m, adam_v;
  long adam_steps = 0;
  int epoch = 0;
  double best_val = 0.0;

  /// Fresh seeded model; stats come from the provided training samples.
  static DensityModel init(const ModelConfig& config,
                           const std::vector<InteractionSample>& stats_source);

  LognormalParams forward_params(const InteractionSample& sample) const;
  std::vector<LognormalParams> forward_params_batch(
      const std::vector<InteractionSample>& samples) const;

  /// Encoded representation (token list) of one sample, eval mode: [T x d].
  Eigen::MatrixXd encode(const InteractionSample& sample) const;
  /// Decoder applied to an explicit token matrix [T x d], eval mode.
  LognormalParams decode_tokens(const Eigen::MatrixXd& theta) const;
  /// GSSM level at fixed spacing s, differentiated w.r.t. the tokens.
  double risk_level_with_grad(const Eigen::MatrixXd& theta, double s,
                              Eigen::MatrixXd* grad_out) const;

  // Smoothed-NLL batch loss: mean NLL + beta * JS between the densities at X
  // and at X perturbed with seeded Gaussian noise (sigma = perturb_range_frac
  // of each continuous feature's range). Deterministic given `seed` in either
  // mode, so finite differences of the train-mode loss are well defined.
  // Gradients (trainable() order) land in `grads_out` when non-null; batch
  // norm running stats update only then.
  double loss_smooth_nll(const std::vector<const InteractionSample*>& batch,
                         double beta, uint64_t seed,
                         std::vector<ad::Matrix>* grads_out, bool training = true);

  /// Mean plain NLL in eval mode (used for validation / early stopping).
  double eval_nll(const std::vector<InteractionSample>& samples) const;

  void save(const std::filesystem::path& path) const;
  static DensityModel load(const std::filesystem::path& path);

  std::vector<std::string> token_names() const;
};

/// Adam + early stopping on validation NLL; returns the best-validation
/// checkpoint. Per-epoch entries are appended to `log` when non-null.
DensityModel train(DensityModel model, const std::vector<InteractionSample>& train_set,
                   const std::vector<InteractionSample>& val_set,
                   std::vector<EpochLog>* log);

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& log);

}  // namespace gssm
