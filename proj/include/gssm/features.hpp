#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "gssm/types.hpp"

namespace gssm {

constexpr int kHistorySteps = 25;   // t - 2.5 ... t - 0.1 s
constexpr int kHistoryChannels = 4; // omega_i, |v_i|, x_vj, y_vj
constexpr int kEnvDim = kLightingCount + kWeatherCount + kSurfaceCount + kTrafficCount;

// One (spacing, context) pair. Continuous features are stored raw; the model
// standardizes with its own stored statistics.
struct InteractionSample {
  std::string event_id;
  std::string subject_id;
  std::string object_id;
  double time = 0.0;

  double spacing = 0.0;                  // s, m
  std::vector<double> current;           // X_C scalars, fixed order
  Eigen::VectorXd env_onehot;            // X_E, four one-hot chunks
  Eigen::MatrixXd history;               // X_T, kHistorySteps x kHistoryChannels,
                                         // row 0 = t-2.5 s ... row 24 = t-0.1 s
  Eigen::MatrixXd history_mask;          // 1 kept, 0 dropped (values already zeroed)
  bool history_padded = false;           // old end padded with earliest frame
};

/// X_C scalar names in their fixed order (12 features, 13 with accel).
const std::vector<std::string>& current_feature_names(bool include_accel);

/// Four one-hot chunks in the fixed category order; each chunk sums to 1.
Eigen::VectorXd encode_environment(const EnvironmentTags& tags);

struct FeatureOptions {
  bool include_accel = false;
  bool training_mode = false;  // apply history dropout
  double dropout_p = 0.2;
  uint64_t seed = 0;           // per-sample seed (run seed mixed with index)
};

// Assembles (s, X_C, X_E, X_T) for a subject/object pair at grid time t.
// Both agents must cover t; history shorter than 2.5 s is padded at the old
// end with the earliest frame and flagged. Throws FeatureError otherwise.
InteractionSample extract_features(const Event& event, const std::string& subject_id,
                                   const std::string& object_id, double t,
                                   const FeatureOptions& options);

/// Serialization used by the extract-features / train CLI boundary.
std::string sample_to_jsonl(const InteractionSample& sample);
InteractionSample sample_from_jsonl(const std::string& line);

}  // namespace gssm
