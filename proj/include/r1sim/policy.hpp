#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r1sim/geometry.hpp"
#include "r1sim/scenario.hpp"

namespace r1sim {

// Per-agent simulation state used both as rollout state and as the policy's
// conditioning context.
struct AgentState {
  int agent_id = 0;
  Pose2D pose;
  MotionDelta prev_delta;  // agent-frame delta of the previous step
  double length = 4.5;
  double width = 1.9;
};

struct SceneState {
  int step = 0;
  std::vector<AgentState> agents;  // ascending agent_id
};

struct FeatureConfig {
  int k_neighbors = 4;
  int map_points = 8;
  double dt = 0.1;

  // [speed, prev delta(3)] + per neighbor [rel pos(2), rel yaw, rel speed,
  // presence] + per map point [rel pos(2)]
  int dim() const { return 4 + 5 * k_neighbors + 2 * map_points; }
};

using FeatureVector = std::vector<double>;

// Two-layer tanh perceptron over the token vocabulary.
struct PolicyParams {
  int in_dim = 0;
  int hidden = 0;
  int vocab = 0;
  std::uint64_t seed = 0;
  std::vector<double> flat;  // [W1 (hidden x in), b1, W2 (vocab x hidden), b2]

  int count() const { return hidden * in_dim + hidden + vocab * hidden + vocab; }
  double* w1() { return flat.data(); }
  double* b1() { return flat.data() + hidden * in_dim; }
  double* w2() { return flat.data() + hidden * in_dim + hidden; }
  double* b2() { return flat.data() + hidden * in_dim + hidden + vocab * hidden; }
  const double* w1() const { return flat.data(); }
  const double* b1() const { return flat.data() + hidden * in_dim; }
  const double* w2() const { return flat.data() + hidden * in_dim + hidden; }
  const double* b2() const { return flat.data() + hidden * in_dim + hidden + vocab * hidden; }
};

struct TokenDistribution {
  std::vector<double> probs;  // >= 0, sums to 1
};

// Fixed-length context encoding in the target agent's frame. Nearest
// neighbors/map points selected deterministically, ties by lower agent_id /
// earlier polyline order; absent slots are zero-padded with presence flag 0.
FeatureVector encode_features(const SceneState& state, int agent_index,
                              const std::vector<MapPolyline>& map, const FeatureConfig& config);

std::vector<double> forward(const PolicyParams& params, const FeatureVector& features);

// Max-subtracted stable softmax, renormalized to sum exactly 1.
TokenDistribution softmax_probs(const std::vector<double>& logits);

// Shannon entropy in nats, 0*log 0 = 0.
double entropy(const TokenDistribution& dist);

// log pi(token | features) and its exact gradient w.r.t. the flat parameters.
struct LogProbGrad {
  double logprob = 0.0;
  std::vector<double> grad;
};
LogProbGrad logprob_and_grad(const PolicyParams& params, const FeatureVector& features,
                             int token_id);

// Log-prob only (no gradient allocation), for replay checks and rollouts.
double logprob(const PolicyParams& params, const FeatureVector& features, int token_id);

// Backpropagates an arbitrary dLoss/dlogits through the perceptron. Building
// block for the log-prob, cross-entropy, and exact-KL gradients.
std::vector<double> grad_from_dlogits(const PolicyParams& params, const FeatureVector& features,
                                      const std::vector<double>& dlogits);

// Forward pass with the intermediates needed for cheap repeated backprop.
struct ForwardCache {
  std::vector<double> hidden;
  std::vector<double> logits;
  TokenDistribution dist;
};
ForwardCache forward_cache(const PolicyParams& params, const FeatureVector& features);

// grad += scale * backprop(dlogits), accumulated in place without a
// temporary. Hot path of the training loops.
void accumulate_grad(const PolicyParams& params, const FeatureVector& features,
                     const ForwardCache& cache, const std::vector<double>& dlogits, double scale,
                     std::vector<double>& grad);

// Xavier-uniform init: entries in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
PolicyParams init_params(std::uint64_t seed, int in_dim, int hidden, int vocab);

// Versioned JSON checkpoint, bit-exact round trip.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace r1sim
