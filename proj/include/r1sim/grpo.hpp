#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r1sim/reward.hpp"
#include "r1sim/rollout.hpp"

namespace r1sim {

enum class AdvantageMode { mean_only, standardized };

AdvantageMode parse_advantage_mode(const std::string& name);

struct GrpoConfig {
  int n_rollout = 32;
  double eps_low = 0.2;
  double eps_high = 0.2;
  double beta_kl = 0.04;
  double learning_rate = 3e-3;
  int iterations = 2000;
  AdvantageMode advantage_mode = AdvantageMode::mean_only;
  bool freeze_first_layer = false;
  bool exact_kl = false;  // full-vocabulary KL, |V| <= 256 only
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  RewardConfig reward;
};

struct AdvantageTensor {
  int n_rollout = 0;
  int horizon = 0;
  int n_agents = 0;
  std::vector<double> a;    // flattened [rollout][step][agent]
  std::vector<bool> mask;   // gt-valid and loss-active

  std::size_t idx(int i, int t, int j) const {
    return (static_cast<std::size_t>(i) * horizon + t) * n_agents + j;
  }
};

// Group-relative advantages: mean-only centers each (step, agent) slot on the
// group mean over rollouts; standardized additionally divides by the
// population std + 1e-8 (the GRPO-standard ablation). Masked entries are
// excluded from the statistics and get A = 0.
AdvantageTensor advantages(const RewardTrace& rewards, AdvantageMode mode);

// exp(logp_theta - logp_old)
double importance_ratio(double logp_theta, double logp_old);

// Per-sampled-token KL estimator u - ln u - 1 with u = exp(logp_ref -
// logp_theta); >= 0 with equality iff the log-probs coincide.
double kl_term(double logp_ref, double logp_theta);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
  double mean_kl = 0.0;  // diagnostic, over loss-active tokens
};

// Clipped-surrogate GRPO objective over a rollout group. Log-probs under
// params_theta are recomputed by replaying the stored states; the stored
// log-probs must replay under params_old within 1e-9 or a ConsistencyError is
// thrown. Advantages are treated as constants.
LossAndGrad grpo_loss_and_grad(const RolloutGroup& group, const Scenario& scenario,
                               const RewardTrace& rewards, const PolicyParams& params_theta,
                               const PolicyParams& params_old, const PolicyParams& params_ref,
                               const GrpoConfig& config);

struct NtpConfig {
  double learning_rate = 0.05;
  int steps = 2000;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

struct NtpResult {
  PolicyParams params;
  std::vector<double> loss_curve;  // mean cross-entropy per step, nats
};

// Teacher-forced next-token pretraining on ground-truth tracks with seeded
// minibatch gradient descent.
NtpResult ntp_pretrain(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                       const PolicyParams& params_init, const NtpConfig& config);

// Fraction of held-out ground-truth tokens predicted by argmax logits.
double ntp_accuracy(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                    const PolicyParams& params);

// Teacher-forced (features, target token) pairs from ground-truth states.
struct NtpDataset {
  std::vector<FeatureVector> features;
  std::vector<int> targets;
};
NtpDataset build_ntp_dataset(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab);

struct IterStats {
  int iteration = 0;
  double mean_reward = 0.0;
  double collision_rate = 0.0;
  double mean_entropy = 0.0;
  double mean_kl = 0.0;
  double loss = 0.0;
};

struct FinetuneResult {
  PolicyParams params;
  std::vector<IterStats> stats;
};

// Scenario round-robin with seeded shuffle; one gradient step per rollout
// group, pi_old refreshed every iteration, pi_ref frozen at params_init.
FinetuneResult finetune_grpo(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                             const PolicyParams& params_init, const GrpoConfig& config);

void save_stats_csv(const std::vector<IterStats>& stats, const std::string& path);

}  // namespace r1sim
