#pragma once

#include <string>
#include <vector>

#include "r1sim/rollout.hpp"
#include "r1sim/scenario.hpp"

namespace r1sim {

// Reward variants of the ablation: safety-aware process reward (default),
// outcome reward, additive process reward, and the two hybrids.
enum class RewardVariant { SPR, OR, APR, AHR, SHR };

RewardVariant parse_reward_variant(const std::string& name);

struct RewardConfig {
  RewardVariant variant = RewardVariant::SPR;
  double alpha = 0.5;           // 1/meters in the distance kernel
  double outcome_weight = 0.5;  // hybrids only
  bool heading_in_distance = false;
};

struct RewardTrace {
  int n_rollout = 0;
  int horizon = 0;
  int n_agents = 0;
  // Flattened [rollout][step][agent].
  std::vector<double> reward;
  std::vector<bool> collision;
  std::vector<double> distance;  // meters to GT; unset where !gt_valid
  std::vector<bool> gt_valid;

  std::size_t idx(int i, int t, int j) const {
    return (static_cast<std::size_t>(i) * horizon + t) * n_agents + j;
  }
};

// -1 for every agent whose box overlaps any other agent's box (pairwise SAT),
// +1 otherwise. Both participants of a collision get -1.
std::vector<double> safety_term(const SceneState& state);

// exp(-alpha * d), d the Euclidean position distance to ground truth.
double realism_term(const Pose2D& sim_pose, const Pose2D& gt_pose, double alpha);

// Token-level rewards for a rollout group. Steps without valid ground truth
// use a neutral realism term of 1 and are flagged masked via gt_valid.
RewardTrace compute_rewards(const RolloutGroup& group, const Scenario& scenario,
                            const RewardConfig& config);

}  // namespace r1sim
