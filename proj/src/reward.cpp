#include "r1sim/reward.hpp"

#include <cmath>

#include "r1sim/errors.hpp"

namespace r1sim {

RewardVariant parse_reward_variant(const std::string& name) {
  if (name == "SPR") return RewardVariant::SPR;
  if (name == "OR") return RewardVariant::OR;
  if (name == "APR") return RewardVariant::APR;
  if (name == "AHR") return RewardVariant::AHR;
  if (name == "SHR") return RewardVariant::SHR;
  throw ValidationError("unknown reward variant '" + name + "'");
}

std::vector<double> safety_term(const SceneState& state) {
  const int n = static_cast<int>(state.agents.size());
  std::vector<double> out(n, 1.0);
  for (int a = 0; a < n; ++a) {
    const OrientedBox box_a{state.agents[a].pose, state.agents[a].length, state.agents[a].width};
    for (int b = a + 1; b < n; ++b) {
      const OrientedBox box_b{state.agents[b].pose, state.agents[b].length, state.agents[b].width};
      if (sat_overlap(box_a, box_b)) {
        out[a] = -1.0;
        out[b] = -1.0;
      }
    }
  }
  return out;
}

double realism_term(const Pose2D& sim_pose, const Pose2D& gt_pose, double alpha) {
  const double d = std::hypot(sim_pose.x - gt_pose.x, sim_pose.y - gt_pose.y);
  return std::exp(-alpha * d);
}

RewardTrace compute_rewards(const RolloutGroup& group, const Scenario& scenario,
                            const RewardConfig& config) {
  if (config.alpha <= 0.0) throw ValidationError("compute_rewards: alpha must be > 0");
  const int n_rollout = static_cast<int>(group.rollouts.size());
  const int horizon = scenario.horizon;
  const int n_agents = scenario.n_agents();

  RewardTrace trace;
  trace.n_rollout = n_rollout;
  trace.horizon = horizon;
  trace.n_agents = n_agents;
  const std::size_t total = static_cast<std::size_t>(n_rollout) * horizon * n_agents;
  trace.reward.assign(total, 0.0);
  trace.collision.assign(total, false);
  trace.distance.assign(total, 0.0);
  trace.gt_valid.assign(total, false);

  for (int i = 0; i < n_rollout; ++i) {
    const Rollout& r = group.rollouts[i];
    for (int t = 0; t < horizon; ++t) {
      // The token at step t is judged on the state it produced.
      const SceneState& state = r.states[t + 1];
      const std::vector<double> safety = safety_term(state);
      const int gt_index = scenario.history_len + t + 1;
      for (int j = 0; j < n_agents; ++j) {
        const std::size_t ix = trace.idx(i, t, j);
        const AgentTrack& track = scenario.tracks[j];
        const bool valid = track.valid[gt_index];
        double realism = 1.0;  // neutral when ground truth is missing
        if (valid) {
          const Pose2D& gt = track.poses[gt_index];
          const Pose2D& sim = state.agents[j].pose;
          double d = std::hypot(sim.x - gt.x, sim.y - gt.y);
          if (config.heading_in_distance) {
            d = std::hypot(d, normalize_angle(sim.yaw - gt.yaw));
          }
          realism = std::exp(-config.alpha * d);
          trace.distance[ix] = d;
        }
        trace.gt_valid[ix] = valid;
        trace.collision[ix] = safety[j] < 0.0;

        const bool final_step = (t == horizon - 1);
        const double spr = safety[j] * realism;
        const double apr = 0.5 * (safety[j] + realism);
        double rwd = 0.0;
        switch (config.variant) {
          case RewardVariant::SPR:
            rwd = spr;
            break;
          case RewardVariant::OR:
            rwd = final_step ? spr : 0.0;
            break;
          case RewardVariant::APR:
            rwd = apr;
            break;
          case RewardVariant::AHR:
            rwd = apr + (final_step ? config.outcome_weight * spr : 0.0);
            break;
          case RewardVariant::SHR:
            rwd = spr + (final_step ? config.outcome_weight * spr : 0.0);
            break;
        }
        trace.reward[ix] = rwd;
      }
    }
  }
  return trace;
}

}  // namespace r1sim
