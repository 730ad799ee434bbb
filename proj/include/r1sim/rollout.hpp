#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r1sim/policy.hpp"
#include "r1sim/sampling.hpp"
#include "r1sim/scenario.hpp"
#include "r1sim/tokenizer.hpp"

namespace r1sim {

struct StepRecord {
  std::vector<SampleRecord> agents;  // one per agent, ascending agent_id
};

struct Rollout {
  std::uint64_t seed = 0;
  std::vector<SceneState> states;   // horizon + 1, states[0] = initial state
  std::vector<StepRecord> records;  // horizon
};

struct RolloutGroup {
  std::vector<Rollout> rollouts;
};

// Scene state at the last history step; previous delta taken from the last
// two history poses (zero when unavailable).
SceneState initial_state(const Scenario& scenario);

// One synchronous simulation step: every agent is encoded against the
// pre-step state and all new poses are committed together. `rngs` holds one
// independent stream per agent.
void step(SceneState& state, const Scenario& scenario, const PolicyParams& params,
          const TokenVocabulary& vocab, const SamplerConfig& sampler_cfg,
          std::vector<SplitMix64>& rngs, StepRecord& record);

Rollout simulate(const Scenario& scenario, const PolicyParams& params,
                 const TokenVocabulary& vocab, const SamplerConfig& sampler_cfg,
                 std::uint64_t seed);

// n_rollout independent simulations seeded base_seed + i, generated on
// OpenMP workers and gathered in index order. Identical output for any
// worker count.
RolloutGroup rollout_group(const Scenario& scenario, const PolicyParams& params,
                           const TokenVocabulary& vocab, int n_rollout,
                           const SamplerConfig& sampler_cfg, std::uint64_t base_seed);

// Serial reference implementation kept for testing and benchmarking.
RolloutGroup rollout_group_serial(const Scenario& scenario, const PolicyParams& params,
                                  const TokenVocabulary& vocab, int n_rollout,
                                  const SamplerConfig& sampler_cfg, std::uint64_t base_seed);

// Full-distribution log-prob of `token_id` for the given agent in the given
// state, computed exactly the way rollouts record it. Shared by the replay
// check and the GRPO loss.
double replay_logprob(const PolicyParams& params, const SceneState& state, int agent_index,
                      const std::vector<MapPolyline>& map, const FeatureConfig& fcfg,
                      int token_id);

// JSON dump: per rollout, per step, per agent pose/token/entropy/K/logprob.
void save_rollout_group(const RolloutGroup& group, const Scenario& scenario,
                        const std::string& path);

}  // namespace r1sim
