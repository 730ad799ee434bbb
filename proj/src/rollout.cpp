#include "r1sim/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>
#include <omp.h>

#include "r1sim/errors.hpp"

namespace r1sim {

namespace {

FeatureConfig feature_config(const Scenario& scenario) {
  FeatureConfig cfg;
  cfg.dt = scenario.dt;
  return cfg;
}

}  // namespace

SceneState initial_state(const Scenario& scenario) {
  SceneState state;
  state.step = 0;
  const int h = scenario.history_len;
  for (const AgentTrack& tr : scenario.tracks) {
    AgentState a;
    a.agent_id = tr.agent_id;
    a.length = tr.length;
    a.width = tr.width;
    a.pose = tr.poses[h];
    if (h >= 1 && tr.valid[h] && tr.valid[h - 1]) {
      a.prev_delta = pose_delta(tr.poses[h - 1], tr.poses[h]);
    }
    state.agents.push_back(a);
  }
  std::sort(state.agents.begin(), state.agents.end(),
            [](const AgentState& x, const AgentState& y) { return x.agent_id < y.agent_id; });
  return state;
}

void step(SceneState& state, const Scenario& scenario, const PolicyParams& params,
          const TokenVocabulary& vocab, const SamplerConfig& sampler_cfg,
          std::vector<SplitMix64>& rngs, StepRecord& record) {
  const FeatureConfig fcfg = feature_config(scenario);
  const int n = static_cast<int>(state.agents.size());
  record.agents.resize(n);
  std::vector<MotionDelta> deltas(n);
  // All agents observe the pre-step state; poses are committed together below.
  for (int j = 0; j < n; ++j) {
    const FeatureVector f = encode_features(state, j, scenario.map, fcfg);
    const TokenDistribution dist = softmax_probs(forward(params, f));
    const double h = entropy(dist);
    record.agents[j] = sample_action(dist, h, sampler_cfg, rngs[j]);
    deltas[j] = vocab.deltas[record.agents[j].token_id];
  }
  for (int j = 0; j < n; ++j) {
    state.agents[j].pose = apply_delta(state.agents[j].pose, deltas[j]);
    state.agents[j].prev_delta = deltas[j];
  }
  ++state.step;
}

Rollout simulate(const Scenario& scenario, const PolicyParams& params,
                 const TokenVocabulary& vocab, const SamplerConfig& sampler_cfg,
                 std::uint64_t seed) {
  Rollout r;
  r.seed = seed;
  r.states.reserve(scenario.horizon + 1);
  r.records.reserve(scenario.horizon);
  SceneState state = initial_state(scenario);
  r.states.push_back(state);

  std::vector<SplitMix64> rngs;
  rngs.reserve(state.agents.size());
  for (const AgentState& a : state.agents) {
    rngs.emplace_back(stream_seed(seed, 0, static_cast<std::uint64_t>(a.agent_id)));
  }
  for (int t = 0; t < scenario.horizon; ++t) {
    StepRecord rec;
    step(state, scenario, params, vocab, sampler_cfg, rngs, rec);
    r.records.push_back(std::move(rec));
    r.states.push_back(state);
  }
  return r;
}

RolloutGroup rollout_group(const Scenario& scenario, const PolicyParams& params,
                           const TokenVocabulary& vocab, int n_rollout,
                           const SamplerConfig& sampler_cfg, std::uint64_t base_seed) {
  if (n_rollout < 2) throw ValidationError("rollout_group: n_rollout must be >= 2");
  RolloutGroup group;
  group.rollouts.resize(n_rollout);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_rollout; ++i) {
    group.rollouts[i] = simulate(scenario, params, vocab, sampler_cfg, base_seed + i);
  }
  return group;
}

RolloutGroup rollout_group_serial(const Scenario& scenario, const PolicyParams& params,
                                  const TokenVocabulary& vocab, int n_rollout,
                                  const SamplerConfig& sampler_cfg, std::uint64_t base_seed) {
  if (n_rollout < 2) throw ValidationError("rollout_group: n_rollout must be >= 2");
  RolloutGroup group;
  group.rollouts.resize(n_rollout);
  for (int i = 0; i < n_rollout; ++i) {
    group.rollouts[i] = simulate(scenario, params, vocab, sampler_cfg, base_seed + i);
  }
  return group;
}

double replay_logprob(const PolicyParams& params, const SceneState& state, int agent_index,
                      const std::vector<MapPolyline>& map, const FeatureConfig& fcfg,
                      int token_id) {
  const FeatureVector f = encode_features(state, agent_index, map, fcfg);
  const TokenDistribution dist = softmax_probs(forward(params, f));
  return std::log(dist.probs[token_id]);
}

void save_rollout_group(const RolloutGroup& group, const Scenario& scenario,
                        const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["n_rollout"] = group.rollouts.size();
  j["horizon"] = scenario.horizon;
  auto& rollouts = j["rollouts"] = nlohmann::json::array();
  for (const Rollout& r : group.rollouts) {
    nlohmann::json jr;
    jr["seed"] = r.seed;
    auto& steps = jr["steps"] = nlohmann::json::array();
    for (std::size_t t = 0; t < r.records.size(); ++t) {
      nlohmann::json js = nlohmann::json::array();
      const SceneState& state = r.states[t + 1];
      for (std::size_t a = 0; a < state.agents.size(); ++a) {
        const AgentState& ag = state.agents[a];
        const SampleRecord& rec = r.records[t].agents[a];
        js.push_back({{"agent_id", ag.agent_id},
                      {"pose", {ag.pose.x, ag.pose.y, ag.pose.yaw}},
                      {"token", rec.token_id},
                      {"entropy", rec.entropy},
                      {"k", rec.k_used},
                      {"logprob", rec.logprob_full}});
      }
      steps.push_back(std::move(js));
    }
    rollouts.push_back(std::move(jr));
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("save_rollout_group: cannot open " + path);
  out << j.dump() << "\n";
}

}  // namespace r1sim
