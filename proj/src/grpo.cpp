#include "r1sim/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <omp.h>

#include "r1sim/errors.hpp"

namespace r1sim {

AdvantageMode parse_advantage_mode(const std::string& name) {
  if (name == "mean_only") return AdvantageMode::mean_only;
  if (name == "standardized") return AdvantageMode::standardized;
  throw ValidationError("unknown advantage mode '" + name + "'");
}

AdvantageTensor advantages(const RewardTrace& rewards, AdvantageMode mode) {
  if (rewards.n_rollout < 2) throw ValidationError("advantages: group size must be >= 2");
  AdvantageTensor adv;
  adv.n_rollout = rewards.n_rollout;
  adv.horizon = rewards.horizon;
  adv.n_agents = rewards.n_agents;
  adv.a.assign(rewards.reward.size(), 0.0);
  adv.mask.assign(rewards.reward.size(), false);

  for (int t = 0; t < rewards.horizon; ++t) {
    for (int j = 0; j < rewards.n_agents; ++j) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < rewards.n_rollout; ++i) {
        const std::size_t ix = rewards.idx(i, t, j);
        if (rewards.gt_valid[ix]) {
          sum += rewards.reward[ix];
          ++count;
        }
      }
      if (count == 0) continue;
      const double mean = sum / count;
      double denom = 1.0;
      if (mode == AdvantageMode::standardized) {
        double var = 0.0;
        for (int i = 0; i < rewards.n_rollout; ++i) {
          const std::size_t ix = rewards.idx(i, t, j);
          if (rewards.gt_valid[ix]) {
            const double d = rewards.reward[ix] - mean;
            var += d * d;
          }
        }
        denom = std::sqrt(var / count) + 1e-8;
      }
      for (int i = 0; i < rewards.n_rollout; ++i) {
        const std::size_t ix = rewards.idx(i, t, j);
        if (rewards.gt_valid[ix]) {
          adv.a[ix] = (rewards.reward[ix] - mean) / denom;
          adv.mask[ix] = true;
        }
      }
    }
  }
  return adv;
}

double importance_ratio(double logp_theta, double logp_old) {
  return std::exp(logp_theta - logp_old);
}

double kl_term(double logp_ref, double logp_theta) {
  const double u = std::exp(logp_ref - logp_theta);
  return u - std::log(u) - 1.0;
}

LossAndGrad grpo_loss_and_grad(const RolloutGroup& group, const Scenario& scenario,
                               const RewardTrace& rewards, const PolicyParams& params_theta,
                               const PolicyParams& params_old, const PolicyParams& params_ref,
                               const GrpoConfig& config) {
  const AdvantageTensor adv = advantages(rewards, config.advantage_mode);
  const int n_rollout = adv.n_rollout;
  const int horizon = adv.horizon;
  const int n_agents = adv.n_agents;
  FeatureConfig fcfg;
  fcfg.dt = scenario.dt;
  if (config.exact_kl && params_theta.vocab > 256) {
    throw ValidationError("grpo_loss_and_grad: exact_kl supports |V| <= 256");
  }

  std::vector<double> partial_loss(n_rollout, 0.0);
  std::vector<double> partial_kl(n_rollout, 0.0);
  std::vector<std::size_t> partial_count(n_rollout, 0);
  std::vector<std::vector<double>> partial_grad(
      n_rollout, std::vector<double>(params_theta.flat.size(), 0.0));
  std::vector<std::string> replay_failure(n_rollout);

  const double inv_n = 1.0 / n_rollout;
  // When theta has not moved since the rollouts were generated (the on-policy
  // case in the training loop), the old-policy forward pass is redundant.
  const bool old_is_theta = &params_old == &params_theta || params_old.flat == params_theta.flat;

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_rollout; ++i) {
    const Rollout& r = group.rollouts[i];
    std::vector<double>& grad = partial_grad[i];
    std::vector<double> dlogits(params_theta.vocab);
    for (int t = 0; t < horizon && replay_failure[i].empty(); ++t) {
      const SceneState& state = r.states[t];
      for (int j = 0; j < n_agents; ++j) {
        const std::size_t ix = adv.idx(i, t, j);
        if (!adv.mask[ix]) continue;
        const SampleRecord& rec = r.records[t].agents[j];
        const FeatureVector f = encode_features(state, j, scenario.map, fcfg);

        const ForwardCache cache = forward_cache(params_theta, f);
        const double lp_theta = std::log(cache.dist.probs[rec.token_id]);

        const double lp_old =
            old_is_theta ? lp_theta
                         : std::log(softmax_probs(forward(params_old, f)).probs[rec.token_id]);
        if (std::abs(lp_old - rec.logprob_full) > 1e-9) {
          replay_failure[i] = "rollout " + std::to_string(i) + " step " + std::to_string(t) +
                              " agent " + std::to_string(j) + ": stored logprob " +
                              std::to_string(rec.logprob_full) + " replays to " +
                              std::to_string(lp_old);
          break;
        }

        const double rho = importance_ratio(lp_theta, rec.logprob_full);
        const double a = adv.a[ix];
        const double unclipped = rho * a;
        const double clipped =
            std::clamp(rho, 1.0 - config.eps_low, 1.0 + config.eps_high) * a;
        const double surrogate = std::min(unclipped, clipped);

        // Subgradient of min(rho*A, clip(rho)*A) w.r.t. logp_theta.
        double surr_coef = 0.0;
        if (unclipped <= clipped) {
          surr_coef = rho * a;
        } else if (rho >= 1.0 - config.eps_low && rho <= 1.0 + config.eps_high) {
          surr_coef = rho * a;
        }

        double kl = 0.0;
        double token_coef = -inv_n * surr_coef;
        if (config.beta_kl != 0.0) {
          if (config.exact_kl) {
            const TokenDistribution& p_theta = cache.dist;
            const TokenDistribution p_ref = softmax_probs(forward(params_ref, f));
            for (int c = 0; c < params_theta.vocab; ++c) {
              if (p_ref.probs[c] > 0.0 && p_theta.probs[c] > 0.0) {
                kl += p_ref.probs[c] * (std::log(p_ref.probs[c]) - std::log(p_theta.probs[c]));
              }
              dlogits[c] = p_theta.probs[c] - p_ref.probs[c];
            }
            accumulate_grad(params_theta, f, cache, dlogits, inv_n * config.beta_kl, grad);
          } else {
            const double lp_ref =
                std::log(softmax_probs(forward(params_ref, f)).probs[rec.token_id]);
            const double u = std::exp(lp_ref - lp_theta);
            kl = u - std::log(u) - 1.0;
            // d(u - ln u - 1)/d logp_theta = 1 - u
            token_coef += inv_n * config.beta_kl * (1.0 - u);
          }
        }

        partial_loss[i] += -inv_n * surrogate + inv_n * config.beta_kl * kl;
        partial_kl[i] += kl;
        ++partial_count[i];
        if (token_coef != 0.0) {
          // d logp / d logits = onehot(token) - p.
          for (int c = 0; c < params_theta.vocab; ++c) dlogits[c] = -cache.dist.probs[c];
          dlogits[rec.token_id] += 1.0;
          accumulate_grad(params_theta, f, cache, dlogits, token_coef, grad);
        }
      }
    }
  }

  for (const std::string& msg : replay_failure) {
    if (!msg.empty()) throw ConsistencyError("grpo_loss_and_grad: replay mismatch: " + msg);
  }

  // Ordered reduction keeps the result independent of the worker count.
  LossAndGrad out;
  out.grad.assign(params_theta.flat.size(), 0.0);
  double kl_sum = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < n_rollout; ++i) {
    out.loss += partial_loss[i];
    kl_sum += partial_kl[i];
    count += partial_count[i];
    for (std::size_t p = 0; p < out.grad.size(); ++p) out.grad[p] += partial_grad[i][p];
  }
  out.mean_kl = count > 0 ? kl_sum / count : 0.0;
  return out;
}

NtpDataset build_ntp_dataset(const std::vector<Scenario>& scenarios,
                             const TokenVocabulary& vocab) {
  NtpDataset ds;
  FeatureConfig fcfg;
  for (const Scenario& sc : scenarios) {
    fcfg.dt = sc.dt;
    const int n = sc.n_agents();
    const int last = sc.track_len() - 1;
    for (int t = 1; t < last; ++t) {
      // Scene state from ground truth at step t (prev delta from t-1 -> t).
      SceneState state;
      state.step = t;
      bool all_valid = true;
      for (const AgentTrack& tr : sc.tracks) {
        if (!(tr.valid[t - 1] && tr.valid[t])) {
          all_valid = false;
          break;
        }
        AgentState a;
        a.agent_id = tr.agent_id;
        a.length = tr.length;
        a.width = tr.width;
        a.pose = tr.poses[t];
        a.prev_delta = pose_delta(tr.poses[t - 1], tr.poses[t]);
        state.agents.push_back(a);
      }
      if (!all_valid) continue;
      std::sort(state.agents.begin(), state.agents.end(),
                [](const AgentState& x, const AgentState& y) { return x.agent_id < y.agent_id; });
      for (int j = 0; j < n; ++j) {
        const AgentTrack& tr = sc.tracks[j];
        if (!tr.valid[t + 1]) continue;
        const int target = nearest_token(pose_delta(tr.poses[t], tr.poses[t + 1]), vocab);
        ds.features.push_back(encode_features(state, j, sc.map, fcfg));
        ds.targets.push_back(target);
      }
    }
  }
  return ds;
}

NtpResult ntp_pretrain(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                       const PolicyParams& params_init, const NtpConfig& config) {
  const NtpDataset ds = build_ntp_dataset(scenarios, vocab);
  if (ds.targets.empty()) throw ValidationError("ntp_pretrain: no tokenizable GT transitions");

  NtpResult result;
  result.params = params_init;
  PolicyParams& params = result.params;
  const std::size_t n = ds.targets.size();
  const std::size_t batch = std::min<std::size_t>(std::max(1, config.batch_size), n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle_rng(hash_combine(config.seed, 0x6e7470ULL));
  auto reshuffle = [&] {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
  };
  reshuffle();

  std::vector<double> grad(params.flat.size());
  std::vector<double> dlogits(params.vocab);
  std::size_t pos = 0;
  for (int iter = 0; iter < config.steps; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (pos == n) {
        reshuffle();
        pos = 0;
      }
      const std::size_t s = order[pos++];
      const ForwardCache cache = forward_cache(params, ds.features[s]);
      loss -= std::log(cache.dist.probs[ds.targets[s]]);
      // Gradient of -logp: p - onehot(target).
      for (int c = 0; c < params.vocab; ++c) dlogits[c] = cache.dist.probs[c];
      dlogits[ds.targets[s]] -= 1.0;
      accumulate_grad(params, ds.features[s], cache, dlogits, 1.0, grad);
    }
    loss /= batch;
    result.loss_curve.push_back(loss);
    const double scale = config.learning_rate / batch;
    for (std::size_t p = 0; p < params.flat.size(); ++p) params.flat[p] -= scale * grad[p];
  }
  return result;
}

double ntp_accuracy(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                    const PolicyParams& params) {
  const NtpDataset ds = build_ntp_dataset(scenarios, vocab);
  if (ds.targets.empty()) throw ValidationError("ntp_accuracy: no tokenizable GT transitions");
  std::size_t hits = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : hits)
  for (std::size_t s = 0; s < ds.targets.size(); ++s) {
    const std::vector<double> logits = forward(params, ds.features[s]);
    const int pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (pred == ds.targets[s]) ++hits;
  }
  return static_cast<double>(hits) / ds.targets.size();
}

FinetuneResult finetune_grpo(const std::vector<Scenario>& scenarios, const TokenVocabulary& vocab,
                             const PolicyParams& params_init, const GrpoConfig& config) {
  if (scenarios.empty()) throw ValidationError("finetune_grpo: no scenarios");
  FinetuneResult result;
  result.params = params_init;
  PolicyParams& theta = result.params;
  const PolicyParams ref = params_init;  // frozen reference

  std::vector<std::size_t> order(scenarios.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle_rng(hash_combine(config.seed, 0x67727066ULL));
  auto reshuffle = [&] {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    }
  };
  reshuffle();

  const int w1b1 = theta.hidden * theta.in_dim + theta.hidden;
  std::size_t pos = 0;
  for (int iter = 0; iter < config.iterations; ++iter) {
    if (pos == order.size()) {
      reshuffle();
      pos = 0;
    }
    const Scenario& sc = scenarios[order[pos++]];
    const std::uint64_t group_seed = hash_combine(config.seed, 0x726f6cULL + iter);

    // pi_old is the current policy: rollouts are generated before the update.
    const RolloutGroup group =
        rollout_group(sc, theta, vocab, config.n_rollout, config.sampler, group_seed);
    const RewardTrace trace = compute_rewards(group, sc, config.reward);
    const LossAndGrad lg = grpo_loss_and_grad(group, sc, trace, theta, theta, ref, config);

    for (std::size_t p = config.freeze_first_layer ? w1b1 : 0; p < theta.flat.size(); ++p) {
      theta.flat[p] -= config.learning_rate * lg.grad[p];
    }

    IterStats st;
    st.iteration = iter;
    st.loss = lg.loss;
    st.mean_kl = lg.mean_kl;
    double reward_sum = 0.0;
    std::size_t reward_count = 0, collisions = 0;
    for (std::size_t ix = 0; ix < trace.reward.size(); ++ix) {
      if (trace.gt_valid[ix]) {
        reward_sum += trace.reward[ix];
        ++reward_count;
      }
      if (trace.collision[ix]) ++collisions;
    }
    st.mean_reward = reward_count ? reward_sum / reward_count : 0.0;
    st.collision_rate = trace.reward.empty()
                            ? 0.0
                            : static_cast<double>(collisions) / trace.reward.size();
    double ent_sum = 0.0;
    std::size_t ent_count = 0;
    for (const Rollout& r : group.rollouts) {
      for (const StepRecord& rec : r.records) {
        for (const SampleRecord& a : rec.agents) {
          ent_sum += a.entropy;
          ++ent_count;
        }
      }
    }
    st.mean_entropy = ent_count ? ent_sum / ent_count : 0.0;
    result.stats.push_back(st);
  }
  return result;
}

void save_stats_csv(const std::vector<IterStats>& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("save_stats_csv: cannot open " + path);
  out << "iteration,mean_reward,collision_rate,mean_entropy,mean_kl,loss\n";
  out.precision(17);
  for (const IterStats& s : stats) {
    out << s.iteration << ',' << s.mean_reward << ',' << s.collision_rate << ','
        << s.mean_entropy << ',' << s.mean_kl << ',' << s.loss << '\n';
  }
}

}  // namespace r1sim
