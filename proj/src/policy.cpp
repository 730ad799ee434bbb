#include "r1sim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "r1sim/errors.hpp"
#include "r1sim/rng.hpp"

namespace r1sim {

FeatureVector encode_features(const SceneState& state, int agent_index,
                              const std::vector<MapPolyline>& map, const FeatureConfig& config) {
  const AgentState& ego = state.agents.at(agent_index);
  const double c = std::cos(ego.pose.yaw);
  const double s = std::sin(ego.pose.yaw);
  const auto to_ego = [&](Vec2 p) -> Vec2 {
    const Vec2 d = p - ego.pose.position();
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  };
  const auto speed_of = [&](const AgentState& a) {
    return std::hypot(a.prev_delta.dx, a.prev_delta.dy) / config.dt;
  };

  FeatureVector f;
  f.reserve(config.dim());
  f.push_back(speed_of(ego));
  f.push_back(ego.prev_delta.dx);
  f.push_back(ego.prev_delta.dy);
  f.push_back(ego.prev_delta.dyaw);

  // Nearest neighbors by center distance, ties broken by lower agent_id.
  struct Cand {
    double dist;
    int id;
    int index;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    if (static_cast<int>(i) == agent_index) continue;
    const AgentState& a = state.agents[i];
    cands.push_back({norm(a.pose.position() - ego.pose.position()), a.agent_id,
                     static_cast<int>(i)});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
  });
  for (int k = 0; k < config.k_neighbors; ++k) {
    if (k < static_cast<int>(cands.size())) {
      const AgentState& nb = state.agents[cands[k].index];
      const Vec2 rel = to_ego(nb.pose.position());
      f.push_back(rel.x);
      f.push_back(rel.y);
      f.push_back(normalize_angle(nb.pose.yaw - ego.pose.yaw));
      f.push_back(speed_of(nb) - speed_of(ego));
      f.push_back(1.0);
    } else {
      f.insert(f.end(), {0.0, 0.0, 0.0, 0.0, 0.0});
    }
  }

  // Nearest lane-center points, ties broken by earlier polyline / point index.
  struct MapCand {
    double dist;
    std::size_t poly;
    std::size_t point;
    Vec2 p;
  };
  std::vector<MapCand> mcands;
  for (std::size_t pi = 0; pi < map.size(); ++pi) {
    if (map[pi].kind != PolylineKind::lane_center) continue;
    for (std::size_t qi = 0; qi < map[pi].points.size(); ++qi) {
      const Vec2 p = map[pi].points[qi];
      mcands.push_back({norm(p - ego.pose.position()), pi, qi, p});
    }
  }
  std::sort(mcands.begin(), mcands.end(), [](const MapCand& a, const MapCand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.poly != b.poly) return a.poly < b.poly;
    return a.point < b.point;
  });
  for (int k = 0; k < config.map_points; ++k) {
    if (k < static_cast<int>(mcands.size())) {
      const Vec2 rel = to_ego(mcands[k].p);
      f.push_back(rel.x);
      f.push_back(rel.y);
    } else {
      f.insert(f.end(), {0.0, 0.0});
    }
  }
  return f;
}

namespace {

// hidden = tanh(W1 f + b1)
std::vector<double> hidden_layer(const PolicyParams& p, const FeatureVector& f) {
  std::vector<double> h(p.hidden);
  const double* w1 = p.w1();
  const double* b1 = p.b1();
  for (int i = 0; i < p.hidden; ++i) {
    double acc = b1[i];
    const double* row = w1 + static_cast<std::size_t>(i) * p.in_dim;
    for (int j = 0; j < p.in_dim; ++j) acc += row[j] * f[j];
    h[i] = std::tanh(acc);
  }
  return h;
}

std::vector<double> output_layer(const PolicyParams& p, const std::vector<double>& h) {
  std::vector<double> logits(p.vocab);
  const double* w2 = p.w2();
  const double* b2 = p.b2();
  for (int k = 0; k < p.vocab; ++k) {
    double acc = b2[k];
    const double* row = w2 + static_cast<std::size_t>(k) * p.hidden;
    for (int i = 0; i < p.hidden; ++i) acc += row[i] * h[i];
    logits[k] = acc;
  }
  return logits;
}

}  // namespace

std::vector<double> forward(const PolicyParams& params, const FeatureVector& features) {
  if (static_cast<int>(features.size()) != params.in_dim) {
    throw ValidationError("forward: feature dim " + std::to_string(features.size()) +
                          " != param input dim " + std::to_string(params.in_dim));
  }
  return output_layer(params, hidden_layer(params, features));
}

TokenDistribution softmax_probs(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  TokenDistribution dist;
  dist.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dist.probs[i] = std::exp(logits[i] - m);
    sum += dist.probs[i];
  }
  for (double& p : dist.probs) p /= sum;
  return dist;
}

double entropy(const TokenDistribution& dist) {
  double h = 0.0;
  for (const double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double logprob(const PolicyParams& params, const FeatureVector& features, int token_id) {
  const std::vector<double> logits = forward(params, features);
  const double m = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (const double z : logits) lse += std::exp(z - m);
  return logits[token_id] - m - std::log(lse);
}

namespace {

std::vector<double> backprop(const PolicyParams& params, const FeatureVector& features,
                             const std::vector<double>& h, const std::vector<double>& dlogits) {
  std::vector<double> grad(params.flat.size(), 0.0);
  const int w1_off = 0;
  const int b1_off = params.hidden * params.in_dim;
  const int w2_off = b1_off + params.hidden;
  const int b2_off = w2_off + params.vocab * params.hidden;

  for (int k = 0; k < params.vocab; ++k) {
    double* row = grad.data() + w2_off + static_cast<std::size_t>(k) * params.hidden;
    for (int i = 0; i < params.hidden; ++i) row[i] = dlogits[k] * h[i];
    grad[b2_off + k] = dlogits[k];
  }

  // dh_i = sum_k dlogits_k * W2[k][i], then through tanh
  const double* w2 = params.w2();
  for (int i = 0; i < params.hidden; ++i) {
    double dh = 0.0;
    for (int k = 0; k < params.vocab; ++k) {
      dh += dlogits[k] * w2[static_cast<std::size_t>(k) * params.hidden + i];
    }
    const double dpre = dh * (1.0 - h[i] * h[i]);
    double* row = grad.data() + w1_off + static_cast<std::size_t>(i) * params.in_dim;
    for (int j = 0; j < params.in_dim; ++j) row[j] = dpre * features[j];
    grad[b1_off + i] = dpre;
  }
  return grad;
}

}  // namespace

std::vector<double> grad_from_dlogits(const PolicyParams& params, const FeatureVector& features,
                                      const std::vector<double>& dlogits) {
  return backprop(params, features, hidden_layer(params, features), dlogits);
}

ForwardCache forward_cache(const PolicyParams& params, const FeatureVector& features) {
  if (static_cast<int>(features.size()) != params.in_dim) {
    throw ValidationError("forward_cache: feature dim mismatch");
  }
  ForwardCache c;
  c.hidden = hidden_layer(params, features);
  c.logits = output_layer(params, c.hidden);
  c.dist = softmax_probs(c.logits);
  return c;
}

void accumulate_grad(const PolicyParams& params, const FeatureVector& features,
                     const ForwardCache& cache, const std::vector<double>& dlogits, double scale,
                     std::vector<double>& grad) {
  const int w1_off = 0;
  const int b1_off = params.hidden * params.in_dim;
  const int w2_off = b1_off + params.hidden;
  const int b2_off = w2_off + params.vocab * params.hidden;
  const std::vector<double>& h = cache.hidden;

  for (int k = 0; k < params.vocab; ++k) {
    const double dk = scale * dlogits[k];
    if (dk == 0.0) continue;
    double* row = grad.data() + w2_off + static_cast<std::size_t>(k) * params.hidden;
    for (int i = 0; i < params.hidden; ++i) row[i] += dk * h[i];
    grad[b2_off + k] += dk;
  }

  const double* w2 = params.w2();
  for (int i = 0; i < params.hidden; ++i) {
    double dh = 0.0;
    for (int k = 0; k < params.vocab; ++k) {
      dh += dlogits[k] * w2[static_cast<std::size_t>(k) * params.hidden + i];
    }
    const double dpre = scale * dh * (1.0 - h[i] * h[i]);
    if (dpre == 0.0) continue;
    double* row = grad.data() + w1_off + static_cast<std::size_t>(i) * params.in_dim;
    for (int j = 0; j < params.in_dim; ++j) row[j] += dpre * features[j];
    grad[b1_off + i] += dpre;
  }
}

LogProbGrad logprob_and_grad(const PolicyParams& params, const FeatureVector& features,
                             int token_id) {
  if (token_id < 0 || token_id >= params.vocab) {
    throw ValidationError("logprob_and_grad: token id out of range");
  }
  const std::vector<double> h = hidden_layer(params, features);
  const std::vector<double> logits = output_layer(params, h);
  const TokenDistribution dist = softmax_probs(logits);

  LogProbGrad out;
  // Same route as the sampler records, so replayed log-probs compare
  // bit-for-bit.
  out.logprob = std::log(dist.probs[token_id]);

  // d logpi / d logits_k = 1[k = token] - p_k
  std::vector<double> dlogits(params.vocab);
  for (int k = 0; k < params.vocab; ++k) {
    dlogits[k] = (k == token_id ? 1.0 : 0.0) - dist.probs[k];
  }
  out.grad = backprop(params, features, h, dlogits);
  return out;
}

PolicyParams init_params(std::uint64_t seed, int in_dim, int hidden, int vocab) {
  if (in_dim < 1 || hidden < 1 || vocab < 2) throw ValidationError("init_params: bad dims");
  PolicyParams p;
  p.in_dim = in_dim;
  p.hidden = hidden;
  p.vocab = vocab;
  p.seed = seed;
  p.flat.resize(p.count());
  SplitMix64 rng(hash_combine(seed, 0x706f6cULL));
  const double a1 = std::sqrt(6.0 / (in_dim + hidden));
  const double a2 = std::sqrt(6.0 / (hidden + vocab));
  std::size_t idx = 0;
  for (int i = 0; i < hidden * in_dim + hidden; ++i) p.flat[idx++] = rng.uniform(-a1, a1);
  for (int i = 0; i < vocab * hidden + vocab; ++i) p.flat[idx++] = rng.uniform(-a2, a2);
  return p;
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["arch"] = {params.in_dim, params.hidden, params.vocab};
  j["seed"] = params.seed;
  j["params"] = params.flat;
  std::ofstream out(path);
  if (!out) throw ValidationError("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  PolicyParams p;
  try {
    const auto arch = j.at("arch");
    p.in_dim = arch.at(0).get<int>();
    p.hidden = arch.at(1).get<int>();
    p.vocab = arch.at(2).get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.flat = j.at("params").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  if (static_cast<int>(p.flat.size()) != p.count()) {
    throw ValidationError("load_checkpoint: parameter count mismatch");
  }
  return p;
}

}  // namespace r1sim
