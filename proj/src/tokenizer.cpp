#include "r1sim/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "r1sim/errors.hpp"
#include "r1sim/rng.hpp"

namespace r1sim {

double delta_distance_sq(const MotionDelta& a, const MotionDelta& b, double yaw_weight) {
  const double dx = a.dx - b.dx;
  const double dy = a.dy - b.dy;
  const double dw = yaw_weight * (a.dyaw - b.dyaw);
  return dx * dx + dy * dy + dw * dw;
}

MotionDelta pose_delta(const Pose2D& from, const Pose2D& to) {
  const double c = std::cos(from.yaw);
  const double s = std::sin(from.yaw);
  const double wx = to.x - from.x;
  const double wy = to.y - from.y;
  MotionDelta d;
  d.dx = c * wx + s * wy;
  d.dy = -s * wx + c * wy;
  d.dyaw = normalize_angle(to.yaw - from.yaw);
  return d;
}

namespace {

MotionDelta clamp_segment(const MotionDelta& d, const TokenizerConfig& cfg) {
  MotionDelta out;
  out.dx = std::clamp(d.dx, -cfg.d_max, cfg.d_max);
  out.dy = std::clamp(d.dy, -cfg.d_max, cfg.d_max);
  out.dyaw = std::clamp(d.dyaw, -cfg.yaw_max, cfg.yaw_max);
  return out;
}

bool delta_equal(const MotionDelta& a, const MotionDelta& b) {
  return a.dx == b.dx && a.dy == b.dy && a.dyaw == b.dyaw;
}

bool delta_less(const MotionDelta& a, const MotionDelta& b) {
  if (a.dx != b.dx) return a.dx < b.dx;
  if (a.dy != b.dy) return a.dy < b.dy;
  return a.dyaw < b.dyaw;
}

}  // namespace

TokenVocabulary build_vocabulary(const std::vector<MotionDelta>& segments,
                                 const TokenizerConfig& config, std::uint64_t seed) {
  if (segments.empty()) throw ValidationError("build_vocabulary: no segments");
  if (config.vocab_size < 2) throw ValidationError("build_vocabulary: size must be >= 2");

  std::vector<MotionDelta> data(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) data[i] = clamp_segment(segments[i], config);

  std::vector<MotionDelta> distinct = data;
  std::sort(distinct.begin(), distinct.end(), delta_less);
  distinct.erase(std::unique(distinct.begin(), distinct.end(), delta_equal), distinct.end());
  const int k = config.vocab_size;
  if (static_cast<std::size_t>(k) > distinct.size()) {
    throw ValidationError("build_vocabulary: vocabulary size " + std::to_string(k) +
                          " exceeds " + std::to_string(distinct.size()) + " distinct segments");
  }

  // Seeded init: Fisher-Yates over the distinct values, take the first k.
  SplitMix64 rng(hash_combine(seed, 0x766f6361ULL));
  for (std::size_t i = distinct.size() - 1; i > 0; --i) {
    std::swap(distinct[i], distinct[rng.below(i + 1)]);
  }
  std::vector<MotionDelta> centroids(distinct.begin(), distinct.begin() + k);

  const double w = config.yaw_weight;
  std::vector<int> assign(data.size(), 0);
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      int best = 0;
      double best_d = delta_distance_sq(data[i], centroids[0], w);
      for (int c = 1; c < k; ++c) {
        const double d = delta_distance_sq(data[i], centroids[c], w);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    std::vector<MotionDelta> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      sums[assign[i]].dx += data[i].dx;
      sums[assign[i]].dy += data[i].dy;
      sums[assign[i]].dyaw += data[i].dyaw;
      ++counts[assign[i]];
    }
    double max_move_sq = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep old centroid
      MotionDelta next{sums[c].dx / counts[c], sums[c].dy / counts[c], sums[c].dyaw / counts[c]};
      max_move_sq = std::max(max_move_sq, delta_distance_sq(next, centroids[c], w));
      centroids[c] = next;
    }
    if (max_move_sq < config.tolerance * config.tolerance) break;
  }

  TokenVocabulary vocab;
  vocab.deltas = std::move(centroids);
  vocab.step_dt = config.step_dt;
  vocab.yaw_weight = config.yaw_weight;
  return vocab;
}

TokenId nearest_token(const MotionDelta& delta, const TokenVocabulary& vocab) {
  TokenId best = 0;
  double best_d = delta_distance_sq(delta, vocab.deltas[0], vocab.yaw_weight);
  for (int c = 1; c < vocab.size(); ++c) {
    const double d = delta_distance_sq(delta, vocab.deltas[c], vocab.yaw_weight);
    if (d < best_d) {  // ties keep the lower id
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<TokenId> tokenize(const std::vector<Pose2D>& trajectory, const TokenVocabulary& vocab) {
  if (trajectory.size() < 2) throw ValidationError("tokenize: trajectory needs >= 2 poses");
  std::vector<TokenId> out;
  out.reserve(trajectory.size() - 1);
  for (std::size_t i = 0; i + 1 < trajectory.size(); ++i) {
    out.push_back(nearest_token(pose_delta(trajectory[i], trajectory[i + 1]), vocab));
  }
  return out;
}

std::vector<Pose2D> detokenize(const Pose2D& start, const std::vector<TokenId>& tokens,
                               const TokenVocabulary& vocab) {
  std::vector<Pose2D> out;
  out.reserve(tokens.size() + 1);
  out.push_back(start);
  for (const TokenId id : tokens) {
    if (id < 0 || id >= vocab.size()) {
      throw ValidationError("detokenize: token id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(vocab.size()) + ")");
    }
    out.push_back(apply_delta(out.back(), vocab.deltas[id]));
  }
  return out;
}

void save_vocabulary(const TokenVocabulary& vocab, const std::string& path) {
  nlohmann::json j;
  j["version"] = vocab.version;
  j["step_dt"] = vocab.step_dt;
  j["yaw_weight"] = vocab.yaw_weight;
  auto& deltas = j["deltas"] = nlohmann::json::array();
  for (const MotionDelta& d : vocab.deltas) deltas.push_back({d.dx, d.dy, d.dyaw});
  std::ofstream out(path);
  if (!out) throw ValidationError("save_vocabulary: cannot open " + path);
  out << j.dump(2) << "\n";
}

TokenVocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_vocabulary: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_vocabulary: " + path + ": " + e.what());
  }
  TokenVocabulary vocab;
  try {
    vocab.version = j.at("version").get<int>();
    vocab.step_dt = j.at("step_dt").get<double>();
    vocab.yaw_weight = j.at("yaw_weight").get<double>();
    for (const auto& d : j.at("deltas")) {
      vocab.deltas.push_back({d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_vocabulary: " + path + ": " + e.what());
  }
  if (vocab.size() < 2) throw ValidationError("load_vocabulary: |V| must be >= 2");
  return vocab;
}

}  // namespace r1sim
