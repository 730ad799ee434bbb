#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r1sim/geometry.hpp"

namespace r1sim {

using TokenId = int;

struct TokenVocabulary {
  std::vector<MotionDelta> deltas;  // indexed by token id
  double step_dt = 0.1;
  double yaw_weight = 2.0;  // meters per radian in the clustering metric
  int version = 1;

  int size() const { return static_cast<int>(deltas.size()); }
};

struct TokenizerConfig {
  int vocab_size = 128;
  double yaw_weight = 2.0;
  double step_dt = 0.1;
  double d_max = 3.5;     // per-step position cap, meters
  double yaw_max = 0.3;   // per-step heading cap, radians
  int max_iterations = 100;
  double tolerance = 1e-6;
};

// Weighted squared distance in (dx, dy, w*dyaw) space.
double delta_distance_sq(const MotionDelta& a, const MotionDelta& b, double yaw_weight);

// Agent-frame delta taking `from` to `to`.
MotionDelta pose_delta(const Pose2D& from, const Pose2D& to);

// Lloyd's k-means over motion segments. Segments are clamped to the physical
// caps before clustering. Deterministic given the seed; throws
// ValidationError when size exceeds the number of distinct segments.
TokenVocabulary build_vocabulary(const std::vector<MotionDelta>& segments,
                                 const TokenizerConfig& config, std::uint64_t seed);

// Nearest vocabulary entry per consecutive pose pair; ties go to the lowest
// token id.
std::vector<TokenId> tokenize(const std::vector<Pose2D>& trajectory,
                              const TokenVocabulary& vocab);

TokenId nearest_token(const MotionDelta& delta, const TokenVocabulary& vocab);

// Folds apply_delta over the token sequence. Output length = tokens + 1,
// first element = start. Throws ValidationError on out-of-range ids.
std::vector<Pose2D> detokenize(const Pose2D& start, const std::vector<TokenId>& tokens,
                               const TokenVocabulary& vocab);

// Versioned JSON, bit-exact round trip.
void save_vocabulary(const TokenVocabulary& vocab, const std::string& path);
TokenVocabulary load_vocabulary(const std::string& path);

}  // namespace r1sim
