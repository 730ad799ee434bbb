#pragma once

#include "r1sim/policy.hpp"
#include "r1sim/rng.hpp"

namespace r1sim {

enum class SamplerMode { fixed_topk, entropy_adaptive };

struct SamplerConfig {
  SamplerMode mode = SamplerMode::entropy_adaptive;
  int k_fixed = 32;
  int k_min = 16;
  int k_max = 80;
};

// K = clamp(round(k_min + (k_max - k_min) * sigmoid(H)), 1, k_max), rounding
// half away from zero. Because H >= 0, K lives in the upper half of the
// [k_min, k_max] band.
int adaptive_k(double entropy_nats, int k_min, int k_max);

struct Sample {
  int token_id = 0;
  double logprob_truncated = 0.0;  // under the renormalized top-k distribution
  double logprob_full = 0.0;       // under the untruncated distribution
};

// Keeps the k highest-probability tokens (ties to the lower id), renormalizes
// and draws with the caller's generator.
Sample top_k_sample(const TokenDistribution& dist, int k, SplitMix64& rng);

struct SampleRecord {
  int token_id = 0;
  int k_used = 0;
  double entropy = 0.0;      // nats
  double logprob_full = 0.0; // feeds the importance ratio
  double logprob_truncated = 0.0;  // diagnostics only
};

SampleRecord sample_action(const TokenDistribution& dist, double entropy_nats,
                           const SamplerConfig& config, SplitMix64& rng);

}  // namespace r1sim
