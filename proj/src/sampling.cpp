#include "r1sim/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "r1sim/errors.hpp"

namespace r1sim {

int adaptive_k(double entropy_nats, int k_min, int k_max) {
  if (entropy_nats < 0.0) throw ValidationError("adaptive_k: entropy must be >= 0");
  if (k_min < 1 || k_min > k_max) throw ValidationError("adaptive_k: need 1 <= k_min <= k_max");
  const double sigmoid = 1.0 / (1.0 + std::exp(-entropy_nats));
  const double k = k_min + (k_max - k_min) * sigmoid;
  const long long rounded = std::llround(k);  // half away from zero
  return static_cast<int>(std::clamp<long long>(rounded, 1, k_max));
}

Sample top_k_sample(const TokenDistribution& dist, int k, SplitMix64& rng) {
  const int n = static_cast<int>(dist.probs.size());
  if (k < 1 || k > n) throw ValidationError("top_k_sample: k out of range");

  // Indices of the k largest masses; stable order gives ties to the lower id.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist.probs[a] > dist.probs[b]; });
  order.resize(k);

  double mass = 0.0;
  for (const int id : order) mass += dist.probs[id];

  const double u = rng.uniform01() * mass;
  double acc = 0.0;
  int chosen = order.back();
  for (const int id : order) {
    acc += dist.probs[id];
    if (u < acc) {
      chosen = id;
      break;
    }
  }

  Sample s;
  s.token_id = chosen;
  s.logprob_full = std::log(dist.probs[chosen]);
  s.logprob_truncated = std::log(dist.probs[chosen] / mass);
  return s;
}

SampleRecord sample_action(const TokenDistribution& dist, double entropy_nats,
                           const SamplerConfig& config, SplitMix64& rng) {
  const int n = static_cast<int>(dist.probs.size());
  int k = 0;
  switch (config.mode) {
    case SamplerMode::fixed_topk:
      k = config.k_fixed;
      break;
    case SamplerMode::entropy_adaptive:
      k = adaptive_k(entropy_nats, config.k_min, config.k_max);
      break;
  }
  k = std::clamp(k, 1, n);
  const Sample s = top_k_sample(dist, k, rng);
  SampleRecord rec;
  rec.token_id = s.token_id;
  rec.k_used = k;
  rec.entropy = entropy_nats;
  rec.logprob_full = s.logprob_full;
  rec.logprob_truncated = s.logprob_truncated;
  return rec;
}

}  // namespace r1sim
