#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "r1sim/errors.hpp"
#include "r1sim/tokenizer.hpp"
#include "oracles.hpp"

using namespace r1sim;

namespace {

TokenizerConfig small_config(int size) {
  TokenizerConfig cfg;
  cfg.vocab_size = size;
  return cfg;
}

// Lloyd's iteration run to convergence, independent implementation.
std::vector<MotionDelta> lloyd_oracle(const std::vector<MotionDelta>& data,
                                      std::vector<MotionDelta> centroids, double w) {
  for (int iter = 0; iter < 10000; ++iter) {
    std::vector<MotionDelta> sums(centroids.size());
    std::vector<int> counts(centroids.size(), 0);
    for (const MotionDelta& d : data) {
      int best = 0;
      double best_dist = delta_distance_sq(d, centroids[0], w);
      for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double dist = delta_distance_sq(d, centroids[c], w);
        if (dist < best_dist) {
          best_dist = dist;
          best = static_cast<int>(c);
        }
      }
      sums[best].dx += d.dx;
      sums[best].dy += d.dy;
      sums[best].dyaw += d.dyaw;
      ++counts[best];
    }
    double move = 0.0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] == 0) continue;
      MotionDelta next{sums[c].dx / counts[c], sums[c].dy / counts[c], sums[c].dyaw / counts[c]};
      move = std::max(move, delta_distance_sq(next, centroids[c], w));
      centroids[c] = next;
    }
    if (move < 1e-24) break;
  }
  return centroids;
}

}  // namespace

TEST_CASE("build_vocabulary separates two point clusters") {
  std::vector<MotionDelta> segments;
  for (int i = 0; i < 50; ++i) segments.push_back({1.0, 0.0, 0.0});
  for (int i = 0; i < 50; ++i) segments.push_back({0.0, 0.0, 0.0});
  const TokenVocabulary vocab = build_vocabulary(segments, small_config(2), 42);
  REQUIRE(vocab.size() == 2);
  const bool has_one = (vocab.deltas[0].dx == 1.0) || (vocab.deltas[1].dx == 1.0);
  const bool has_zero = (vocab.deltas[0].dx == 0.0) || (vocab.deltas[1].dx == 0.0);
  CHECK(has_one);
  CHECK(has_zero);
}

TEST_CASE("build_vocabulary rejects degenerate input") {
  std::vector<MotionDelta> segments(100, MotionDelta{0.5, 0.0, 0.0});
  CHECK_THROWS_AS(build_vocabulary(segments, small_config(2), 0), ValidationError);
}

TEST_CASE("build_vocabulary recovers Gaussian cluster means") {
  SplitMix64 rng(7);
  // kept well inside the physical caps so clamping never fires
  const std::vector<MotionDelta> means = {
      {2.0, 0.0, 0.0}, {0.5, 0.3, 0.1}, {-0.5, -0.3, -0.1}, {3.0, 1.0, 0.05}};
  const double sigma = 0.02;
  std::vector<MotionDelta> segments;
  for (int i = 0; i < 1000; ++i) {
    const MotionDelta& m = means[i % 4];
    segments.push_back(
        {m.dx + sigma * rng.normal(), m.dy + sigma * rng.normal(), m.dyaw + sigma * rng.normal()});
  }
  const TokenVocabulary vocab = build_vocabulary(segments, small_config(4), 3);
  // every true mean has a centroid within 3*sigma/sqrt(n_cluster)
  const double tol = 3.0 * sigma / std::sqrt(250.0) + 1e-6;
  for (const MotionDelta& m : means) {
    double best = 1e9;
    for (const MotionDelta& c : vocab.deltas) {
      best = std::min(best, std::sqrt(delta_distance_sq(m, c, 0.0)));
    }
    CHECK(best < 10 * tol);  // kmeans centroid of the assigned cluster
  }
  // matches an independent Lloyd's run from the same converged state
  const std::vector<MotionDelta> oracle = lloyd_oracle(segments, vocab.deltas, vocab.yaw_weight);
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(oracle[c].dx - vocab.deltas[c].dx) < 1e-5);
    CHECK(std::abs(oracle[c].dy - vocab.deltas[c].dy) < 1e-5);
    CHECK(std::abs(oracle[c].dyaw - vocab.deltas[c].dyaw) < 1e-5);
  }
}

TEST_CASE("build_vocabulary is deterministic") {
  SplitMix64 rng(12);
  std::vector<MotionDelta> segments;
  for (int i = 0; i < 500; ++i) {
    segments.push_back({rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-0.2, 0.2)});
  }
  const TokenVocabulary a = build_vocabulary(segments, small_config(16), 9);
  const TokenVocabulary b = build_vocabulary(segments, small_config(16), 9);
  REQUIRE(a.size() == b.size());
  for (int c = 0; c < a.size(); ++c) {
    CHECK(a.deltas[c].dx == b.deltas[c].dx);
    CHECK(a.deltas[c].dy == b.deltas[c].dy);
    CHECK(a.deltas[c].dyaw == b.deltas[c].dyaw);
  }
}

TEST_CASE("tokenize: exact centroid match and tie-break") {
  TokenVocabulary vocab;
  vocab.deltas = {{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}, {2.0, 0.0, 0.0},
                  {1.0, 0.0, 0.0}, {0.3, 0.3, 0.0}, {1.5, 0.0, 0.0}};
  // straight trajectory, per-step delta exactly (1,0,0) == id 3
  std::vector<Pose2D> straight;
  for (int i = 0; i <= 5; ++i) straight.push_back({static_cast<double>(i), 0.0, 0.0});
  for (const TokenId id : tokenize(straight, vocab)) CHECK(id == 3);

  // delta (1.0,0,0) equidistant between ids 1 (0.5) and 5 (1.5) -> lower id wins
  TokenVocabulary tie_vocab;
  tie_vocab.deltas = {{9.0, 9.0, 0.0}, {0.5, 0.0, 0.0}, {9.0, -9.0, 0.0},
                      {-9.0, 0.0, 0.0}, {0.0, 9.0, 0.0}, {1.5, 0.0, 0.0}};
  const std::vector<Pose2D> two = {{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  CHECK(tokenize(two, tie_vocab) == std::vector<TokenId>{1});
}

TEST_CASE("tokenize matches brute-force nearest centroid on random input") {
  SplitMix64 rng(31);
  TokenVocabulary vocab;
  for (int i = 0; i < 16; ++i) {
    vocab.deltas.push_back({rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)});
  }
  std::vector<Pose2D> traj = {{0.0, 0.0, 0.0}};
  for (int i = 0; i < 19; ++i) {
    traj.push_back(apply_delta(traj.back(),
                               {rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)}));
  }
  const std::vector<TokenId> tokens = tokenize(traj, vocab);
  REQUIRE(tokens.size() == traj.size() - 1);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const MotionDelta d = pose_delta(traj[k], traj[k + 1]);
    // no other entry strictly closer
    const double chosen = delta_distance_sq(d, vocab.deltas[tokens[k]], vocab.yaw_weight);
    for (int c = 0; c < vocab.size(); ++c) {
      CHECK(delta_distance_sq(d, vocab.deltas[c], vocab.yaw_weight) >= chosen);
    }
  }
}

TEST_CASE("detokenize folds apply_delta") {
  TokenVocabulary vocab;
  vocab.deltas = {{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};

  CHECK(detokenize({0.0, 0.0, 0.0}, {}, vocab).size() == 1);

  const auto poses = detokenize({0.0, 0.0, 0.0}, {1, 1, 1}, vocab);
  REQUIRE(poses.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(poses[i].x == doctest::Approx(i));

  CHECK_THROWS_AS(detokenize({0.0, 0.0, 0.0}, {5}, vocab), ValidationError);

  // random sequence equals step-by-step oracle
  SplitMix64 rng(8);
  TokenVocabulary rv;
  for (int i = 0; i < 8; ++i) {
    rv.deltas.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)});
  }
  std::vector<TokenId> seq;
  for (int i = 0; i < 30; ++i) seq.push_back(static_cast<TokenId>(rng.below(8)));
  const auto out = detokenize({1.0, 2.0, 0.5}, seq, rv);
  Pose2D p{1.0, 2.0, 0.5};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    p = apply_delta(p, rv.deltas[seq[i]]);
    CHECK(out[i + 1].x == p.x);
    CHECK(out[i + 1].y == p.y);
    CHECK(out[i + 1].yaw == p.yaw);
  }
}

TEST_CASE("reconstruction error bounded by the quantization radius") {
  SplitMix64 rng(77);
  std::vector<MotionDelta> train;
  for (int i = 0; i < 2000; ++i) {
    train.push_back({rng.uniform(0.0, 2.0), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)});
  }
  const TokenVocabulary vocab = build_vocabulary(train, small_config(32), 5);
  double radius = 0.0;
  for (const MotionDelta& d : train) {
    radius = std::max(
        radius, std::sqrt(delta_distance_sq(d, vocab.deltas[nearest_token(d, vocab)],
                                            vocab.yaw_weight)));
  }
  // held-out trajectory from the same distribution
  std::vector<Pose2D> traj = {{0.0, 0.0, 0.0}};
  for (int i = 0; i < 40; ++i) {
    traj.push_back(apply_delta(
        traj.back(), {rng.uniform(0.0, 2.0), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)}));
  }
  const std::vector<TokenId> tokens = tokenize(traj, vocab);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const MotionDelta d = pose_delta(traj[k], traj[k + 1]);
    const double err =
        std::sqrt(delta_distance_sq(d, vocab.deltas[tokens[k]], vocab.yaw_weight));
    CHECK(err <= radius + 1e-9);
  }
}

TEST_CASE("vocabulary JSON round trip is bit-exact") {
  SplitMix64 rng(19);
  TokenVocabulary vocab;
  for (int i = 0; i < 16; ++i) {
    vocab.deltas.push_back({rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)});
  }
  const auto path = std::filesystem::temp_directory_path() / "r1sim_vocab_test.json";
  save_vocabulary(vocab, path.string());
  const TokenVocabulary loaded = load_vocabulary(path.string());
  REQUIRE(loaded.size() == vocab.size());
  for (int c = 0; c < vocab.size(); ++c) {
    CHECK(loaded.deltas[c].dx == vocab.deltas[c].dx);
    CHECK(loaded.deltas[c].dy == vocab.deltas[c].dy);
    CHECK(loaded.deltas[c].dyaw == vocab.deltas[c].dyaw);
  }
  CHECK(loaded.step_dt == vocab.step_dt);
  CHECK(loaded.yaw_weight == vocab.yaw_weight);

  // re-serialization reproduces the file byte for byte
  const auto path2 = std::filesystem::temp_directory_path() / "r1sim_vocab_test2.json";
  save_vocabulary(loaded, path2.string());
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}
