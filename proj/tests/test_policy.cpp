#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "r1sim/errors.hpp"
#include "r1sim/policy.hpp"
#include "r1sim/rng.hpp"

#include "oracles.hpp"
using oracles::finite_difference_grad;

using namespace r1sim;

namespace {

AgentState make_agent(int id, double x, double y, double yaw, MotionDelta prev = {0, 0, 0}) {
  AgentState a;
  a.agent_id = id;
  a.pose = {x, y, yaw};
  a.prev_delta = prev;
  return a;
}

FeatureVector random_features(SplitMix64& rng, int dim) {
  FeatureVector f(dim);
  for (double& v : f) v = rng.uniform(-1.0, 1.0);
  return f;
}

PolicyParams random_params(std::uint64_t seed, int in_dim, int hidden, int vocab) {
  PolicyParams p = init_params(seed, in_dim, hidden, vocab);
  SplitMix64 rng(seed ^ 0xabcdefULL);
  // Perturb biases too so nothing is exactly zero.
  for (double& v : p.flat) v += 0.05 * rng.normal();
  return p;
}

}  // namespace

TEST_CASE("encode_features zero-pads absent neighbors and map slots") {
  SceneState st;
  st.agents = {make_agent(0, 1.0, 2.0, 0.0, {0.8, 0.0, 0.0})};
  FeatureConfig cfg;
  const FeatureVector f = encode_features(st, 0, {}, cfg);
  REQUIRE(static_cast<int>(f.size()) == cfg.dim());
  CHECK(f[0] == doctest::Approx(8.0));  // speed = |prev dxdy| / dt
  CHECK(f[1] == 0.8);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 0.0);
  for (std::size_t i = 4; i < f.size(); ++i) CHECK(f[i] == 0.0);
}

TEST_CASE("encode_features axis-aligned hand case") {
  // Ego at origin facing +x; neighbor 3 m ahead, 4 m left, facing +y.
  SceneState st;
  st.agents = {make_agent(0, 0.0, 0.0, 0.0, {1.0, 0.0, 0.0}),
               make_agent(1, 3.0, 4.0, M_PI / 2, {0.5, 0.0, 0.0})};
  MapPolyline lane;
  lane.points = {{10.0, 0.0}, {20.0, 0.0}};
  FeatureConfig cfg;
  const FeatureVector f = encode_features(st, 0, {lane}, cfg);
  CHECK(f[4] == doctest::Approx(3.0));
  CHECK(f[5] == doctest::Approx(4.0));
  CHECK(f[6] == doctest::Approx(M_PI / 2));
  CHECK(f[7] == doctest::Approx(5.0 - 10.0));  // relative speed
  CHECK(f[8] == 1.0);                          // presence
  // First map slot is the nearer lane point (10, 0).
  const std::size_t m0 = 4 + 5 * cfg.k_neighbors;
  CHECK(f[m0] == doctest::Approx(10.0));
  CHECK(f[m0 + 1] == doctest::Approx(0.0));
  CHECK(f[m0 + 2] == doctest::Approx(20.0));
}

TEST_CASE("encode_features is invariant to rigid motion of the whole scene") {
  SceneState st;
  st.agents = {make_agent(0, 1.0, -2.0, 0.3, {0.9, 0.05, 0.01}),
               make_agent(1, 4.0, 1.0, -0.5, {0.7, -0.02, 0.0}),
               make_agent(2, -3.0, 0.5, 1.2, {0.4, 0.0, 0.02})};
  MapPolyline lane;
  lane.points = {{0.0, 0.0}, {5.0, 1.0}, {10.0, 2.0}};
  const FeatureVector f0 = encode_features(st, 0, {lane}, FeatureConfig{});

  // Rotate everything by phi and translate; agent-frame features are unchanged.
  const double phi = 0.77;
  const Vec2 shift{12.0, -4.0};
  const auto xf = [&](Pose2D p) -> Pose2D {
    const double c = std::cos(phi), s = std::sin(phi);
    return {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y,
            normalize_angle(p.yaw + phi)};
  };
  SceneState st2 = st;
  for (AgentState& a : st2.agents) a.pose = xf(a.pose);
  MapPolyline lane2 = lane;
  for (Vec2& p : lane2.points) {
    const double c = std::cos(phi), s = std::sin(phi);
    p = {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y};
  }
  const FeatureVector f1 = encode_features(st2, 0, {lane2}, FeatureConfig{});
  REQUIRE(f0.size() == f1.size());
  for (std::size_t i = 0; i < f0.size(); ++i) CHECK(f0[i] == doctest::Approx(f1[i]).epsilon(1e-9));
}

TEST_CASE("encode_features picks k nearest neighbors with ties to lower id") {
  SceneState st;
  st.agents = {make_agent(0, 0.0, 0.0, 0.0)};
  // 6 neighbors; two at the same distance 5.
  st.agents.push_back(make_agent(1, 5.0, 0.0, 0.0));
  st.agents.push_back(make_agent(2, 0.0, 5.0, 0.0));
  st.agents.push_back(make_agent(3, 2.0, 0.0, 0.0));
  st.agents.push_back(make_agent(4, 9.0, 0.0, 0.0));
  st.agents.push_back(make_agent(5, 3.0, 0.0, 0.0));
  st.agents.push_back(make_agent(6, 7.0, 0.0, 0.0));
  FeatureConfig cfg;  // k_neighbors = 4
  const FeatureVector f = encode_features(st, 0, {}, cfg);
  // Expected order: id3 (d=2), id5 (d=3), id1 (d=5, tie lower id), id2 (d=5).
  CHECK(f[4] == doctest::Approx(2.0));   // id3: rel x
  CHECK(f[9] == doctest::Approx(3.0));   // id5: rel x
  CHECK(f[14] == doctest::Approx(5.0));  // id1: rel x, rel y 0
  CHECK(f[15] == doctest::Approx(0.0));
  CHECK(f[19] == doctest::Approx(0.0));  // id2: rel x 0, rel y 5
  CHECK(f[20] == doctest::Approx(5.0));
}

TEST_CASE("forward with zero parameters gives zero logits") {
  PolicyParams p = init_params(1, 6, 8, 10);
  std::fill(p.flat.begin(), p.flat.end(), 0.0);
  SplitMix64 rng(3);
  const FeatureVector f = random_features(rng, 6);
  for (double v : forward(p, f)) CHECK(v == 0.0);
}

TEST_CASE("forward matches a direct matrix-algebra oracle") {
  const int in = 7, hid = 5, voc = 9;
  const PolicyParams p = random_params(11, in, hid, voc);
  SplitMix64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureVector f = random_features(rng, in);
    std::vector<double> h(hid);
    for (int i = 0; i < hid; ++i) {
      double acc = p.b1()[i];
      for (int j = 0; j < in; ++j) acc += p.w1()[i * in + j] * f[j];
      h[i] = std::tanh(acc);
    }
    std::vector<double> want(voc);
    for (int k = 0; k < voc; ++k) {
      double acc = p.b2()[k];
      for (int i = 0; i < hid; ++i) acc += p.w2()[k * hid + i] * h[i];
      want[k] = acc;
    }
    const std::vector<double> got = forward(p, f);
    REQUIRE(got.size() == want.size());
    for (int k = 0; k < voc; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects mismatched feature dimension") {
  const PolicyParams p = init_params(1, 6, 8, 10);
  CHECK_THROWS_AS(forward(p, FeatureVector(5, 0.0)), ValidationError);
}

TEST_CASE("softmax_probs properties") {
  SUBCASE("equal logits give the uniform distribution") {
    const TokenDistribution d = softmax_probs({2.5, 2.5, 2.5, 2.5});
    for (double v : d.probs) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("extreme logits do not overflow") {
    const TokenDistribution d = softmax_probs({1000.0, 0.0, -1000.0});
    CHECK(d.probs[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(d.probs[1]));
    CHECK(std::isfinite(d.probs[2]));
  }
  SUBCASE("shift invariance and exact normalization") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> logits(16);
      for (double& v : logits) v = rng.uniform(-5.0, 5.0);
      const TokenDistribution a = softmax_probs(logits);
      for (double& v : logits) v += 123.0;
      const TokenDistribution b = softmax_probs(logits);
      double sum = 0.0;
      for (std::size_t k = 0; k < a.probs.size(); ++k) {
        CHECK(a.probs[k] == doctest::Approx(b.probs[k]).epsilon(1e-12));
        sum += a.probs[k];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("entropy values and bounds") {
  CHECK(entropy(TokenDistribution{{1.0, 0.0, 0.0}}) == 0.0);
  const int n = 128;
  CHECK(entropy(TokenDistribution{std::vector<double>(n, 1.0 / n)}) ==
        doctest::Approx(std::log(128.0)).epsilon(1e-12));
  // Hand case: H(0.7, 0.2, 0.1) = -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1).
  const double want = -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
  CHECK(entropy(TokenDistribution{{0.7, 0.2, 0.1}}) == doctest::Approx(want).epsilon(1e-12));
  SplitMix64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(32);
    double sum = 0.0;
    for (double& v : p) sum += (v = rng.uniform01() + 1e-6);
    for (double& v : p) v /= sum;
    const double h = entropy(TokenDistribution{p});
    CHECK(h >= 0.0);
    CHECK(h <= std::log(32.0) + 1e-12);
  }
}

TEST_CASE("logprob_and_grad closed form with zero second layer") {
  // With W2 = 0, b2 = 0: logits are all zero, p uniform, logp = -ln V,
  // and d logp / d b2 = onehot - 1/V while W1/b1 receive no gradient.
  const int in = 4, hid = 3, voc = 5;
  PolicyParams p = random_params(21, in, hid, voc);
  std::fill(p.w2(), p.w2() + voc * hid, 0.0);
  std::fill(p.b2(), p.b2() + voc, 0.0);
  SplitMix64 rng(22);
  const FeatureVector f = random_features(rng, in);
  const LogProbGrad lpg = logprob_and_grad(p, f, 2);
  CHECK(lpg.logprob == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
  const int w1b1 = hid * in + hid;
  for (int i = 0; i < w1b1; ++i) CHECK(lpg.grad[i] == doctest::Approx(0.0).epsilon(1e-15));
  const int b2_off = w1b1 + voc * hid;
  for (int k = 0; k < voc; ++k) {
    const double want = (k == 2 ? 1.0 : 0.0) - 0.2;
    CHECK(lpg.grad[b2_off + k] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("score-function identity: expected gradient of logprob is zero") {
  const int in = 6, hid = 5, voc = 8;
  const PolicyParams p = random_params(31, in, hid, voc);
  SplitMix64 rng(32);
  const FeatureVector f = random_features(rng, in);
  const TokenDistribution dist = softmax_probs(forward(p, f));
  std::vector<double> acc(p.flat.size(), 0.0);
  for (int k = 0; k < voc; ++k) {
    const LogProbGrad lpg = logprob_and_grad(p, f, k);
    for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += dist.probs[k] * lpg.grad[q];
  }
  for (double v : acc) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("logprob gradient matches central finite differences") {
  const int in = 5, hid = 4, voc = 6;
  SplitMix64 rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const PolicyParams p = random_params(100 + trial, in, hid, voc);
    const FeatureVector f = random_features(rng, in);
    const int token = static_cast<int>(rng.below(voc));
    const LogProbGrad lpg = logprob_and_grad(p, f, token);
    const auto eval = [&](const std::vector<double>& flat) {
      PolicyParams q = p;
      q.flat = flat;
      return logprob(q, f, token);
    };
    const std::vector<double> fd = finite_difference_grad(eval, p.flat, 1e-5);
    for (std::size_t q = 0; q < fd.size(); ++q) {
      const double scale = std::max({std::abs(fd[q]), std::abs(lpg.grad[q]), 1e-6});
      CHECK(std::abs(fd[q] - lpg.grad[q]) / scale < 1e-4);
    }
  }
}

TEST_CASE("forward_cache and accumulate_grad agree with the reference path") {
  const int in = 6, hid = 5, voc = 7;
  const PolicyParams p = random_params(51, in, hid, voc);
  SplitMix64 rng(52);
  const FeatureVector f = random_features(rng, in);

  const ForwardCache cache = forward_cache(p, f);
  const std::vector<double> logits = forward(p, f);
  for (int k = 0; k < voc; ++k) CHECK(cache.logits[k] == logits[k]);

  std::vector<double> dlogits(voc);
  for (double& v : dlogits) v = rng.uniform(-1.0, 1.0);
  const std::vector<double> ref = grad_from_dlogits(p, f, dlogits);
  std::vector<double> acc(p.flat.size(), 0.5);
  accumulate_grad(p, f, cache, dlogits, 2.0, acc);
  for (std::size_t q = 0; q < acc.size(); ++q) {
    CHECK(acc[q] == doctest::Approx(0.5 + 2.0 * ref[q]).epsilon(1e-12));
  }
}

TEST_CASE("init_params is deterministic and Xavier-bounded") {
  const PolicyParams a = init_params(9, 40, 64, 128);
  const PolicyParams b = init_params(9, 40, 64, 128);
  const PolicyParams c = init_params(10, 40, 64, 128);
  REQUIRE(a.flat.size() == static_cast<std::size_t>(a.count()));
  CHECK(a.flat == b.flat);
  CHECK(a.flat != c.flat);

  const double a1 = std::sqrt(6.0 / (40 + 64));
  const double a2 = std::sqrt(6.0 / (64 + 128));
  const int w1n = 64 * 40;
  double sum = 0.0;
  for (int i = 0; i < w1n; ++i) {
    CHECK(std::abs(a.flat[i]) <= a1);
    sum += a.flat[i];
  }
  // Mean of W1 should be near zero (3 sigma of uniform mean).
  CHECK(std::abs(sum / w1n) < 3.0 * a1 / std::sqrt(3.0 * w1n));
  for (int i = 0; i < 64; ++i) CHECK(std::abs(a.b1()[i]) <= a1);
  const double* w2 = a.w2();
  for (int i = 0; i < 128 * 64; ++i) CHECK(std::abs(w2[i]) <= a2);
  for (int i = 0; i < 128; ++i) CHECK(std::abs(a.b2()[i]) <= a2);
}

TEST_CASE("checkpoint JSON round trip is bit-exact") {
  const PolicyParams p = random_params(61, 12, 10, 14);
  const std::string path = "test_policy_ckpt.json";
  save_checkpoint(p, path);
  const PolicyParams back = load_checkpoint(path);
  CHECK(back.in_dim == p.in_dim);
  CHECK(back.hidden == p.hidden);
  CHECK(back.vocab == p.vocab);
  CHECK(back.seed == p.seed);
  CHECK(back.flat == p.flat);

  const std::string path2 = "test_policy_ckpt2.json";
  save_checkpoint(back, path2);
  std::ifstream f1(path), f2(path2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::remove(path.c_str());
  std::remove(path2.c_str());

  CHECK_THROWS_AS(load_checkpoint("no_such_ckpt.json"), ParseError);
}
