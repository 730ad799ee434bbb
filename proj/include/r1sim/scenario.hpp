#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r1sim/geometry.hpp"

namespace r1sim {

enum class PolylineKind { lane_center, road_edge };

struct MapPolyline {
  std::vector<Vec2> points;  // >= 2 points, consecutive points distinct
  PolylineKind kind = PolylineKind::lane_center;
};

struct AgentTrack {
  int agent_id = 0;
  double length = 4.5;  // meters, along heading
  double width = 1.9;
  std::vector<Pose2D> poses;  // history_len + horizon + 1 entries
  std::vector<bool> valid;    // same length; valid[0] must be true
};

struct Scenario {
  int version = 1;
  double dt = 0.1;
  int history_len = 11;
  int horizon = 80;
  std::vector<MapPolyline> map;
  std::vector<AgentTrack> tracks;

  int n_agents() const { return static_cast<int>(tracks.size()); }
  int track_len() const { return history_len + horizon + 1; }
};

enum class ScenarioTemplate { straight, merge, unprotected_left };

// Throws ValidationError naming the first violated invariant.
void validate_scenario(const Scenario& scenario);

// JSON round trip is lossless (floats bit-exact).
void save_scenario(const Scenario& scenario, const std::string& path);
Scenario load_scenario(const std::string& path);

// Deterministic synthetic scenario. Ground-truth tracks follow constant-speed
// lane paths with seeded speed/offset jitter. The unprotected_left template
// produces GT tracks that conflict in time for at least one agent pair when
// seed % 4 == 0 (the collision-prone evaluation pool).
Scenario generate_synthetic(ScenarioTemplate tmpl, int n_agents, std::uint64_t seed,
                            int history_len = 11, int horizon = 80, double dt = 0.1);

ScenarioTemplate parse_template(const std::string& name);

// All consecutive valid-pose agent-frame deltas from all tracks, feeding
// vocabulary construction. Gaps in the validity mask are skipped.
std::vector<MotionDelta> extract_segments(const std::vector<Scenario>& scenarios);

}  // namespace r1sim
