#include "r1sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "r1sim/errors.hpp"
#include "r1sim/rng.hpp"
#include "r1sim/tokenizer.hpp"

namespace r1sim {

void validate_scenario(const Scenario& s) {
  if (s.dt <= 0.0) throw ValidationError("scenario: dt must be > 0");
  if (s.horizon < 1) throw ValidationError("scenario: horizon must be >= 1");
  if (s.history_len < 1) throw ValidationError("scenario: history_len must be >= 1");
  for (std::size_t i = 0; i < s.map.size(); ++i) {
    const MapPolyline& pl = s.map[i];
    if (pl.points.size() < 2) {
      throw ValidationError("scenario: map polyline " + std::to_string(i) + " has < 2 points");
    }
    for (std::size_t j = 0; j + 1 < pl.points.size(); ++j) {
      if (pl.points[j].x == pl.points[j + 1].x && pl.points[j].y == pl.points[j + 1].y) {
        throw ValidationError("scenario: map polyline " + std::to_string(i) +
                              " repeats point " + std::to_string(j));
      }
    }
  }
  std::set<int> ids;
  for (const AgentTrack& tr : s.tracks) {
    if (!ids.insert(tr.agent_id).second) {
      throw ValidationError("scenario: duplicate agent_id " + std::to_string(tr.agent_id));
    }
    if (tr.length <= 0.0 || tr.width <= 0.0) {
      throw ValidationError("scenario: agent " + std::to_string(tr.agent_id) +
                            " has non-positive box dims");
    }
    if (tr.poses.size() != tr.valid.size()) {
      throw ValidationError("scenario: agent " + std::to_string(tr.agent_id) +
                            " poses/valid length mismatch");
    }
    if (static_cast<int>(tr.poses.size()) != s.track_len()) {
      throw ValidationError("scenario: agent " + std::to_string(tr.agent_id) + " track length " +
                            std::to_string(tr.poses.size()) + " != history_len + horizon + 1 = " +
                            std::to_string(s.track_len()));
    }
    if (tr.valid.empty() || !tr.valid[0]) {
      throw ValidationError("scenario: agent " + std::to_string(tr.agent_id) +
                            " must be valid at step 0");
    }
  }
}

namespace {

std::string kind_name(PolylineKind k) {
  return k == PolylineKind::lane_center ? "lane_center" : "road_edge";
}

PolylineKind parse_kind(const std::string& s) {
  if (s == "lane_center") return PolylineKind::lane_center;
  if (s == "road_edge") return PolylineKind::road_edge;
  throw ParseError("scenario: unknown polyline kind '" + s + "'");
}

}  // namespace

void save_scenario(const Scenario& s, const std::string& path) {
  nlohmann::json j;
  j["version"] = s.version;
  j["dt"] = s.dt;
  j["history_len"] = s.history_len;
  j["horizon"] = s.horizon;
  auto& map = j["map"] = nlohmann::json::array();
  for (const MapPolyline& pl : s.map) {
    nlohmann::json jp;
    jp["kind"] = kind_name(pl.kind);
    auto& pts = jp["points"] = nlohmann::json::array();
    for (const Vec2& p : pl.points) pts.push_back({p.x, p.y});
    map.push_back(std::move(jp));
  }
  auto& tracks = j["tracks"] = nlohmann::json::array();
  for (const AgentTrack& tr : s.tracks) {
    nlohmann::json jt;
    jt["agent_id"] = tr.agent_id;
    jt["length"] = tr.length;
    jt["width"] = tr.width;
    auto& poses = jt["poses"] = nlohmann::json::array();
    for (const Pose2D& p : tr.poses) poses.push_back({p.x, p.y, p.yaw});
    jt["valid"] = tr.valid;
    tracks.push_back(std::move(jt));
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("save_scenario: cannot open " + path);
  out << j.dump(2) << "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_scenario: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_scenario: " + path + ": " + e.what());
  }
  Scenario s;
  try {
    s.version = j.at("version").get<int>();
    s.dt = j.at("dt").get<double>();
    s.history_len = j.at("history_len").get<int>();
    s.horizon = j.at("horizon").get<int>();
    for (const auto& jp : j.at("map")) {
      MapPolyline pl;
      pl.kind = parse_kind(jp.at("kind").get<std::string>());
      for (const auto& pt : jp.at("points")) {
        pl.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
      }
      s.map.push_back(std::move(pl));
    }
    for (const auto& jt : j.at("tracks")) {
      AgentTrack tr;
      tr.agent_id = jt.at("agent_id").get<int>();
      tr.length = jt.at("length").get<double>();
      tr.width = jt.at("width").get<double>();
      for (const auto& p : jt.at("poses")) {
        tr.poses.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      }
      tr.valid = jt.at("valid").get<std::vector<bool>>();
      s.tracks.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_scenario: " + path + ": " + e.what());
  }
  validate_scenario(s);
  return s;
}

namespace {

constexpr double kLaneWidth = 3.5;

// Arc-length path through waypoints; positions outside [0, total] extrapolate
// along the end segments.
struct Path {
  std::vector<Vec2> pts;
  std::vector<double> cum;  // cumulative length, cum[0] = 0

  explicit Path(std::vector<Vec2> waypoints) : pts(std::move(waypoints)) {
    cum.resize(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + norm(pts[i] - pts[i - 1]);
  }

  double total() const { return cum.back(); }

  Pose2D at(double s) const {
    std::size_t seg = 0;
    if (s >= cum.back()) {
      seg = pts.size() - 2;
    } else if (s > 0.0) {
      seg = std::upper_bound(cum.begin(), cum.end(), s) - cum.begin() - 1;
      seg = std::min(seg, pts.size() - 2);
    }
    const Vec2 a = pts[seg];
    const Vec2 b = pts[seg + 1];
    const double len = norm(b - a);
    const double u = (s - cum[seg]) / len;
    const Vec2 p = a + u * (b - a);
    return {p.x, p.y, std::atan2(b.y - a.y, b.x - a.x)};
  }

  // Arc length of the point on the path closest to q (sampled per segment).
  double project(Vec2 q) const {
    double best_s = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Vec2 a = pts[i];
      const Vec2 d = pts[i + 1] - a;
      const double len2 = dot(d, d);
      double u = len2 > 0.0 ? std::clamp(dot(q - a, d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 p = a + u * d;
      const double dist = norm(q - p);
      if (dist < best_d) {
        best_d = dist;
        best_s = cum[i] + u * std::sqrt(len2);
      }
    }
    return best_s;
  }
};

std::vector<Vec2> straight_waypoints(double y, double x0, double x1) {
  std::vector<Vec2> pts;
  for (double x = x0; x <= x1 + 1e-9; x += 5.0) pts.push_back({x, y});
  return pts;
}

// Westbound approach on the oncoming lane, left turn through the intersection,
// exit southbound. Crosses the eastbound lane (y = 0) near x = turn_x.
std::vector<Vec2> left_turn_waypoints(double turn_x, double radius) {
  std::vector<Vec2> pts;
  const double entry_x = turn_x + radius;
  for (double x = entry_x + 60.0; x > entry_x + 1e-9; x -= 5.0) pts.push_back({x, kLaneWidth});
  // quarter arc, heading -x to heading -y, center (entry_x, kLaneWidth - radius)
  const Vec2 center{entry_x, kLaneWidth - radius};
  const int arc_samples = 24;
  for (int i = 0; i <= arc_samples; ++i) {
    const double theta = M_PI / 2.0 + (M_PI / 2.0) * i / arc_samples;
    pts.push_back({center.x + radius * std::cos(theta), center.y + radius * std::sin(theta)});
  }
  const Vec2 exit = pts.back();
  for (double y = exit.y - 5.0; y > exit.y - 60.0; y -= 5.0) pts.push_back({exit.x, y});
  return pts;
}

struct AgentPlan {
  Path path;
  double speed;
  double start_s;  // arc length at scenario step 0
};

AgentTrack rollout_plan(const AgentPlan& plan, int agent_id, int n_steps, double dt) {
  AgentTrack tr;
  tr.agent_id = agent_id;
  tr.length = 4.5;
  tr.width = 1.9;
  for (int k = 0; k < n_steps; ++k) {
    tr.poses.push_back(plan.path.at(plan.start_s + plan.speed * k * dt));
    tr.valid.push_back(true);
  }
  return tr;
}

void add_lane(Scenario& s, const std::vector<Vec2>& center) {
  s.map.push_back({center, PolylineKind::lane_center});
}

void add_edges(Scenario& s, double x0, double x1, double y_low, double y_high) {
  s.map.push_back({{{x0, y_low}, {x1, y_low}}, PolylineKind::road_edge});
  s.map.push_back({{{x0, y_high}, {x1, y_high}}, PolylineKind::road_edge});
}

}  // namespace

ScenarioTemplate parse_template(const std::string& name) {
  if (name == "straight") return ScenarioTemplate::straight;
  if (name == "merge") return ScenarioTemplate::merge;
  if (name == "unprotected_left") return ScenarioTemplate::unprotected_left;
  throw ValidationError("unknown scenario template '" + name + "'");
}

Scenario generate_synthetic(ScenarioTemplate tmpl, int n_agents, std::uint64_t seed,
                            int history_len, int horizon, double dt) {
  if (n_agents < 1 || n_agents > 16) {
    throw ValidationError("generate_synthetic: n_agents must be in [1, 16]");
  }
  Scenario s;
  s.dt = dt;
  s.history_len = history_len;
  s.horizon = horizon;
  const int n_steps = s.track_len();

  SplitMix64 rng(hash_combine(hash_combine(seed, static_cast<std::uint64_t>(tmpl) + 17),
                              static_cast<std::uint64_t>(n_agents)));

  switch (tmpl) {
    case ScenarioTemplate::straight: {
      for (int i = 0; i < n_agents; ++i) {
        const double lane_y = kLaneWidth * i;
        const double speed = rng.uniform(8.0, 12.0);
        const double lateral = rng.uniform(-0.3, 0.3);
        AgentPlan plan{Path(straight_waypoints(lane_y + lateral, -60.0, 200.0)),
                       speed, rng.uniform(40.0, 60.0)};
        s.tracks.push_back(rollout_plan(plan, i, n_steps, dt));
        add_lane(s, straight_waypoints(lane_y, -60.0, 200.0));
      }
      add_edges(s, -60.0, 200.0, -kLaneWidth / 2.0, kLaneWidth * (n_agents - 0.5));
      break;
    }
    case ScenarioTemplate::merge: {
      // Main lane on y = 0, a ramp joining it at x = 40.
      std::vector<Vec2> ramp = {{-40.0, -14.0}, {0.0, -7.0}, {40.0, 0.0}, {200.0, 0.0}};
      add_lane(s, straight_waypoints(0.0, -60.0, 200.0));
      add_lane(s, ramp);
      add_edges(s, -60.0, 200.0, -kLaneWidth / 2.0, kLaneWidth / 2.0);
      for (int i = 0; i < n_agents; ++i) {
        const bool on_ramp = (i % 2) == 1;
        const double speed = rng.uniform(7.0, 11.0);
        // Stagger along-path starts so same-lane agents keep a gap.
        const double gap = 22.0 + rng.uniform(0.0, 6.0);
        const double start = 20.0 - gap * (i / 2);
        Path path = on_ramp ? Path(ramp) : Path(straight_waypoints(0.0, -60.0, 200.0));
        const double anchor = on_ramp ? 0.0 : path.project({-40.0, 0.0});
        s.tracks.push_back(rollout_plan({std::move(path), speed, anchor + start}, i, n_steps, dt));
      }
      break;
    }
    case ScenarioTemplate::unprotected_left: {
      const double turn_x = 5.0;
      const double radius = 6.0;
      std::vector<Vec2> east = straight_waypoints(0.0, -80.0, 120.0);
      std::vector<Vec2> turn = left_turn_waypoints(turn_x, radius);
      add_lane(s, east);
      add_lane(s, turn);
      add_edges(s, -80.0, 120.0, -kLaneWidth / 2.0, kLaneWidth * 1.5);

      Path east_path(east);
      Path turn_path(turn);
      // Conflict point: where the turn path crosses the eastbound lane y = 0.
      double turn_conflict_s = 0.0;
      for (double sarc = 0.0; sarc < turn_path.total(); sarc += 0.1) {
        if (turn_path.at(sarc).y <= 0.0) {
          turn_conflict_s = sarc;
          break;
        }
      }
      const Vec2 conflict = turn_path.at(turn_conflict_s).position();
      const double east_conflict_s = east_path.project(conflict);

      const double v_east = rng.uniform(7.0, 10.0);
      const double v_turn = rng.uniform(5.0, 8.0);
      // Both reach the conflict point at t_meet when seed % 4 == 0; otherwise
      // the turner arrives well after the straight car has cleared.
      const double t_meet = (history_len + 0.5 * horizon) * dt;
      const double miss = (seed % 4 == 0) ? 0.0 : 2.5 + rng.uniform(0.0, 1.5);
      for (int i = 0; i < n_agents; ++i) {
        if (i % 2 == 0) {
          // Agent 0 meets the turner at the conflict point; later eastbound
          // agents trail it on the same lane.
          const double offset = 25.0 * (i / 2);
          s.tracks.push_back(rollout_plan(
              {east_path, v_east, east_conflict_s - v_east * t_meet - offset}, i, n_steps, dt));
        } else {
          const double delay = (i == 1) ? miss : miss + 3.0 * ((i - 1) / 2) + 3.0;
          s.tracks.push_back(rollout_plan(
              {turn_path, v_turn, turn_conflict_s - v_turn * (t_meet + delay)}, i, n_steps, dt));
        }
      }
      break;
    }
  }

  validate_scenario(s);
  return s;
}

std::vector<MotionDelta> extract_segments(const std::vector<Scenario>& scenarios) {
  if (scenarios.empty()) throw ValidationError("extract_segments: no scenarios");
  std::vector<MotionDelta> out;
  for (const Scenario& s : scenarios) {
    for (const AgentTrack& tr : s.tracks) {
      for (std::size_t k = 0; k + 1 < tr.poses.size(); ++k) {
        if (tr.valid[k] && tr.valid[k + 1]) {
          out.push_back(pose_delta(tr.poses[k], tr.poses[k + 1]));
        }
      }
    }
  }
  return out;
}

}  // namespace r1sim
