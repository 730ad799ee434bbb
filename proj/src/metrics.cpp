#include "r1sim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "r1sim/errors.hpp"

namespace r1sim {

double collision_rate(const RolloutGroup& group) {
  if (group.rollouts.empty()) throw ValidationError("collision_rate: empty group");
  std::size_t slots = 0, hits = 0;
  for (const Rollout& r : group.rollouts) {
    for (std::size_t t = 1; t < r.states.size(); ++t) {
      const std::vector<double> safety = safety_term(r.states[t]);
      for (const double s : safety) {
        ++slots;
        if (s < 0.0) ++hits;
      }
    }
  }
  return slots ? static_cast<double>(hits) / slots : 0.0;
}

Displacement displacement(const RolloutGroup& group, const Scenario& scenario) {
  double total = 0.0;
  std::size_t count = 0;
  double best = std::numeric_limits<double>::infinity();
  for (const Rollout& r : group.rollouts) {
    double rollout_sum = 0.0;
    std::size_t rollout_count = 0;
    for (int t = 1; t < static_cast<int>(r.states.size()); ++t) {
      const int gt_index = scenario.history_len + t;
      for (int j = 0; j < scenario.n_agents(); ++j) {
        const AgentTrack& tr = scenario.tracks[j];
        if (!tr.valid[gt_index]) continue;
        const Pose2D& sim = r.states[t].agents[j].pose;
        const Pose2D& gt = tr.poses[gt_index];
        const double d = std::hypot(sim.x - gt.x, sim.y - gt.y);
        rollout_sum += d;
        ++rollout_count;
      }
    }
    if (rollout_count == 0) continue;
    total += rollout_sum;
    count += rollout_count;
    best = std::min(best, rollout_sum / rollout_count);
  }
  if (count == 0) throw ValidationError("displacement: no valid ground truth");
  return {total / count, best};
}

std::vector<std::size_t> entropy_histogram(const std::vector<double>& entropies, int n_bins,
                                           int vocab_size) {
  if (n_bins < 1) throw ValidationError("entropy_histogram: n_bins must be >= 1");
  const double hi = std::log(static_cast<double>(vocab_size));
  std::vector<std::size_t> bins(n_bins, 0);
  for (const double h : entropies) {
    int b = static_cast<int>(h / hi * n_bins);
    b = std::clamp(b, 0, n_bins - 1);  // last bin right-edge inclusive
    ++bins[b];
  }
  return bins;
}

std::vector<double> collect_entropies(const RolloutGroup& group) {
  std::vector<double> out;
  for (const Rollout& r : group.rollouts) {
    for (const StepRecord& rec : r.records) {
      for (const SampleRecord& a : rec.agents) out.push_back(a.entropy);
    }
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> split_easy_hard(
    const std::vector<std::pair<int, double>>& per_scenario_scores, double pct) {
  if (pct <= 0.0 || pct >= 0.5) throw ValidationError("split_easy_hard: pct must be in (0, 0.5)");
  std::vector<std::pair<int, double>> sorted = per_scenario_scores;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const int n = static_cast<int>(sorted.size());
  const int k = static_cast<int>(std::ceil(pct * n));
  std::vector<int> easy, hard;
  for (int i = 0; i < k; ++i) easy.push_back(sorted[i].first);
  for (int i = n - k; i < n; ++i) hard.push_back(sorted[i].first);
  return {easy, hard};
}

EvalReport make_report(const std::vector<ScenarioRow>& rows,
                       const std::vector<double>& all_entropies, int n_bins, int vocab_size) {
  EvalReport rep;
  rep.rows = rows;
  rep.n_bins = n_bins;
  rep.vocab_size = vocab_size;
  rep.entropy_hist = entropy_histogram(all_entropies, n_bins, vocab_size);
  rep.summary.scenario_id = -1;
  for (const ScenarioRow& r : rows) {
    rep.summary.collision_rate += r.collision_rate;
    rep.summary.ade += r.ade;
    rep.summary.min_ade += r.min_ade;
    rep.summary.mean_entropy += r.mean_entropy;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    rep.summary.collision_rate /= n;
    rep.summary.ade /= n;
    rep.summary.min_ade /= n;
    rep.summary.mean_entropy /= n;
  }
  return rep;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("save_report_csv: cannot open " + path);
  out.precision(17);
  out << "scenario_id,collision_rate,ade,min_ade,mean_entropy\n";
  for (const ScenarioRow& r : report.rows) {
    out << r.scenario_id << ',' << r.collision_rate << ',' << r.ade << ',' << r.min_ade << ','
        << r.mean_entropy << '\n';
  }
  const ScenarioRow& s = report.summary;
  out << "summary," << s.collision_rate << ',' << s.ade << ',' << s.min_ade << ','
      << s.mean_entropy << '\n';
}

void save_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  auto row_json = [](const ScenarioRow& r) {
    return nlohmann::json{{"scenario_id", r.scenario_id},
                          {"collision_rate", r.collision_rate},
                          {"ade", r.ade},
                          {"min_ade", r.min_ade},
                          {"mean_entropy", r.mean_entropy}};
  };
  auto& rows = j["scenarios"] = nlohmann::json::array();
  for (const ScenarioRow& r : report.rows) rows.push_back(row_json(r));
  j["summary"] = row_json(report.summary);
  j["entropy_histogram"] = report.entropy_hist;
  j["n_bins"] = report.n_bins;
  j["vocab_size"] = report.vocab_size;
  std::ofstream out(path);
  if (!out) throw ValidationError("save_report_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace r1sim
