#pragma once

#include <string>
#include <utility>
#include <vector>

#include "r1sim/reward.hpp"
#include "r1sim/rollout.hpp"

namespace r1sim {

// Fraction of (rollout, step, agent) slots in collision, via safety_term.
double collision_rate(const RolloutGroup& group);

struct Displacement {
  double ade = 0.0;      // mean over rollouts/steps/agents, gt-valid only
  double min_ade = 0.0;  // best per-rollout mean
};

Displacement displacement(const RolloutGroup& group, const Scenario& scenario);

// Uniform bins over [0, ln|V|]; last bin right-edge inclusive.
std::vector<std::size_t> entropy_histogram(const std::vector<double>& entropies, int n_bins,
                                           int vocab_size);

// All per-agent per-step sampling entropies of a group.
std::vector<double> collect_entropies(const RolloutGroup& group);

// Sort by score descending (ties by lower id); easy = top ceil(pct*n),
// hard = bottom ceil(pct*n).
std::pair<std::vector<int>, std::vector<int>> split_easy_hard(
    const std::vector<std::pair<int, double>>& per_scenario_scores, double pct);

struct ScenarioRow {
  int scenario_id = 0;
  double collision_rate = 0.0;
  double ade = 0.0;
  double min_ade = 0.0;
  double mean_entropy = 0.0;
};

struct EvalReport {
  std::vector<ScenarioRow> rows;
  ScenarioRow summary;  // means over scenarios, scenario_id = -1
  std::vector<std::size_t> entropy_hist;
  int n_bins = 0;
  int vocab_size = 0;
};

EvalReport make_report(const std::vector<ScenarioRow>& rows,
                       const std::vector<double>& all_entropies, int n_bins, int vocab_size);

void save_report_csv(const EvalReport& report, const std::string& path);
void save_report_json(const EvalReport& report, const std::string& path);

}  // namespace r1sim
