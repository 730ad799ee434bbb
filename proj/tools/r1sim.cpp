// Command-line front end: scenario generation, vocabulary construction,
// next-token pretraining, GRPO fine-tuning, rollouts, and evaluation.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 runtime failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "r1sim/errors.hpp"
#include "r1sim/grpo.hpp"
#include "r1sim/metrics.hpp"
#include "r1sim/rollout.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace r1sim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// JSON config reader that collects every problem instead of stopping at the
// first, so a bad config is diagnosed in one run.
class Config {
 public:
  Config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      errors_.push_back("cannot open config file '" + path + "'");
      return;
    }
    try {
      in >> j_;
    } catch (const json::exception& e) {
      errors_.push_back(std::string("config is not valid JSON: ") + e.what());
    }
  }

  bool ok() const { return errors_.empty(); }
  const std::vector<std::string>& errors() const { return errors_; }
  void add_error(const std::string& msg) { errors_.push_back(msg); }

  const json* find(const std::string& dotted) const {
    const json* cur = &j_;
    std::size_t start = 0;
    while (start <= dotted.size()) {
      const std::size_t dot = dotted.find('.', start);
      const std::string key = dotted.substr(start, dot - start);
      if (!cur->is_object() || !cur->contains(key)) return nullptr;
      cur = &(*cur)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return cur;
  }

  template <typename T>
  T require(const std::string& key) {
    const json* v = find(key);
    if (!v) {
      errors_.push_back("missing required field '" + key + "'");
      return T{};
    }
    return read<T>(key, *v);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    return read<T>(key, *v);
  }

 private:
  template <typename T>
  T read(const std::string& key, const json& v) {
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      errors_.push_back("field '" + key + "' has the wrong type");
      return T{};
    }
  }

  json j_;
  std::vector<std::string> errors_;
};

// A "scenarios" entry may be a file or a directory of *.json files.
std::vector<std::string> expand_scenario_paths(const std::vector<std::string>& entries,
                                               Config& cfg) {
  std::vector<std::string> out;
  for (const std::string& e : entries) {
    if (fs::is_directory(e)) {
      std::vector<std::string> dir_files;
      for (const auto& entry : fs::directory_iterator(e)) {
        if (entry.path().extension() == ".json") dir_files.push_back(entry.path().string());
      }
      std::sort(dir_files.begin(), dir_files.end());
      out.insert(out.end(), dir_files.begin(), dir_files.end());
    } else if (fs::is_regular_file(e)) {
      out.push_back(e);
    } else {
      cfg.add_error("scenario path '" + e + "' does not exist");
    }
  }
  if (out.empty()) cfg.add_error("no scenario files found");
  return out;
}

std::vector<Scenario> load_scenarios(const std::vector<std::string>& paths) {
  std::vector<Scenario> out;
  out.reserve(paths.size());
  for (const std::string& p : paths) out.push_back(load_scenario(p));
  return out;
}

SamplerConfig read_sampler(Config& cfg) {
  SamplerConfig s;
  const std::string mode = cfg.get<std::string>("sampler.mode", "entropy_adaptive");
  if (mode == "fixed_topk") {
    s.mode = SamplerMode::fixed_topk;
  } else if (mode == "entropy_adaptive") {
    s.mode = SamplerMode::entropy_adaptive;
  } else {
    cfg.add_error("sampler.mode must be 'fixed_topk' or 'entropy_adaptive'");
  }
  s.k_fixed = cfg.get<int>("sampler.k_fixed", s.k_fixed);
  s.k_min = cfg.get<int>("sampler.k_min", s.k_min);
  s.k_max = cfg.get<int>("sampler.k_max", s.k_max);
  if (s.k_fixed < 1) cfg.add_error("sampler.k_fixed must be >= 1");
  if (s.k_min < 1 || s.k_min > s.k_max) cfg.add_error("sampler requires 1 <= k_min <= k_max");
  return s;
}

RewardConfig read_reward(Config& cfg) {
  RewardConfig r;
  const std::string variant = cfg.get<std::string>("reward.variant", "SPR");
  try {
    r.variant = parse_reward_variant(variant);
  } catch (const ValidationError& e) {
    cfg.add_error(e.what());
  }
  r.alpha = cfg.get<double>("reward.alpha", r.alpha);
  r.outcome_weight = cfg.get<double>("reward.outcome_weight", r.outcome_weight);
  r.heading_in_distance = cfg.get<bool>("reward.heading_in_distance", r.heading_in_distance);
  if (r.alpha <= 0.0) cfg.add_error("reward.alpha must be > 0");
  return r;
}

GrpoConfig read_grpo(Config& cfg, std::uint64_t seed) {
  GrpoConfig g;
  g.n_rollout = cfg.get<int>("grpo.n_rollout", g.n_rollout);
  g.eps_low = cfg.get<double>("grpo.eps_low", g.eps_low);
  g.eps_high = cfg.get<double>("grpo.eps_high", g.eps_high);
  g.beta_kl = cfg.get<double>("grpo.beta_kl", g.beta_kl);
  g.learning_rate = cfg.get<double>("grpo.learning_rate", g.learning_rate);
  g.iterations = cfg.get<int>("grpo.iterations", g.iterations);
  g.freeze_first_layer = cfg.get<bool>("grpo.freeze_first_layer", g.freeze_first_layer);
  g.exact_kl = cfg.get<bool>("grpo.exact_kl", g.exact_kl);
  const std::string mode = cfg.get<std::string>("grpo.advantage_mode", "mean_only");
  try {
    g.advantage_mode = parse_advantage_mode(mode);
  } catch (const ValidationError& e) {
    cfg.add_error(e.what());
  }
  if (g.n_rollout < 2) cfg.add_error("grpo.n_rollout must be >= 2");
  if (g.iterations < 0) cfg.add_error("grpo.iterations must be >= 0");
  if (g.eps_low <= 0.0 || g.eps_high <= 0.0) cfg.add_error("grpo clip widths must be > 0");
  if (g.learning_rate < 0.0) cfg.add_error("grpo.learning_rate must be >= 0");
  g.seed = seed;
  g.sampler = read_sampler(cfg);
  g.reward = read_reward(cfg);
  return g;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  int workers = 0;                    // 0 = leave OpenMP default
};

int fail_config(const Config& cfg) {
  std::fprintf(stderr, "configuration errors:\n");
  for (const std::string& e : cfg.errors()) std::fprintf(stderr, "  - %s\n", e.c_str());
  return kExitConfig;
}

std::uint64_t effective_seed(Config& cfg, const CommonArgs& args) {
  if (args.seed) return *args.seed;
  return cfg.get<std::uint64_t>("seed", 0);
}

fs::path prepare_out_dir(const CommonArgs& args) {
  fs::path out(args.out_dir);
  fs::create_directories(out);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_scenario_gen(const CommonArgs& args) {
  Config cfg(args.config_path);
  const std::string tmpl_name = cfg.require<std::string>("template");
  const int n_agents = cfg.require<int>("n_agents");
  const int count = cfg.get<int>("count", 1);
  const int history_len = cfg.get<int>("history_len", 11);
  const int horizon = cfg.get<int>("horizon", 80);
  const double dt = cfg.get<double>("dt", 0.1);
  const std::uint64_t seed = effective_seed(cfg, args);

  ScenarioTemplate tmpl = ScenarioTemplate::straight;
  if (cfg.ok()) {
    try {
      tmpl = parse_template(tmpl_name);
    } catch (const ValidationError& e) {
      cfg.add_error(e.what());
    }
    if (count < 1) cfg.add_error("count must be >= 1");
    if (n_agents < 1) cfg.add_error("n_agents must be >= 1");
    if (history_len < 1) cfg.add_error("history_len must be >= 1");
    if (horizon < 1) cfg.add_error("horizon must be >= 1");
    if (dt <= 0.0) cfg.add_error("dt must be > 0");
  }
  if (!cfg.ok()) return fail_config(cfg);

  const fs::path out = prepare_out_dir(args);
  for (int i = 0; i < count; ++i) {
    const Scenario sc =
        generate_synthetic(tmpl, n_agents, seed + i, history_len, horizon, dt);
    char name[32];
    std::snprintf(name, sizeof(name), "scenario_%04d.json", i);
    save_scenario(sc, (out / name).string());
  }
  std::printf("wrote %d %s scenario(s) to %s\n", count, tmpl_name.c_str(), out.c_str());
  return 0;
}

int cmd_vocab_build(const CommonArgs& args) {
  Config cfg(args.config_path);
  const auto entries = cfg.require<std::vector<std::string>>("scenarios");
  TokenizerConfig tcfg;
  tcfg.vocab_size = cfg.get<int>("vocab_size", tcfg.vocab_size);
  tcfg.yaw_weight = cfg.get<double>("yaw_weight", tcfg.yaw_weight);
  tcfg.step_dt = cfg.get<double>("step_dt", tcfg.step_dt);
  tcfg.d_max = cfg.get<double>("d_max", tcfg.d_max);
  tcfg.yaw_max = cfg.get<double>("yaw_max", tcfg.yaw_max);
  tcfg.max_iterations = cfg.get<int>("max_iterations", tcfg.max_iterations);
  tcfg.tolerance = cfg.get<double>("tolerance", tcfg.tolerance);
  const std::uint64_t seed = effective_seed(cfg, args);
  if (tcfg.vocab_size < 2) cfg.add_error("vocab_size must be >= 2");
  std::vector<std::string> paths;
  if (cfg.ok()) paths = expand_scenario_paths(entries, cfg);
  if (!cfg.ok()) return fail_config(cfg);

  const std::vector<Scenario> scenarios = load_scenarios(paths);
  const std::vector<MotionDelta> segments = extract_segments(scenarios);
  const TokenVocabulary vocab = build_vocabulary(segments, tcfg, seed);
  const fs::path out = prepare_out_dir(args);
  save_vocabulary(vocab, (out / "vocabulary.json").string());
  std::printf("built vocabulary of %d tokens from %zu segments (%zu scenarios)\n", vocab.size(),
              segments.size(), scenarios.size());
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  Config cfg(args.config_path);
  const auto entries = cfg.require<std::vector<std::string>>("scenarios");
  const std::string vocab_path = cfg.require<std::string>("vocabulary");
  const int hidden = cfg.get<int>("hidden", 64);
  NtpConfig ncfg;
  ncfg.learning_rate = cfg.get<double>("ntp.learning_rate", ncfg.learning_rate);
  ncfg.steps = cfg.get<int>("ntp.steps", ncfg.steps);
  ncfg.batch_size = cfg.get<int>("ntp.batch_size", ncfg.batch_size);
  const std::uint64_t seed = effective_seed(cfg, args);
  ncfg.seed = seed;
  if (hidden < 1) cfg.add_error("hidden must be >= 1");
  if (ncfg.steps < 0) cfg.add_error("ntp.steps must be >= 0");
  if (ncfg.batch_size < 1) cfg.add_error("ntp.batch_size must be >= 1");
  if (ncfg.learning_rate < 0.0) cfg.add_error("ntp.learning_rate must be >= 0");
  std::vector<std::string> paths;
  if (cfg.ok()) paths = expand_scenario_paths(entries, cfg);
  if (!cfg.ok()) return fail_config(cfg);

  const std::vector<Scenario> scenarios = load_scenarios(paths);
  const TokenVocabulary vocab = load_vocabulary(vocab_path);
  FeatureConfig fcfg;
  if (!scenarios.empty()) fcfg.dt = scenarios.front().dt;
  const PolicyParams init = init_params(seed, fcfg.dim(), hidden, vocab.size());
  const NtpResult res = ntp_pretrain(scenarios, vocab, init, ncfg);
  const double acc = ntp_accuracy(scenarios, vocab, res.params);

  const fs::path out = prepare_out_dir(args);
  save_checkpoint(res.params, (out / "checkpoint.json").string());
  std::ofstream curve((out / "pretrain_loss.csv").string());
  curve.precision(17);
  curve << "step,loss\n";
  for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
    curve << i << ',' << res.loss_curve[i] << '\n';
  }
  std::printf("pretrained for %d steps, final loss %.4f, train accuracy %.4f\n", ncfg.steps,
              res.loss_curve.empty() ? 0.0 : res.loss_curve.back(), acc);
  return 0;
}

int cmd_finetune(const CommonArgs& args) {
  Config cfg(args.config_path);
  const auto entries = cfg.require<std::vector<std::string>>("scenarios");
  const std::string vocab_path = cfg.require<std::string>("vocabulary");
  const std::string ckpt_path = cfg.require<std::string>("checkpoint");
  const std::uint64_t seed = effective_seed(cfg, args);
  GrpoConfig gcfg = read_grpo(cfg, seed);
  std::vector<std::string> paths;
  if (cfg.ok()) paths = expand_scenario_paths(entries, cfg);
  if (!cfg.ok()) return fail_config(cfg);

  const std::vector<Scenario> scenarios = load_scenarios(paths);
  const TokenVocabulary vocab = load_vocabulary(vocab_path);
  const PolicyParams init = load_checkpoint(ckpt_path);
  const FinetuneResult res = finetune_grpo(scenarios, vocab, init, gcfg);

  const fs::path out = prepare_out_dir(args);
  save_checkpoint(res.params, (out / "checkpoint.json").string());
  save_stats_csv(res.stats, (out / "stats.csv").string());
  const double last_reward = res.stats.empty() ? 0.0 : res.stats.back().mean_reward;
  std::printf("fine-tuned for %d iterations, final mean reward %.4f\n", gcfg.iterations,
              last_reward);
  return 0;
}

int cmd_rollout(const CommonArgs& args) {
  Config cfg(args.config_path);
  const std::string scenario_path = cfg.require<std::string>("scenario");
  const std::string vocab_path = cfg.require<std::string>("vocabulary");
  const std::string ckpt_path = cfg.require<std::string>("checkpoint");
  const int n_rollout = cfg.get<int>("n_rollout", 32);
  const std::uint64_t seed = effective_seed(cfg, args);
  const SamplerConfig sampler = read_sampler(cfg);
  if (n_rollout < 2) cfg.add_error("n_rollout must be >= 2");
  if (!cfg.ok()) return fail_config(cfg);

  const Scenario scenario = load_scenario(scenario_path);
  const TokenVocabulary vocab = load_vocabulary(vocab_path);
  const PolicyParams params = load_checkpoint(ckpt_path);
  const RolloutGroup group = rollout_group(scenario, params, vocab, n_rollout, sampler, seed);

  const fs::path out = prepare_out_dir(args);
  save_rollout_group(group, scenario, (out / "rollouts.json").string());
  std::printf("rolled out %d futures over horizon %d for %d agent(s)\n", n_rollout,
              scenario.horizon, scenario.n_agents());
  return 0;
}

// Shared by eval and entropy-report: per-scenario rollout groups.
struct EvalData {
  std::vector<Scenario> scenarios;
  std::vector<RolloutGroup> groups;
  std::vector<ScenarioRow> rows;
  std::vector<double> entropies;
  int vocab_size = 0;
};

EvalData run_eval(const std::vector<std::string>& paths, const std::string& vocab_path,
                  const std::string& ckpt_path, int n_rollout, const SamplerConfig& sampler,
                  std::uint64_t seed) {
  EvalData data;
  data.scenarios = load_scenarios(paths);
  const TokenVocabulary vocab = load_vocabulary(vocab_path);
  const PolicyParams params = load_checkpoint(ckpt_path);
  data.vocab_size = vocab.size();
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    const Scenario& sc = data.scenarios[i];
    const std::uint64_t group_seed = hash_combine(seed, 0x6576616cULL + i);
    const RolloutGroup g = rollout_group(sc, params, vocab, n_rollout, sampler, group_seed);
    const Displacement d = displacement(g, sc);
    const std::vector<double> ents = collect_entropies(g);
    double mean_ent = 0.0;
    for (double e : ents) mean_ent += e;
    if (!ents.empty()) mean_ent /= ents.size();
    data.rows.push_back(
        {static_cast<int>(i), collision_rate(g), d.ade, d.min_ade, mean_ent});
    data.entropies.insert(data.entropies.end(), ents.begin(), ents.end());
    data.groups.push_back(g);
  }
  return data;
}

int cmd_eval(const CommonArgs& args) {
  Config cfg(args.config_path);
  const auto entries = cfg.require<std::vector<std::string>>("scenarios");
  const std::string vocab_path = cfg.require<std::string>("vocabulary");
  const std::string ckpt_path = cfg.require<std::string>("checkpoint");
  const int n_rollout = cfg.get<int>("n_rollout", 8);
  const int n_bins = cfg.get<int>("n_bins", 16);
  const std::uint64_t seed = effective_seed(cfg, args);
  const SamplerConfig sampler = read_sampler(cfg);
  if (n_rollout < 2) cfg.add_error("n_rollout must be >= 2");
  if (n_bins < 1) cfg.add_error("n_bins must be >= 1");
  std::vector<std::string> paths;
  if (cfg.ok()) paths = expand_scenario_paths(entries, cfg);
  if (!cfg.ok()) return fail_config(cfg);

  const EvalData data = run_eval(paths, vocab_path, ckpt_path, n_rollout, sampler, seed);
  const EvalReport rep = make_report(data.rows, data.entropies, n_bins, data.vocab_size);
  const fs::path out = prepare_out_dir(args);
  save_report_csv(rep, (out / "eval.csv").string());
  save_report_json(rep, (out / "eval.json").string());
  std::printf("evaluated %zu scenario(s): collision rate %.4f, ade %.4f\n", data.rows.size(),
              rep.summary.collision_rate, rep.summary.ade);
  return 0;
}

int cmd_entropy_report(const CommonArgs& args) {
  Config cfg(args.config_path);
  const auto entries = cfg.require<std::vector<std::string>>("scenarios");
  const std::string vocab_path = cfg.require<std::string>("vocabulary");
  const std::string ckpt_path = cfg.require<std::string>("checkpoint");
  const int n_rollout = cfg.get<int>("n_rollout", 8);
  const int n_bins = cfg.get<int>("n_bins", 16);
  const double split_pct = cfg.get<double>("split_pct", 0.1);
  const std::uint64_t seed = effective_seed(cfg, args);
  const SamplerConfig sampler = read_sampler(cfg);
  if (n_rollout < 2) cfg.add_error("n_rollout must be >= 2");
  if (n_bins < 1) cfg.add_error("n_bins must be >= 1");
  if (split_pct <= 0.0 || split_pct >= 0.5) cfg.add_error("split_pct must be in (0, 0.5)");
  std::vector<std::string> paths;
  if (cfg.ok()) paths = expand_scenario_paths(entries, cfg);
  if (!cfg.ok()) return fail_config(cfg);

  const EvalData data = run_eval(paths, vocab_path, ckpt_path, n_rollout, sampler, seed);
  const std::vector<std::size_t> hist =
      entropy_histogram(data.entropies, n_bins, data.vocab_size);

  // Easy/hard split on mean sampling entropy (high entropy = easy to vary,
  // hard to match; the split feeds the curriculum analysis).
  std::vector<std::pair<int, double>> scores;
  for (const ScenarioRow& r : data.rows) scores.push_back({r.scenario_id, r.mean_entropy});
  const auto [easy, hard] = split_easy_hard(scores, split_pct);

  const fs::path out = prepare_out_dir(args);
  json j;
  j["version"] = 1;
  j["n_bins"] = n_bins;
  j["vocab_size"] = data.vocab_size;
  j["histogram"] = hist;
  auto& per = j["scenarios"] = json::array();
  for (const ScenarioRow& r : data.rows) {
    per.push_back({{"scenario_id", r.scenario_id}, {"mean_entropy", r.mean_entropy}});
  }
  j["high_entropy_ids"] = easy;
  j["low_entropy_ids"] = hard;
  std::ofstream jf((out / "entropy.json").string());
  jf << j.dump(2) << "\n";

  std::ofstream csv((out / "entropy.csv").string());
  csv.precision(17);
  csv << "bin,lo,hi,count\n";
  const double top = std::log(static_cast<double>(data.vocab_size));
  for (int b = 0; b < n_bins; ++b) {
    csv << b << ',' << top * b / n_bins << ',' << top * (b + 1) / n_bins << ',' << hist[b]
        << '\n';
  }
  double mean = 0.0;
  for (double e : data.entropies) mean += e;
  if (!data.entropies.empty()) mean /= data.entropies.size();
  std::printf("entropy report over %zu scenario(s): mean %.4f nats, %d bins\n", data.rows.size(),
              mean, n_bins);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tokenized multi-agent traffic rollout and fine-tuning toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "JSON configuration file")
        ->required();
    sub->add_option("--out", args.out_dir, "output directory (created if missing)")->required();
    std::uint64_t seed_holder = 0;
    sub->add_option_function<std::uint64_t>(
        "--seed", [&args](const std::uint64_t& s) { args.seed = s; },
        "seed override (takes precedence over the config)");
    sub->add_option("--workers", args.workers, "OpenMP worker count (0 = default)")
        ->check(CLI::NonNegativeNumber);
    (void)seed_holder;
  };

  CLI::App* sub_scen = app.add_subcommand("scenario-gen", "generate synthetic scenarios");
  CLI::App* sub_vocab = app.add_subcommand("vocab-build", "cluster motion tokens");
  CLI::App* sub_pre = app.add_subcommand("pretrain", "next-token pretraining");
  CLI::App* sub_fine = app.add_subcommand("finetune", "GRPO fine-tuning");
  CLI::App* sub_roll = app.add_subcommand("rollout", "sample rollout groups");
  CLI::App* sub_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* sub_ent = app.add_subcommand("entropy-report", "sampling entropy analysis");
  for (CLI::App* sub :
       {sub_scen, sub_vocab, sub_pre, sub_fine, sub_roll, sub_eval, sub_ent}) {
    add_common(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (args.workers > 0) omp_set_num_threads(args.workers);

  try {
    if (sub_scen->parsed()) return cmd_scenario_gen(args);
    if (sub_vocab->parsed()) return cmd_vocab_build(args);
    if (sub_pre->parsed()) return cmd_pretrain(args);
    if (sub_fine->parsed()) return cmd_finetune(args);
    if (sub_roll->parsed()) return cmd_rollout(args);
    if (sub_eval->parsed()) return cmd_eval(args);
    if (sub_ent->parsed()) return cmd_entropy_report(args);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitConfig;
  } catch (const ConsistencyError& e) {
    std::fprintf(stderr, "consistency error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
