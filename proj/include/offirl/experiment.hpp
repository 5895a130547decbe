#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "offirl/cameron.hpp"
#include "offirl/eval.hpp"
#include "offirl/generate.hpp"

namespace offirl {

// Dataset recipe: either generated from the reference policies or loaded
// from JSONL files (a non-empty path wins over generation).
struct DataConfig {
  int expert_episodes = 5;
  int expert_steps = 30;
  std::vector<Quality> exploratory{Quality::expert, Quality::medium, Quality::random};
  int exploratory_episodes = 10;  // per quality
  int exploratory_steps = 30;
  std::string expert_path;
  std::string exploratory_path;
};

struct MmdExperimentConfig {
  MmdCurveConfig curve;
  int policies = 5;
  int dataset_episodes = 50;
  int dataset_steps = 20;
};

struct ExperimentConfig {
  std::string env = "chain5";
  Algorithm algorithm = Algorithm::cameron;
  std::uint64_t seed = 0;
  int seeds = 1;  // sweep seed, seed+1, ...
  DataConfig data;
  CameronConfig cameron;
  MmdExperimentConfig mmd;

  void validate() const;
};

// Every key is "section.key"; the same table drives parsing, overrides and
// the snapshot written into each run directory.
std::vector<std::string> config_keys();
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);
// "section.key=value"
void apply_override(ExperimentConfig& config, const std::string& assignment);
// Unknown sections/keys and malformed values throw ConfigError naming the path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& config);

struct Datasets {
  TrajectoryDataset expert;
  TrajectoryDataset exploratory;
};
Datasets build_datasets(const Environment& env, const DataConfig& data, std::uint64_t seed);

// $OFFIRL_ARTIFACT_ROOT, or ./runs when unset.
std::filesystem::path artifact_root();
// <root>/<UTC timestamp>_<label>, suffixed if it already exists.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& label);

void save_policy(const Policy& policy, const std::string& path);

// One training run: writes metrics.csv, policy.json, cost.json (when the
// algorithm learns one), run.json and config.ini into dir.
IrlResult train_to_dir(const ExperimentConfig& config, Algorithm algorithm, std::uint64_t seed,
                       const std::filesystem::path& dir, const std::string& variant = "");

// Random stochastic tables on finite environments; expert actions mixed
// with uniform ones at evenly spaced rates on continuous ones.
std::vector<PolicyPtr> mmd_policy_set(const Environment& env, int count, std::uint64_t seed);
// Policy set and a uniform-behaviour dataset from config.mmd, then the curve.
MmdCurveResult run_mmd_experiment(const ExperimentConfig& config, std::uint64_t seed);

struct ReportRow {
  std::string env, algorithm, variant;
  std::uint64_t seed = 0;
  double normalized = 0.0;
};
struct ReportAggregate {
  std::string env, algorithm, variant;
  std::size_t n = 0;
  double median = 0.0, mean = 0.0, ci_low = 0.0, ci_high = 0.0;
};
struct Report {
  std::vector<ReportRow> rows;
  std::vector<ReportAggregate> aggregates;
};

// Distribution-free interval from order statistics; with fewer than six
// values it degenerates to [min, max].
std::pair<double, double> median_ci95(std::vector<double> values);

// Each argument is a run directory or a directory containing run
// directories (searched recursively for run.json). A run's score is the
// normalised return at its best evaluated iteration in metrics.csv.
Report collect_report(const std::vector<std::filesystem::path>& dirs);
void write_report_csv(const Report& report, const std::string& path);

}  // namespace offirl
