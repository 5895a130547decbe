// offirl: experiment driver. Exit codes: 0 success, 1 config error, 2 runtime failure.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "offirl/experiment.hpp"

namespace fs = std::filesystem;
using namespace offirl;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

const std::vector<std::string> kCommands{"gen-data",   "train-combo", "train-cameron",  "train-oril",
                                         "train-tgr",  "train-bc",    "eval-mmd",       "ablate-mixture",
                                         "ablate-data-diversity",     "report"};

std::string joined(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string env;
  long long seed = -1;
  int seeds = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "INI config file");
  cmd->add_option("--set", c.overrides, "override, section.key=value (repeatable)");
  cmd->add_option("--env", c.env, "shorthand for --set run.env=NAME");
  cmd->add_option("--seed", c.seed, "shorthand for --set run.seed=N");
  cmd->add_option("--seeds", c.seeds, "shorthand for --set run.seeds=N");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (!c.env.empty()) set_config_value(cfg, "run.env", c.env);
  if (c.seed >= 0) set_config_value(cfg, "run.seed", std::to_string(c.seed));
  if (c.seeds > 0) set_config_value(cfg, "run.seeds", std::to_string(c.seeds));
  for (const auto& o : c.overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

fs::path open_run(const ExperimentConfig& cfg, const std::string& command) {
  const fs::path dir = make_run_dir(artifact_root(), command + "_" + cfg.env);
  write_file(dir / "config.ini", dump_config(cfg));
  std::string seeds;
  for (int k = 0; k < cfg.seeds; ++k) seeds += std::to_string(cfg.seed + static_cast<std::uint64_t>(k)) + "\n";
  write_file(dir / "seeds.txt", seeds);
  std::cout << "run directory: " << dir.string() << "\n";
  return dir;
}

void train_seeds(const ExperimentConfig& cfg, Algorithm algorithm, const fs::path& dir, const std::string& variant) {
  for (int k = 0; k < cfg.seeds; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    const auto r = train_to_dir(cfg, algorithm, seed, dir / ("seed_" + std::to_string(seed)), variant);
    std::printf("%-8s %-18s seed %-4llu best return %.4f normalised %.1f\n", to_string(algorithm).c_str(),
                variant.c_str(), static_cast<unsigned long long>(seed), r.best_return, r.best_normalized);
    std::fflush(stdout);
  }
}

void report_into(const fs::path& dir) {
  write_report_csv(collect_report({dir}), (dir / "report.csv").string());
  std::cout << "report: " << (dir / "report.csv").string() << "\n";
}

int run(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-' && std::find(kCommands.begin(), kCommands.end(), argv[1]) == kCommands.end()) {
    std::cerr << "error: unknown subcommand '" << argv[1] << "' (valid: " << joined(kCommands) << ")\n";
    return kConfigError;
  }

  CLI::App app{"Offline inverse RL experiments on desk-scale environments"};
  app.require_subcommand(1);
  app.footer("Artifacts go under $OFFIRL_ARTIFACT_ROOT (default ./runs).");

  Common common;
  std::vector<CLI::App*> cmds;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* c = app.add_subcommand(name, help);
    if (name != "report") add_common(c, common);
    cmds.push_back(c);
    return c;
  };
  auto* gen = sub("gen-data", "generate expert and exploratory datasets from the [data] section");
  std::vector<std::pair<CLI::App*, Algorithm>> trainers{
      {sub("train-combo", "offline RL with the true cost (upper bound)"), Algorithm::combo},
      {sub("train-cameron", "CAMERON inverse RL"), Algorithm::cameron},
      {sub("train-oril", "ORIL baseline"), Algorithm::oril},
      {sub("train-tgr", "time-guided rewards baseline"), Algorithm::tgr},
      {sub("train-bc", "behaviour cloning baseline"), Algorithm::bc}};
  auto* mmd = sub("eval-mmd", "Idle MMD curves against the exact occupancy");
  auto* mix = sub("ablate-mixture", "CAMERON over balanced and one-hot sample-source mixtures");
  auto* div = sub("ablate-data-diversity", "CAMERON over exploratory dataset mixes");
  auto* rep = sub("report", "summary CSV over run directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  rep->add_option("dirs", report_dirs, "run directories (searched recursively)")->required();
  rep->add_option("-o,--out", report_out, "output CSV (default: a new run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  ExperimentConfig cfg;
  try {
    if (!rep->parsed()) cfg = resolve(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (gen->parsed()) {
      const fs::path dir = open_run(cfg, "gen-data");
      const Environment env = builtin_env(cfg.env);
      for (int k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
        const Datasets d = build_datasets(env, cfg.data, seed);
        const fs::path out = dir / ("seed_" + std::to_string(seed));
        fs::create_directories(out);
        save_dataset(d.expert, (out / "expert.jsonl").string());
        save_dataset(d.exploratory, (out / "exploratory.jsonl").string());
        std::printf("seed %llu: %zu expert / %zu exploratory transitions\n", static_cast<unsigned long long>(seed),
                    d.expert.size(), d.exploratory.size());
      }
      return 0;
    }
    for (const auto& [cmd, algorithm] : trainers) {
      if (!cmd->parsed()) continue;
      ExperimentConfig c = cfg;
      c.algorithm = algorithm;
      const fs::path dir = open_run(c, cmd->get_name());
      train_seeds(c, algorithm, dir, "");
      report_into(dir);
      return 0;
    }
    if (mmd->parsed()) {
      const fs::path dir = open_run(cfg, "eval-mmd");
      const MmdCurveResult r = run_mmd_experiment(cfg, cfg.seed);
      write_mmd_curve_csv(r, (dir / "mmd.csv").string());
      std::ofstream s(dir / "mmd_summary.csv");
      s << "gamma,final_over_initial,reference_mmd2\n";
      for (std::size_t i = 0; i < r.final_over_initial.size(); ++i) {
        s << r.final_over_initial[i].first << ',' << r.final_over_initial[i].second << ',' << r.reference[i].second
          << '\n';
        std::printf("gamma %.2f  final/initial %.3f  reference %.5f\n", r.final_over_initial[i].first,
                    r.final_over_initial[i].second, r.reference[i].second);
      }
      return 0;
    }
    if (mix->parsed()) {
      const fs::path dir = open_run(cfg, "ablate-mixture");
      const std::vector<std::pair<std::string, MixtureWeights>> variants{
          {"balanced", MixtureWeights{}},
          {"data_only", MixtureWeights{1.0, 0.0, 0.0}},
          {"idle_only", MixtureWeights{0.0, 1.0, 0.0}},
          {"rollout_only", MixtureWeights{0.0, 0.0, 1.0}}};
      for (const auto& [name, w] : variants) {
        ExperimentConfig c = cfg;
        c.cameron.mixture = w;
        train_seeds(c, Algorithm::cameron, dir / name, name);
      }
      report_into(dir);
      return 0;
    }
    if (div->parsed()) {
      const fs::path dir = open_run(cfg, "ablate-data-diversity");
      const std::vector<std::pair<std::string, std::vector<Quality>>> variants{
          {"expert+medium+random", {Quality::expert, Quality::medium, Quality::random}},
          {"expert+medium", {Quality::expert, Quality::medium}},
          {"expert+random", {Quality::expert, Quality::random}}};
      for (const auto& [name, qs] : variants) {
        ExperimentConfig c = cfg;
        c.data.exploratory = qs;
        c.data.exploratory_path.clear();
        train_seeds(c, Algorithm::cameron, dir / name, name);
      }
      report_into(dir);
      return 0;
    }
    if (rep->parsed()) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      const Report r = collect_report(dirs);
      fs::path out = report_out;
      if (out.empty()) out = make_run_dir(artifact_root(), "report") / "report.csv";
      write_report_csv(r, out.string());
      std::cout << "report: " << out.string() << " (" << r.rows.size() << " runs, " << r.aggregates.size()
                << " groups)\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
