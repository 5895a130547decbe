#include "offirl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

namespace offirl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- value codecs ----------------------------------------------------------

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

template <class T>
T parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw InvalidParameter("expected a number, got '" + raw + "'");
  return v;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + f(x);
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Access is written once against a mutable config; get() casts constness
// away only to reuse that accessor and never writes.
template <class Access>
Field int_field(std::string key, Access access) {
  return {std::move(key), [=](ExperimentConfig& c, const std::string& v) { access(c) = parse_number<int>(v); },
          [=](const ExperimentConfig& c) { return std::to_string(access(const_cast<ExperimentConfig&>(c))); }};
}
template <class Access>
Field size_field(std::string key, Access access) {
  return {std::move(key),
          [=](ExperimentConfig& c, const std::string& v) { access(c) = parse_number<std::size_t>(v); },
          [=](const ExperimentConfig& c) { return std::to_string(access(const_cast<ExperimentConfig&>(c))); }};
}
template <class Access>
Field real_field(std::string key, Access access) {
  return {std::move(key), [=](ExperimentConfig& c, const std::string& v) { access(c) = parse_number<double>(v); },
          [=](const ExperimentConfig& c) { return format_double(access(const_cast<ExperimentConfig&>(c))); }};
}
template <class Access>
Field text_field(std::string key, Access access) {
  return {std::move(key), [=](ExperimentConfig& c, const std::string& v) { access(c) = trim(v); },
          [=](const ExperimentConfig& c) { return access(const_cast<ExperimentConfig&>(c)); }};
}
template <class Access>
Field ints_field(std::string key, Access access) {
  return {std::move(key),
          [=](ExperimentConfig& c, const std::string& v) {
            std::vector<int> xs;
            for (const auto& t : split_list(v)) xs.push_back(parse_number<int>(t));
            access(c) = xs;
          },
          [=](const ExperimentConfig& c) {
            return join<int>(access(const_cast<ExperimentConfig&>(c)), [](const int& x) { return std::to_string(x); });
          }};
}
template <class Enum, class Access, class Parse>
Field enum_field(std::string key, Access access, Parse parse) {
  return {std::move(key), [=](ExperimentConfig& c, const std::string& v) { access(c) = parse(trim(v)); },
          [=](const ExperimentConfig& c) { return to_string(access(const_cast<ExperimentConfig&>(c))); }};
}

#define OFFIRL_ACCESS(member) [](ExperimentConfig& c) -> auto& { return c.member; }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back(text_field("run.env", OFFIRL_ACCESS(env)));
    f.push_back(enum_field<Algorithm>("run.algorithm", OFFIRL_ACCESS(algorithm), parse_algorithm));
    f.push_back({"run.seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    f.push_back(int_field("run.seeds", OFFIRL_ACCESS(seeds)));

    f.push_back(int_field("data.expert_episodes", OFFIRL_ACCESS(data.expert_episodes)));
    f.push_back(int_field("data.expert_steps", OFFIRL_ACCESS(data.expert_steps)));
    f.push_back({"data.exploratory",
                 [](ExperimentConfig& c, const std::string& v) {
                   std::vector<Quality> qs;
                   for (const auto& t : split_list(v)) qs.push_back(parse_quality(t));
                   c.data.exploratory = qs;
                 },
                 [](const ExperimentConfig& c) {
                   return join<Quality>(c.data.exploratory, [](const Quality& q) { return to_string(q); });
                 }});
    f.push_back(int_field("data.exploratory_episodes", OFFIRL_ACCESS(data.exploratory_episodes)));
    f.push_back(int_field("data.exploratory_steps", OFFIRL_ACCESS(data.exploratory_steps)));
    f.push_back(text_field("data.expert_path", OFFIRL_ACCESS(data.expert_path)));
    f.push_back(text_field("data.exploratory_path", OFFIRL_ACCESS(data.exploratory_path)));

    f.push_back(int_field("cameron.iterations", OFFIRL_ACCESS(cameron.iterations)));
    f.push_back(int_field("cameron.idle_updates", OFFIRL_ACCESS(cameron.idle_updates)));
    f.push_back(int_field("cameron.rl_steps", OFFIRL_ACCESS(cameron.rl_steps)));
    f.push_back(int_field("cameron.cost_steps", OFFIRL_ACCESS(cameron.cost_steps)));
    f.push_back(size_field("cameron.cost_batch", OFFIRL_ACCESS(cameron.cost_batch)));
    f.push_back(size_field("cameron.fill_per_iteration", OFFIRL_ACCESS(cameron.fill_per_iteration)));
    f.push_back(size_field("cameron.buffer_capacity", OFFIRL_ACCESS(cameron.buffer_capacity)));
    f.push_back(size_field("cameron.expert_pool", OFFIRL_ACCESS(cameron.expert_pool)));
    f.push_back(real_field("cameron.gamma", OFFIRL_ACCESS(cameron.gamma)));
    f.push_back(real_field("cameron.delta", OFFIRL_ACCESS(cameron.delta)));
    f.push_back(int_field("cameron.eval_every", OFFIRL_ACCESS(cameron.eval_every)));

    f.push_back(real_field("mixture.f_data", OFFIRL_ACCESS(cameron.mixture.f_data)));
    f.push_back(real_field("mixture.f_idle", OFFIRL_ACCESS(cameron.mixture.f_idle)));
    f.push_back(real_field("mixture.f_rollout", OFFIRL_ACCESS(cameron.mixture.f_rollout)));
    f.push_back(int_field("rollout.horizon", OFFIRL_ACCESS(cameron.rollout.horizon)));
    f.push_back(int_field("rollout.pool_factor", OFFIRL_ACCESS(cameron.rollout.pool_factor)));

    f.push_back(real_field("idle.lambda", OFFIRL_ACCESS(cameron.idle.lambda)));
    f.push_back(int_field("idle.batch", OFFIRL_ACCESS(cameron.idle.batch)));
    f.push_back(enum_field<IdleLossForm>("idle.form", OFFIRL_ACCESS(cameron.idle.form), parse_idle_loss_form));
    f.push_back(ints_field("idle.hidden", OFFIRL_ACCESS(cameron.idle.hidden)));
    f.push_back(enum_field<Activation>("idle.activation", OFFIRL_ACCESS(cameron.idle.activation), parse_activation));
    f.push_back(enum_field<GeneratorKind>("idle.generator", OFFIRL_ACCESS(cameron.idle.finite_generator),
                                          parse_generator_kind));
    f.push_back(real_field("idle.e_lr", OFFIRL_ACCESS(cameron.idle.e_opt.lr)));
    f.push_back(real_field("idle.g_lr", OFFIRL_ACCESS(cameron.idle.g_opt.lr)));

    f.push_back(real_field("combo.beta", OFFIRL_ACCESS(cameron.combo.beta)));
    f.push_back(real_field("combo.f", OFFIRL_ACCESS(cameron.combo.f)));
    f.push_back(real_field("combo.temperature", OFFIRL_ACCESS(cameron.combo.temperature)));
    f.push_back(int_field("combo.rollout_horizon", OFFIRL_ACCESS(cameron.combo.rollout_horizon)));
    f.push_back(int_field("combo.rollout_starts", OFFIRL_ACCESS(cameron.combo.rollout_starts)));
    f.push_back(int_field("combo.rollout_every", OFFIRL_ACCESS(cameron.combo.rollout_every)));
    f.push_back(int_field("combo.batch", OFFIRL_ACCESS(cameron.combo.batch)));
    f.push_back(real_field("combo.tabular_lr", OFFIRL_ACCESS(cameron.combo.tabular_lr)));
    f.push_back(real_field("combo.critic_lr", OFFIRL_ACCESS(cameron.combo.critic_opt.lr)));
    f.push_back(real_field("combo.actor_lr", OFFIRL_ACCESS(cameron.combo.actor_opt.lr)));
    f.push_back(ints_field("combo.critic_hidden", OFFIRL_ACCESS(cameron.combo.critic_hidden)));
    f.push_back(ints_field("combo.actor_hidden", OFFIRL_ACCESS(cameron.combo.actor_hidden)));
    f.push_back(int_field("combo.eval_episodes", OFFIRL_ACCESS(cameron.combo.eval_episodes)));
    f.push_back(int_field("combo.model_members", OFFIRL_ACCESS(cameron.combo.dynamics.trained_members)));
    f.push_back(int_field("combo.model_kept", OFFIRL_ACCESS(cameron.combo.dynamics.kept_members)));
    f.push_back(int_field("combo.model_steps", OFFIRL_ACCESS(cameron.combo.dynamics.train_steps)));

    f.push_back(ints_field("cost.hidden", OFFIRL_ACCESS(cameron.cost.hidden)));
    f.push_back(real_field("cost.lr", OFFIRL_ACCESS(cameron.cost.opt.lr)));
    f.push_back(real_field("baseline.oril_phi", OFFIRL_ACCESS(cameron.baseline.oril_phi)));
    f.push_back(int_field("baseline.tgr_t0", OFFIRL_ACCESS(cameron.baseline.tgr_t0)));
    f.push_back(int_field("bc.steps", OFFIRL_ACCESS(cameron.bc.steps)));
    f.push_back(size_field("bc.batch", OFFIRL_ACCESS(cameron.bc.batch)));
    f.push_back(ints_field("bc.hidden", OFFIRL_ACCESS(cameron.bc.hidden)));
    f.push_back(real_field("bc.lr", OFFIRL_ACCESS(cameron.bc.opt.lr)));

    f.push_back({"mmd.gammas",
                 [](ExperimentConfig& c, const std::string& v) {
                   std::vector<double> xs;
                   for (const auto& t : split_list(v)) xs.push_back(parse_number<double>(t));
                   c.mmd.curve.gammas = xs;
                 },
                 [](const ExperimentConfig& c) {
                   return join<double>(c.mmd.curve.gammas, [](const double& x) { return format_double(x); });
                 }});
    f.push_back(int_field("mmd.iterations", OFFIRL_ACCESS(mmd.curve.iterations)));
    f.push_back(int_field("mmd.eval_every", OFFIRL_ACCESS(mmd.curve.eval_every)));
    f.push_back(int_field("mmd.samples", OFFIRL_ACCESS(mmd.curve.samples)));
    f.push_back(int_field("mmd.policies", OFFIRL_ACCESS(mmd.policies)));
    f.push_back(int_field("mmd.dataset_episodes", OFFIRL_ACCESS(mmd.dataset_episodes)));
    f.push_back(int_field("mmd.dataset_steps", OFFIRL_ACCESS(mmd.dataset_steps)));
    f.push_back(real_field("mmd.lambda", OFFIRL_ACCESS(mmd.curve.idle.lambda)));
    f.push_back({"mmd.lr",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.mmd.curve.idle.e_opt.lr = c.mmd.curve.idle.g_opt.lr = parse_number<double>(v);
                 },
                 [](const ExperimentConfig& c) { return format_double(c.mmd.curve.idle.e_opt.lr); }});
    return f;
  }();
  return fields;
}

#undef OFFIRL_ACCESS

const Field& find_field(const std::string& key) {
  for (const auto& f : schema())
    if (f.key == key) return f;
  throw ConfigError(key + ": unknown config key");
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto guard = [](const std::string& section, auto&& fn) {
    try {
      fn();
    } catch (const InvalidParameter& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  guard("run.env", [&] { builtin_env(env); });
  if (seeds < 1) throw ConfigError("run.seeds: must be at least 1");
  if (data.expert_path.empty() && (data.expert_episodes < 1 || data.expert_steps < 1))
    throw ConfigError("data.expert_episodes: expert data needs at least one episode and step");
  if (data.exploratory_path.empty() && data.exploratory.empty())
    throw ConfigError("data.exploratory: need at least one quality or a path");
  if (data.exploratory_path.empty() && (data.exploratory_episodes < 1 || data.exploratory_steps < 1))
    throw ConfigError("data.exploratory_episodes: need at least one episode and step");
  guard("cameron", [&] { cameron.validate(); });
  if (mmd.policies < 1) throw ConfigError("mmd.policies: must be at least 1");
  guard("mmd", [&] { mmd.curve.idle.validate(); });
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.key);
  return out;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  try {
    f.set(config, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
  return find_field(key).get(config);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos) throw ConfigError(key + ": expected section.key");
  set_config_value(config, key, assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  ExperimentConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": key outside of any section");
    for (const auto& [key, value] : body) set_config_value(config, section + "." + key, value.data());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : schema()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return os.str();
}

// ---- datasets and runs ---------------------------------------------------------

Datasets build_datasets(const Environment& env, const DataConfig& data, std::uint64_t seed) {
  Datasets out;
  out.expert = data.expert_path.empty()
                   ? generate_dataset(env, Quality::expert, data.expert_episodes, derive_seed(seed, 100),
                                      data.expert_steps)
                   : load_dataset(data.expert_path);
  if (!data.exploratory_path.empty()) {
    out.exploratory = load_dataset(data.exploratory_path);
  } else {
    std::vector<TrajectoryDataset> parts;
    for (std::size_t i = 0; i < data.exploratory.size(); ++i)
      parts.push_back(generate_dataset(env, data.exploratory[i], data.exploratory_episodes,
                                       derive_seed(seed, 101 + i), data.exploratory_steps));
    std::vector<const TrajectoryDataset*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    out.exploratory = merge_datasets(ptrs, DatasetTag::mixed);
  }
  if (out.expert.env_name != env.name() || out.exploratory.env_name != env.name())
    throw ValidationError("dataset environment does not match run.env '" + env.name() + "'");
  return out;
}

fs::path artifact_root() {
  const char* v = std::getenv("OFFIRL_ARTIFACT_ROOT");
  return (v && *v) ? fs::path(v) : fs::path("runs");
}

fs::path make_run_dir(const fs::path& root, const std::string& label) {
  fs::create_directories(root);
  const std::string base = utc_stamp() + "_" + label;
  for (int k = 0;; ++k) {
    fs::path p = root / (k == 0 ? base : base + "_" + std::to_string(k));
    if (fs::create_directory(p)) return p;
  }
}

void save_policy(const Policy& policy, const std::string& path) {
  json j;
  if (const auto* t = dynamic_cast<const TabularPolicy*>(&policy)) {
    j["format"] = "offirl-tabular-policy";
    j["probs"] = json::array();
    for (int s = 0; s < t->n_states(); ++s) {
      std::vector<double> row;
      for (int a = 0; a < t->n_actions(); ++a) row.push_back(t->prob(s, a));
      j["probs"].push_back(row);
    }
  } else if (const auto* g = dynamic_cast<const GaussianMlpPolicy*>(&policy)) {
    j["format"] = "offirl-gaussian-policy";
    j["net"] = json::parse(g->net().serialize());
  } else {
    throw InvalidParameter("save_policy: unsupported policy type");
  }
  write_text(path, j.dump() + "\n");
}

IrlResult train_to_dir(const ExperimentConfig& config, Algorithm algorithm, std::uint64_t seed, const fs::path& dir,
                       const std::string& variant) {
  config.validate();
  fs::create_directories(dir);
  ExperimentConfig snapshot = config;
  snapshot.algorithm = algorithm;
  snapshot.seed = seed;
  snapshot.seeds = 1;
  write_text(dir / "config.ini", dump_config(snapshot));

  const Environment env = builtin_env(config.env);
  const Datasets data = build_datasets(env, config.data, seed);
  save_dataset(data.expert, (dir / "expert.jsonl").string());
  save_dataset(data.exploratory, (dir / "exploratory.jsonl").string());

  IrlResult r = run_algorithm(algorithm, env, data.expert, data.exploratory, config.cameron, seed);
  write_metrics_csv(r.metrics, (dir / "metrics.csv").string());
  save_policy(*r.policy, (dir / "policy.json").string());
  if (r.cost) write_text(dir / "cost.json", r.cost->serialize() + "\n");

  json meta{{"env", config.env},         {"algorithm", to_string(algorithm)}, {"variant", variant},
            {"seed", seed},              {"best_return", r.best_return},      {"best_normalized", r.best_normalized},
            {"checkpoints", r.cost ? json{"policy.json", "cost.json"} : json{"policy.json"}}};
  write_text(dir / "run.json", meta.dump(2) + "\n");
  return r;
}

std::vector<PolicyPtr> mmd_policy_set(const Environment& env, int count, std::uint64_t seed) {
  if (count < 1) throw InvalidParameter("mmd_policy_set: count must be positive");
  std::vector<PolicyPtr> out;
  for (int k = 0; k < count; ++k) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
    if (env.is_finite()) {
      const FiniteMdp& m = env.finite();
      Mat p(m.n_states, m.n_actions);
      for (int s = 0; s < m.n_states; ++s) {
        for (int a = 0; a < m.n_actions; ++a) p(s, a) = -std::log(1.0 - uniform01(rng));
        p.row(s) /= p.row(s).sum();
      }
      out.push_back(std::make_shared<TabularPolicy>(p));
    } else {
      const auto& c = env.continuous();
      const double eps = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
      out.push_back(std::make_shared<EpsilonUniformPolicy>(reference_policy(env, Quality::expert), eps,
                                                           c.action_dim, c.action_bound));
    }
  }
  return out;
}

MmdCurveResult run_mmd_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const Environment env = builtin_env(config.env);
  const auto policies = mmd_policy_set(env, config.mmd.policies, derive_seed(seed, 200));
  const auto data = generate_dataset(env, Quality::random, config.mmd.dataset_episodes, derive_seed(seed, 201),
                                     config.mmd.dataset_steps);
  return mmd_curve_experiment(env, policies, data, config.mmd.curve, derive_seed(seed, 202));
}

// ---- report ---------------------------------------------------------------------

std::pair<double, double> median_ci95(std::vector<double> values) {
  if (values.empty()) throw InvalidParameter("median_ci95: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  // Largest k with P(Binomial(n, ½) ≤ k−1) ≤ 0.025; interval [x_(k), x_(n−k+1)].
  std::size_t k = 1;
  double cdf = 0.0, pmf = std::pow(0.5, static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    cdf += pmf;
    if (cdf > 0.025) break;
    k = j + 1;
    pmf *= static_cast<double>(n - j) / static_cast<double>(j + 1);
  }
  k = std::min(k, (n + 1) / 2);
  return {values[k - 1], values[n - k]};
}

namespace {

void find_runs(const fs::path& dir, std::vector<fs::path>& out) {
  if (fs::exists(dir / "run.json")) {
    out.push_back(dir);
    return;
  }
  std::vector<fs::path> children;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) children.push_back(e.path());
  std::sort(children.begin(), children.end());
  for (const auto& c : children) find_runs(c, out);
}

// Normalised return at the lowest evaluated raw return, first occurrence.
double best_normalized_from_csv(const fs::path& run) {
  std::ifstream in(run / "metrics.csv");
  if (!in) throw Error("run " + run.string() + ": missing metrics.csv");
  std::string line;
  std::getline(in, line);
  double best_raw = 0.0, best_norm = 0.0;
  bool found = false;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4 || cells[2].empty() || cells[3].empty()) continue;
    const double raw = std::stod(cells[2]);
    if (!found || raw < best_raw) {
      best_raw = raw;
      best_norm = std::stod(cells[3]);
      found = true;
    }
  }
  if (!found) throw Error("run " + run.string() + ": metrics.csv has no evaluated iteration");
  return best_norm;
}

}  // namespace

Report collect_report(const std::vector<fs::path>& dirs) {
  std::vector<fs::path> runs;
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw Error("run " + d.string() + ": not a directory");
    const std::size_t before = runs.size();
    find_runs(d, runs);
    if (runs.size() == before) throw Error("run " + d.string() + ": no run.json found");
  }
  Report report;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& run : runs) {
    std::ifstream in(run / "run.json");
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("run " + run.string() + ": unreadable run.json (" + e.what() + ")");
    }
    ReportRow row;
    row.env = meta.value("env", "");
    row.algorithm = meta.value("algorithm", "");
    row.variant = meta.value("variant", "");
    row.seed = meta.value("seed", std::uint64_t{0});
    row.normalized = best_normalized_from_csv(run);
    report.rows.push_back(row);
    groups[{row.env, row.algorithm, row.variant}].push_back(row.normalized);
  }
  for (const auto& [key, values] : groups) {
    ReportAggregate a;
    std::tie(a.env, a.algorithm, a.variant) = key;
    a.n = values.size();
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    a.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    double sum = 0.0;
    for (double x : values) sum += x;
    a.mean = sum / static_cast<double>(n);
    std::tie(a.ci_low, a.ci_high) = median_ci95(values);
    report.aggregates.push_back(a);
  }
  return report;
}

void write_report_csv(const Report& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17) << "kind,env,algorithm,variant,seed,normalized_return,n,median,mean,ci_low,ci_high\n";
  for (const auto& r : report.rows)
    out << "run," << r.env << ',' << r.algorithm << ',' << r.variant << ',' << r.seed << ',' << r.normalized
        << ",,,,,\n";
  for (const auto& a : report.aggregates)
    out << "aggregate," << a.env << ',' << a.algorithm << ',' << a.variant << ",,," << a.n << ',' << a.median << ','
        << a.mean << ',' << a.ci_low << ',' << a.ci_high << '\n';
}

}  // namespace offirl
