#include "offirl/dataset.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

namespace offirl {

using nlohmann::json;

std::string to_string(DatasetTag t) {
  switch (t) {
    case DatasetTag::expert: return "expert";
    case DatasetTag::exploratory: return "exploratory";
    case DatasetTag::mixed: return "mixed";
    case DatasetTag::synthetic: return "synthetic";
  }
  return "?";
}

DatasetTag parse_dataset_tag(const std::string& s) {
  if (s == "expert") return DatasetTag::expert;
  if (s == "exploratory") return DatasetTag::exploratory;
  if (s == "mixed") return DatasetTag::mixed;
  if (s == "synthetic") return DatasetTag::synthetic;
  throw ParseError("unknown dataset tag '" + s + "'");
}

void TrajectoryDataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.state.empty() || r.action.empty() || r.next_state.size() != r.state.size())
      throw ValidationError("record " + std::to_string(i) + ": empty or inconsistent vectors");
    if (i + 1 < records.size() && records[i + 1].episode_id == r.episode_id) {
      const auto& n = records[i + 1];
      if (n.t <= r.t)
        throw ValidationError("record " + std::to_string(i + 1) + ": time index not increasing within episode " +
                              std::to_string(r.episode_id));
      if (n.state != r.next_state)
        throw ValidationError("record " + std::to_string(i) + ": next_state differs from the following state in episode " +
                              std::to_string(r.episode_id));
    }
  }
}

std::vector<std::size_t> TrajectoryDataset::episode_starts() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (i == 0 || records[i].episode_id != records[i - 1].episode_id) out.push_back(i);
  return out;
}

TrajectoryDataset merge_datasets(const std::vector<const TrajectoryDataset*>& parts, DatasetTag tag) {
  TrajectoryDataset out;
  out.tag = tag;
  int next_id = 0;
  for (const auto* p : parts) {
    if (out.env_name.empty()) out.env_name = p->env_name;
    if (p->env_name != out.env_name) throw InvalidParameter("merge_datasets: environments differ");
    if (tag == DatasetTag::expert && p->tag == DatasetTag::synthetic)
      throw ValidationError("merge_datasets: synthetic records cannot enter an expert dataset");
    std::map<int, int> remap;
    for (auto r : p->records) {
      auto [it, inserted] = remap.try_emplace(r.episode_id, next_id);
      if (inserted) ++next_id;
      r.episode_id = it->second;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

void save_dataset(const TrajectoryDataset& dataset, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  json header = {{"schema", 1}, {"env_name", dataset.env_name}, {"tag", to_string(dataset.tag)}};
  os << header.dump() << '\n';
  for (const auto& r : dataset.records) {
    json j = {{"episode_id", r.episode_id}, {"t", r.t},          {"state", r.state},
              {"action", r.action},         {"next_state", r.next_state}, {"terminal", r.terminal}};
    if (r.cost) j["cost"] = *r.cost;
    os << j.dump() << '\n';
  }
  if (!os) throw Error("write to '" + path + "' failed");
}

namespace {
template <class T>
T field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end())
    throw ParseError("line " + std::to_string(line) + ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError("line " + std::to_string(line) + ": field '" + name + "' has the wrong type");
  }
}
}  // namespace

TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  TrajectoryDataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(is, text)) {
    ++line;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
    if (!have_header) {
      if (field<int>(j, "schema", line) != 1) throw ParseError("line 1: unsupported schema version");
      ds.env_name = field<std::string>(j, "env_name", line);
      ds.tag = parse_dataset_tag(field<std::string>(j, "tag", line));
      have_header = true;
      continue;
    }
    TransitionRecord r;
    r.episode_id = field<int>(j, "episode_id", line);
    r.t = field<int>(j, "t", line);
    r.state = field<std::vector<double>>(j, "state", line);
    r.action = field<std::vector<double>>(j, "action", line);
    r.next_state = field<std::vector<double>>(j, "next_state", line);
    r.terminal = j.value("terminal", false);
    if (auto it = j.find("cost"); it != j.end() && !it->is_null()) r.cost = it->get<double>();
    ds.records.push_back(std::move(r));
  }
  if (!have_header) throw ParseError("'" + path + "': missing header line");
  ds.validate();
  return ds;
}

std::vector<std::size_t> sample_indices(const TrajectoryDataset& dataset, std::size_t n, Rng& rng) {
  if (dataset.empty()) throw EmptyDataset("sample_batch: dataset is empty");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = uniform_index(rng, dataset.size());
  return idx;
}

std::vector<TransitionRecord> sample_batch(const TrajectoryDataset& dataset, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<TransitionRecord> out;
  out.reserve(n);
  for (auto i : sample_indices(dataset, n, rng)) out.push_back(dataset.records[i]);
  return out;
}

std::string to_string(SourceTag t) {
  switch (t) {
    case SourceTag::data: return "data";
    case SourceTag::idle: return "idle";
    case SourceTag::rollout: return "rollout";
  }
  return "?";
}

CostReplayBuffer::CostReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw InvalidParameter("cost buffer: capacity must be positive");
}

void CostReplayBuffer::push(CostEntry e) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(e));
}

std::size_t CostReplayBuffer::count(SourceTag tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.source == tag;
  return n;
}

void MixtureWeights::validate() const {
  for (double f : {f_data, f_idle, f_rollout})
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidParameter("mixture weights must lie in [0,1]");
  if (std::abs(f_data + f_idle + f_rollout - 1.0) > 1e-9)
    throw InvalidParameter("mixture weights must sum to 1");
}

}  // namespace offirl
