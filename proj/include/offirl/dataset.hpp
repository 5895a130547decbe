#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "offirl/common.hpp"

namespace offirl {

struct TransitionRecord {
  int episode_id = 0;
  int t = 0;
  std::vector<double> state;
  std::vector<double> action;
  std::vector<double> next_state;
  std::optional<double> cost;
  bool terminal = false;

  bool operator==(const TransitionRecord&) const = default;
};

// synthetic marks model rollouts; those never mix into expert data.
enum class DatasetTag { expert, exploratory, mixed, synthetic };
std::string to_string(DatasetTag t);
DatasetTag parse_dataset_tag(const std::string& s);

struct TrajectoryDataset {
  std::vector<TransitionRecord> records;
  DatasetTag tag = DatasetTag::mixed;
  std::string env_name;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  bool operator==(const TrajectoryDataset&) const = default;

  // Throws ValidationError on broken episode structure.
  void validate() const;
  // Indices of the first record of every episode.
  std::vector<std::size_t> episode_starts() const;
};

// Concatenation with episode ids renumbered so they stay unique.
TrajectoryDataset merge_datasets(const std::vector<const TrajectoryDataset*>& parts, DatasetTag tag);

void save_dataset(const TrajectoryDataset& dataset, const std::string& path);
TrajectoryDataset load_dataset(const std::string& path);

// Uniform with replacement.
std::vector<TransitionRecord> sample_batch(const TrajectoryDataset& dataset, std::size_t n, std::uint64_t seed);
std::vector<std::size_t> sample_indices(const TrajectoryDataset& dataset, std::size_t n, Rng& rng);

enum class SourceTag { data, idle, rollout };
std::string to_string(SourceTag t);

// A sampled future pair conditioned on a start state.
struct FutureSample {
  Vec cond;
  Vec state;
  Vec action;
};

struct CostEntry {
  FutureSample sample;
  SourceTag source = SourceTag::data;
};

class CostReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 50'000;
  explicit CostReplayBuffer(std::size_t capacity = kDefaultCapacity);

  void push(CostEntry e);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const CostEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t count(SourceTag tag) const;

 private:
  std::size_t capacity_;
  std::deque<CostEntry> entries_;
};

struct MixtureWeights {
  double f_data = 1.0 / 3.0;
  double f_idle = 1.0 / 3.0;
  double f_rollout = 1.0 / 3.0;

  void validate() const;
};

}  // namespace offirl
