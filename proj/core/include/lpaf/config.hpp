#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpaf/data.hpp"
#include "lpaf/factorize.hpp"
#include "lpaf/mixedrank.hpp"
#include "lpaf/prune.hpp"
#include "lpaf/train.hpp"

namespace lpaf {

// Either a synthetic generator spec or a CSV file; the test split is the tail
// `test_fraction` of the rows.
struct DatasetConfig {
  SyntheticSpec synthetic;
  std::optional<std::string> csv_path;
  Task csv_task = Task::kClassification;
  std::optional<std::size_t> csv_num_classes;
  double test_fraction = 0.25;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{256, 256};
};

struct PruneStageConfig {
  PruneMethod method = PruneMethod::kFirstOrder;
  double v_f = 0.3;
  std::size_t t_i = 100;
  std::size_t t_f = 600;
  std::size_t prune_interval = 16;
  std::vector<std::size_t> layers;  // empty: all but the output layer
  TrainConfig train;                // train.steps is the schedule's T
  SparsitySchedule schedule(double kept_fraction) const;
  SparsitySchedule schedule() const { return schedule(v_f); }
};

struct FactorizeStageConfig {
  // Exactly one of k / k_fraction drives the uniform rank. k_fraction picks
  // the k whose factor parameters come closest to that share of the dense
  // parameters of the selected layers.
  std::optional<std::size_t> k;  // kFullRank allowed
  std::optional<double> k_fraction = 0.25;
  std::map<std::size_t, std::size_t> k_per_layer;
  Weighting weighting = Weighting::kScore;
  std::vector<std::size_t> layers;
  double epsilon_floor = kDefaultImportanceFloor;
};

struct FinetuneStageConfig {
  MixedRankConfig mixed;  // mixed.seed is ignored; stage seeds come from the run seed
  TrainConfig train;
};

struct StudyConfig {
  std::vector<double> budgets{0.75, 0.50, 0.25, 0.10};
};

struct AblationConfig {
  std::vector<double> v_grid{0.75, 0.50, 0.25, 0.10};
  std::vector<Weighting> weightings{Weighting::kScore, Weighting::kMask, Weighting::kNone};
  std::vector<double> lambdas{0.0, 1.0};
  std::vector<double> p_init_grid{0.0, 0.1, 0.3, 0.5, 0.7};
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig dense;
  PruneStageConfig prune;
  FactorizeStageConfig factorize;
  FinetuneStageConfig finetune;
  StudyConfig study;
  AblationConfig ablation;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string output_dir = "runs/lpaf";

  // Desk-task defaults (what an empty JSON object loads to).
  static ExperimentConfig defaults();
  void validate() const;
};

// Parses JSON text; missing keys take the defaults, unknown keys and
// out-of-range values throw ErrorKind::kConfig naming the key path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field written out explicitly.
std::string config_to_json(const ExperimentConfig& config);

// Materializes the configured dataset and splits it.
DataSplit load_dataset(const DatasetConfig& config);

}  // namespace lpaf
