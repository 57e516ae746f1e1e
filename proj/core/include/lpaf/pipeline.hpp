#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpaf/analysis.hpp"
#include "lpaf/config.hpp"
#include "lpaf/data.hpp"
#include "lpaf/nn.hpp"

namespace lpaf {

// Per-stage seeds are derived from the run seed so that each stage owns an
// independent stream.
enum class StageSeed : std::uint64_t {
  kInit = 0x1417,
  kDense = 0xDE45,
  kPrune = 0x9A1E,
  kFinetune = 0xF17E,
  kGates = 0x6A7E,
};
std::uint64_t stage_seed(std::uint64_t run_seed, StageSeed stage);

// Holds the config, the materialized dataset and trained dense baselines
// (one per seed, trained on first use).
class Workbench {
 public:
  explicit Workbench(ExperimentConfig config);
  Workbench(ExperimentConfig config, DataSplit data);

  const ExperimentConfig& config() const { return config_; }
  const DataSplit& data() const { return data_; }

  const MlpModel& dense(std::uint64_t seed);
  // Uses `model` as the seed's dense baseline instead of training one.
  void set_dense(std::uint64_t seed, MlpModel model);

  // Test-split metric: accuracy for classification, MSE for regression.
  double metric(const MlpModel& model) const;

  // Step-1 on the seed's dense model at kept fraction v.
  MlpModel prune(std::uint64_t seed, double v, PruneMethod method,
                 const PruneOptions* extra = nullptr);
  // Step-2 with the configured rank (or `k` when given) and weighting.
  MlpModel factorize(const MlpModel& sparse, std::optional<Weighting> weighting = std::nullopt,
                     std::optional<std::size_t> k = std::nullopt) const;
  // Step-3 with the configured schedule; `mixed` overrides p_init/decay/lambda.
  MlpModel finetune(const MlpModel& factorized, std::uint64_t seed,
                    std::optional<MixedRankConfig> mixed = std::nullopt,
                    MixedRankLog* log = nullptr) const;
  // Plain task-loss training with the fine-tuning budget.
  MlpModel retrain(const MlpModel& model, std::uint64_t seed) const;

  // Uniform rank from factorize.k or factorize.k_fraction for `model`.
  std::size_t configured_rank(const MlpModel& model) const;
  std::vector<std::size_t> prune_layers(const MlpModel& model) const;
  std::vector<std::size_t> factorize_layers(const MlpModel& model) const;

 private:
  ExperimentConfig config_;
  DataSplit data_;
  std::map<std::uint64_t, MlpModel> dense_;
};

struct StageReport {
  std::string name;  // dense, sparse, factorized, final
  double metric = 0.0;
  ModelStats stats;
  double seconds = 0.0;
  std::string checkpoint;  // empty when nothing was written
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string metric_name;  // accuracy or mse
  std::string config_json;
  std::size_t rank_k = 0;
  std::vector<StageReport> stages;
  std::vector<std::string> outputs;

  const StageReport& stage(const std::string& name) const;
};

struct RunOptions {
  // Writes checkpoints, stats CSVs, telemetry and report.json under this
  // directory when set.
  std::optional<std::filesystem::path> out_dir;
  // Per-event rank telemetry during Step-1 (one SVD per layer per event).
  bool prune_rank_telemetry = false;
};

// dense -> Step-1 (pruning) -> Step-2 (factorization) -> Step-3 (mixed-rank
// fine-tuning). Stage errors are rethrown prefixed with the stage name;
// checkpoints of completed stages stay on disk.
RunReport lpaf_run(Workbench& bench, std::uint64_t seed, const RunOptions& options = {});
RunReport lpaf_run(const ExperimentConfig& config, const RunOptions& options = {});
std::string report_to_json(const RunReport& report);

struct StudyRow {
  std::uint64_t seed = 0;
  double budget = 1.0;
  std::string arm;  // dense, svd_ft, up_zero, up_first
  double metric = 0.0;
  double average_rank = 0.0;
  double zero_row_fraction = 0.0;  // mean over compressible layers
  std::size_t rank_k = 0;          // svd_ft only
  std::size_t parameters = 0;      // kept parameters of the compressible layers
};

struct StudyResult {
  std::vector<StudyRow> rows;
  const StudyRow& find(std::uint64_t seed, double budget, const std::string& arm) const;
};

// For every seed and budget: SVD_Ft (truncate the dense model at the matching
// k, retrain with the task loss), UP_zero and UP_first (prune to the budget).
StudyResult preliminary_study(Workbench& bench);
// Header: seed,budget,arm,metric,average_rank,zero_row_fraction,k,parameters
std::string study_csv(const StudyResult& result);
// Means over seeds. Header: budget,arm,metric_mean,average_rank_mean,seeds
std::string study_summary_csv(const StudyResult& result);

struct AblationRow {
  std::string table;    // sparsity, weighting, mixed, p_init
  std::uint64_t seed = 0;
  std::string variant;  // e.g. "v=0.25", "score", "lambda=1", "p_init=0.3"
  double v = 0.0;
  std::size_t k = 0;
  double sparse_rank = 0.0;  // average rank of T_sparse
  double before = 0.0;       // metric right after Step-2
  double after = 0.0;        // metric after Step-3
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationRow> table(const std::string& name) const;
  const AblationRow& find(const std::string& table, std::uint64_t seed,
                          const std::string& variant) const;
};

// sparsity: v grid, vanilla SVD and vanilla fine-tuning at the configured k.
// weighting: each weighting on T_sparse(prune.v_f), then default Step-3.
// mixed: vanilla fine-tuning plus p_init with every lambda in the grid.
// p_init: each p_init with the configured lambda.
// Empty grids skip their table.
AblationResult ablation_suite(Workbench& bench);
// Header: table,seed,variant,v,k,sparse_rank,before,after
std::string ablation_csv(const AblationResult& result);

std::string format_real(double value);

}  // namespace lpaf
