#include "lpaf/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>

#include "json.hpp"

#include "lpaf/error.hpp"
#include "lpaf/io.hpp"
#include "lpaf/rng.hpp"

namespace lpaf {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::uint64_t stage_seed(std::uint64_t run_seed, StageSeed stage) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(stage));
}

std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

Workbench::Workbench(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  data_ = load_dataset(config_.dataset);
}

Workbench::Workbench(ExperimentConfig config, DataSplit data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
}

const MlpModel& Workbench::dense(std::uint64_t seed) {
  auto it = dense_.find(seed);
  if (it != dense_.end()) return it->second;
  const Dataset& train_set = data_.train;
  MlpModel model = MlpModel::create(train_set.input_dim(), config_.model.hidden,
                                    train_set.output_dim(), train_set.task,
                                    stage_seed(seed, StageSeed::kInit));
  TrainConfig t = config_.dense;
  t.seed = stage_seed(seed, StageSeed::kDense);
  train(model, train_set, t);
  return dense_.emplace(seed, std::move(model)).first->second;
}

void Workbench::set_dense(std::uint64_t seed, MlpModel model) {
  model.validate();
  if (model.input_dim() != data_.train.input_dim() ||
      model.output_dim() != data_.train.output_dim()) {
    throw Error(ErrorKind::kShapeMismatch, "dense model does not match the dataset dimensions");
  }
  dense_.insert_or_assign(seed, std::move(model));
}

double Workbench::metric(const MlpModel& model) const {
  return evaluate(model, data_.test);
}

std::vector<std::size_t> Workbench::prune_layers(const MlpModel& model) const {
  return config_.prune.layers.empty() ? default_compressible_layers(model) : config_.prune.layers;
}

std::vector<std::size_t> Workbench::factorize_layers(const MlpModel& model) const {
  return config_.factorize.layers.empty() ? default_compressible_layers(model)
                                          : config_.factorize.layers;
}

std::size_t Workbench::configured_rank(const MlpModel& model) const {
  if (config_.factorize.k) return *config_.factorize.k;
  const auto layers = factorize_layers(model);
  return rank_for_fraction(model, layers, *config_.factorize.k_fraction);
}

MlpModel Workbench::prune(std::uint64_t seed, double v, PruneMethod method,
                          const PruneOptions* extra) {
  const MlpModel& start = dense(seed);
  PruneOptions options = extra ? *extra : PruneOptions{};
  options.method = method;
  options.prune_interval = config_.prune.prune_interval;
  options.layers = config_.prune.layers;
  TrainConfig t = config_.prune.train;
  t.seed = stage_seed(seed, StageSeed::kPrune);
  return run_pruning(start, data_.train, config_.prune.schedule(v), t, options);
}

MlpModel Workbench::factorize(const MlpModel& sparse, std::optional<Weighting> weighting,
                              std::optional<std::size_t> k) const {
  FactorizeSpec spec;
  spec.k = k ? *k : configured_rank(sparse);
  spec.k_per_layer = config_.factorize.k_per_layer;
  spec.weighting = weighting.value_or(config_.factorize.weighting);
  spec.layers = config_.factorize.layers;
  spec.epsilon_floor = config_.factorize.epsilon_floor;
  return factorize_model(sparse, spec);
}

MlpModel Workbench::finetune(const MlpModel& factorized, std::uint64_t seed,
                             std::optional<MixedRankConfig> mixed, MixedRankLog* log) const {
  MixedRankConfig m = mixed.value_or(config_.finetune.mixed);
  m.seed = stage_seed(seed, StageSeed::kGates);
  TrainConfig t = config_.finetune.train;
  t.seed = stage_seed(seed, StageSeed::kFinetune);
  MlpModel model = factorized;
  MixedRankLog result = mixed_rank_finetune(model, data_.train, m, t);
  if (log) *log = std::move(result);
  return model;
}

MlpModel Workbench::retrain(const MlpModel& model, std::uint64_t seed) const {
  TrainConfig t = config_.finetune.train;
  t.seed = stage_seed(seed, StageSeed::kFinetune);
  MlpModel out = model;
  train(out, data_.train, t);
  return out;
}

const StageReport& RunReport::stage(const std::string& name) const {
  for (const StageReport& s : stages) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::kInvalidArgument, "report has no stage '" + name + "'");
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string prune_telemetry_csv(const std::vector<PruneTelemetryRow>& rows) {
  std::string out = "step,layer,v_t,nonzeros,numerical_rank\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + std::to_string(r.layer) + "," + format_real(r.v_t) +
           "," + std::to_string(r.nonzeros) + "," + std::to_string(r.numerical_rank) + "\n";
  }
  return out;
}

std::string finetune_telemetry_csv(const MixedRankLog& log) {
  std::string out = "step,p,task_loss_first,task_loss_second,consistency\n";
  for (const auto& r : log.rows) {
    out += std::to_string(r.step) + "," + format_real(r.p) + "," +
           format_real(r.task_loss_first) + "," + format_real(r.task_loss_second) + "," +
           format_real(r.consistency) + "\n";
  }
  return out;
}

ordered_json stats_json(const ModelStats& stats) {
  ordered_json layers = ordered_json::array();
  for (const LayerStats& l : stats.layers) {
    ordered_json j;
    j["name"] = l.name;
    j["kind"] = std::string(to_string(l.kind));
    j["rows"] = l.rows;
    j["cols"] = l.cols;
    j["k"] = l.rank_k;
    j["nonzeros"] = l.nonzeros;
    j["kept_fraction"] = l.kept_fraction;
    j["numerical_rank"] = l.numerical_rank;
    j["zero_row_fraction"] = l.zero_row_fraction;
    j["parameters"] = l.parameters;
    j["kept_parameters"] = l.kept_parameters;
    j["flops"] = l.flops;
    layers.push_back(j);
  }
  ordered_json j;
  j["parameters"] = stats.parameters;
  j["kept_parameters"] = stats.kept_parameters;
  j["flops_per_sample"] = stats.flops_per_sample;
  j["average_rank"] = stats.average_rank;
  j["rank_tolerance"] = stats.rank_tolerance;
  j["layers"] = layers;
  return j;
}

double mean_zero_rows(const ModelStats& stats) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const LayerStats& l : stats.layers) {
    if (!l.factorizable) continue;
    sum += l.zero_row_fraction;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::size_t compressible_kept(const ModelStats& stats) {
  std::size_t n = 0;
  for (const LayerStats& l : stats.layers) {
    if (l.factorizable) n += l.nonzeros;
  }
  return n;
}

}  // namespace

RunReport lpaf_run(Workbench& bench, std::uint64_t seed, const RunOptions& options) {
  const ExperimentConfig& cfg = bench.config();
  RunReport report;
  report.seed = seed;
  report.metric_name = bench.data().test.task == Task::kClassification ? "accuracy" : "mse";
  report.config_json = config_to_json(cfg);

  const std::optional<fs::path>& out = options.out_dir;
  if (out) {
    fs::create_directories(*out);
    write_text_file(*out / "config.json", report.config_json);
    report.outputs.push_back((*out / "config.json").string());
  }

  auto record = [&](const std::string& name, const MlpModel& model, double seconds) {
    StageReport s;
    s.name = name;
    s.metric = bench.metric(model);
    s.stats = model_stats(model);
    s.seconds = seconds;
    if (out) {
      const fs::path dir = *out / name;
      save_checkpoint(model, dir);
      s.checkpoint = dir.string();
      const fs::path csv = *out / ("stats_" + name + ".csv");
      write_text_file(csv, model_stats_csv(s.stats));
      report.outputs.push_back(csv.string());
    }
    report.stages.push_back(std::move(s));
  };
  auto stage = [&](const std::string& name, auto&& body) {
    try {
      return body();
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + name + ": " + e.message());
    }
  };

  auto t0 = std::chrono::steady_clock::now();
  const MlpModel dense = stage("dense", [&] { return bench.dense(seed); });
  record("dense", dense, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  std::vector<PruneTelemetryRow> telemetry;
  PruneOptions extra;
  if (options.prune_rank_telemetry) {
    extra.telemetry = [&](const PruneTelemetryRow& r) { telemetry.push_back(r); };
  }
  const MlpModel sparse = stage("sparse", [&] {
    return bench.prune(seed, cfg.prune.v_f, cfg.prune.method, &extra);
  });
  record("sparse", sparse, seconds_since(t0));
  if (out && options.prune_rank_telemetry) {
    write_text_file(*out / "prune_telemetry.csv", prune_telemetry_csv(telemetry));
    report.outputs.push_back((*out / "prune_telemetry.csv").string());
  }

  t0 = std::chrono::steady_clock::now();
  report.rank_k = bench.configured_rank(sparse);
  const MlpModel factorized = stage("factorized", [&] { return bench.factorize(sparse); });
  record("factorized", factorized, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  MixedRankLog log;
  const MlpModel final_model =
      stage("final", [&] { return bench.finetune(factorized, seed, std::nullopt, &log); });
  record("final", final_model, seconds_since(t0));
  if (out) {
    write_text_file(*out / "finetune_telemetry.csv", finetune_telemetry_csv(log));
    report.outputs.push_back((*out / "finetune_telemetry.csv").string());
    report.outputs.push_back((*out / "report.json").string());
    write_text_file(*out / "report.json", report_to_json(report));
  }
  return report;
}

RunReport lpaf_run(const ExperimentConfig& config, const RunOptions& options) {
  Workbench bench(config);
  return lpaf_run(bench, config.seed, options);
}

std::string report_to_json(const RunReport& report) {
  ordered_json j;
  j["seed"] = report.seed;
  j["metric"] = report.metric_name;
  j["k"] = report.rank_k == kFullRank ? ordered_json("full") : ordered_json(report.rank_k);
  ordered_json stages = ordered_json::array();
  for (const StageReport& s : report.stages) {
    ordered_json st;
    st["name"] = s.name;
    st["metric"] = s.metric;
    st["seconds"] = s.seconds;
    st["checkpoint"] = s.checkpoint;
    st["stats"] = stats_json(s.stats);
    stages.push_back(st);
  }
  j["stages"] = stages;
  if (!report.stages.empty() && report.stages.front().name == "dense") {
    const double dense = report.stages.front().metric;
    const double last = report.stages.back().metric;
    j["final_over_dense"] = dense != 0.0 ? last / dense : 0.0;
  }
  j["outputs"] = report.outputs;
  j["config"] = ordered_json::parse(report.config_json);
  return j.dump(2) + "\n";
}

const StudyRow& StudyResult::find(std::uint64_t seed, double budget,
                                  const std::string& arm) const {
  for (const StudyRow& r : rows) {
    if (r.seed == seed && r.arm == arm && (arm == "dense" || r.budget == budget)) return r;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "study has no row for arm " + arm + " at budget " + format_real(budget));
}

StudyResult preliminary_study(Workbench& bench) {
  const ExperimentConfig& cfg = bench.config();
  StudyResult result;
  for (std::uint64_t seed : cfg.seeds) {
    const MlpModel& dense = bench.dense(seed);
    const auto layers = bench.factorize_layers(dense);
    {
      const ModelStats stats = model_stats(dense);
      result.rows.push_back({seed, 1.0, "dense", bench.metric(dense), stats.average_rank,
                             mean_zero_rows(stats), 0, compressible_kept(stats)});
    }
    for (double budget : cfg.study.budgets) {
      {
        const std::size_t k = rank_for_fraction(dense, layers, budget);
        FactorizeSpec spec;
        spec.k = k;
        spec.weighting = Weighting::kNone;
        spec.layers = cfg.factorize.layers;
        const MlpModel svd_ft = bench.retrain(factorize_model(dense, spec), seed);
        const ModelStats stats = model_stats(svd_ft);
        std::size_t params = 0;
        for (const LayerStats& l : stats.layers) {
          if (l.kind == LayerKind::kFactorized) params += l.nonzeros;
        }
        result.rows.push_back({seed, budget, "svd_ft", bench.metric(svd_ft), stats.average_rank,
                               mean_zero_rows(stats), k, params});
      }
      for (PruneMethod method : {PruneMethod::kZeroOrder, PruneMethod::kFirstOrder}) {
        const MlpModel sparse = bench.prune(seed, budget, method);
        const ModelStats stats = model_stats(sparse);
        const std::string arm =
            method == PruneMethod::kZeroOrder ? "up_zero" : "up_first";
        result.rows.push_back({seed, budget, arm, bench.metric(sparse), stats.average_rank,
                               mean_zero_rows(stats), 0, compressible_kept(stats)});
      }
    }
  }
  return result;
}

std::string study_csv(const StudyResult& result) {
  std::string out = "seed,budget,arm,metric,average_rank,zero_row_fraction,k,parameters\n";
  for (const StudyRow& r : result.rows) {
    out += std::to_string(r.seed) + "," + format_real(r.budget) + "," + r.arm + "," +
           format_real(r.metric) + "," + format_real(r.average_rank) + "," +
           format_real(r.zero_row_fraction) + "," + std::to_string(r.rank_k) + "," +
           std::to_string(r.parameters) + "\n";
  }
  return out;
}

std::string study_summary_csv(const StudyResult& result) {
  struct Acc {
    double metric = 0.0, rank = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::pair<std::pair<double, std::string>, Acc>> groups;
  for (const StudyRow& r : result.rows) {
    const auto key = std::make_pair(r.budget, r.arm);
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {}});
      it = groups.end() - 1;
    }
    it->second.metric += r.metric;
    it->second.rank += r.average_rank;
    ++it->second.n;
  }
  std::string out = "budget,arm,metric_mean,average_rank_mean,seeds\n";
  for (const auto& [key, acc] : groups) {
    const double n = static_cast<double>(acc.n);
    out += format_real(key.first) + "," + key.second + "," + format_real(acc.metric / n) + "," +
           format_real(acc.rank / n) + "," + std::to_string(acc.n) + "\n";
  }
  return out;
}

std::vector<AblationRow> AblationResult::table(const std::string& name) const {
  std::vector<AblationRow> out;
  for (const AblationRow& r : rows) {
    if (r.table == name) out.push_back(r);
  }
  return out;
}

const AblationRow& AblationResult::find(const std::string& table, std::uint64_t seed,
                                        const std::string& variant) const {
  for (const AblationRow& r : rows) {
    if (r.table == table && r.seed == seed && r.variant == variant) return r;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "ablation has no row " + table + "/" + variant + " for seed " + std::to_string(seed));
}

AblationResult ablation_suite(Workbench& bench) {
  const ExperimentConfig& cfg = bench.config();
  const AblationConfig& grid = cfg.ablation;
  AblationResult result;
  MixedRankConfig vanilla;
  vanilla.p_init = 0.0;
  vanilla.consistency_weight = 0.0;

  for (std::uint64_t seed : cfg.seeds) {
    for (double v : grid.v_grid) {
      const MlpModel sparse = bench.prune(seed, v, cfg.prune.method);
      const MlpModel fact = bench.factorize(sparse, Weighting::kNone);
      AblationRow row;
      row.table = "sparsity";
      row.seed = seed;
      row.variant = "v=" + format_real(v);
      row.v = v;
      row.k = bench.configured_rank(sparse);
      row.sparse_rank = model_stats(sparse).average_rank;
      row.before = bench.metric(fact);
      row.after = bench.metric(bench.finetune(fact, seed, vanilla));
      result.rows.push_back(row);
    }

    const bool needs_base =
        !grid.weightings.empty() || !grid.lambdas.empty() || !grid.p_init_grid.empty();
    if (!needs_base) continue;
    const double v = cfg.prune.v_f;
    const MlpModel sparse = bench.prune(seed, v, cfg.prune.method);
    const std::size_t k = bench.configured_rank(sparse);
    const double sparse_rank = model_stats(sparse).average_rank;
    auto base_row = [&](const std::string& table, const std::string& variant) {
      AblationRow row;
      row.table = table;
      row.seed = seed;
      row.variant = variant;
      row.v = v;
      row.k = k;
      row.sparse_rank = sparse_rank;
      return row;
    };

    for (Weighting w : grid.weightings) {
      const MlpModel fact = bench.factorize(sparse, w);
      AblationRow row = base_row("weighting", std::string(to_string(w)));
      row.before = bench.metric(fact);
      row.after = bench.metric(bench.finetune(fact, seed));
      result.rows.push_back(row);
    }

    if (grid.lambdas.empty() && grid.p_init_grid.empty()) continue;
    const MlpModel fact = bench.factorize(sparse);
    const double before = bench.metric(fact);
    if (!grid.lambdas.empty()) {
      AblationRow row = base_row("mixed", "vanilla");
      row.before = before;
      row.after = bench.metric(bench.finetune(fact, seed, vanilla));
      result.rows.push_back(row);
      for (double lambda : grid.lambdas) {
        MixedRankConfig m = cfg.finetune.mixed;
        m.consistency_weight = lambda;
        AblationRow r = base_row("mixed", "lambda=" + format_real(lambda));
        r.before = before;
        r.after = bench.metric(bench.finetune(fact, seed, m));
        result.rows.push_back(r);
      }
    }
    for (double p : grid.p_init_grid) {
      MixedRankConfig m = cfg.finetune.mixed;
      m.p_init = p;
      m.decay.reset();
      AblationRow row = base_row("p_init", "p_init=" + format_real(p));
      row.before = before;
      row.after = bench.metric(bench.finetune(fact, seed, m));
      result.rows.push_back(row);
    }
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out = "table,seed,variant,v,k,sparse_rank,before,after\n";
  for (const AblationRow& r : result.rows) {
    out += r.table + "," + std::to_string(r.seed) + "," + r.variant + "," + format_real(r.v) +
           "," + std::to_string(r.k) + "," + format_real(r.sparse_rank) + "," +
           format_real(r.before) + "," + format_real(r.after) + "\n";
  }
  return out;
}

}  // namespace lpaf
