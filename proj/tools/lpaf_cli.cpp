// lpaf command-line front end. Every command prints one JSON line on success;
// failures print one JSON line {"error": kind, "message": ...} to stderr.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "lpaf/analysis.hpp"
#include "lpaf/config.hpp"
#include "lpaf/error.hpp"
#include "lpaf/io.hpp"
#include "lpaf/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out, bool needs_checkpoint) {
  cmd->add_option("--config", c.config, "experiment config (JSON); defaults when omitted");
  cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  auto* ckpt = cmd->add_option("--checkpoint", c.checkpoint, "input checkpoint directory");
  if (needs_out) out->required();
  if (needs_checkpoint) ckpt->required();
}

lpaf::ExperimentConfig load(const Common& c) {
  lpaf::ExperimentConfig cfg =
      c.config.empty() ? lpaf::ExperimentConfig::defaults() : lpaf::load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.seeds = {*c.seed};
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

void emit(ordered_json j) {
  std::cout << j.dump() << std::endl;
}

ordered_json stage_line(const std::string& command, const lpaf::Workbench& bench,
                        const lpaf::MlpModel& model, const fs::path& out) {
  const lpaf::ModelStats stats = lpaf::model_stats(model);
  ordered_json j;
  j["command"] = command;
  j["metric"] = bench.metric(model);
  j["parameters"] = stats.parameters;
  j["kept_parameters"] = stats.kept_parameters;
  j["flops_per_sample"] = stats.flops_per_sample;
  j["average_rank"] = stats.average_rank;
  j["checkpoint"] = out.string();
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpaf: prune, factorize and fine-tune small MLPs"};
  app.require_subcommand(1);

  Common c;
  bool telemetry = false;
  std::optional<double> v_f;
  std::string method;
  std::optional<std::string> k_text;
  std::string weighting;
  std::optional<double> p_init;
  std::optional<double> lambda;
  std::size_t layer = 0;
  std::string stem = "layer";

  auto* train_cmd = app.add_subcommand("train", "train the dense baseline");
  add_common(train_cmd, c, true, false);

  auto* prune_cmd = app.add_subcommand("prune", "Step-1: prune a dense model");
  add_common(prune_cmd, c, true, false);
  prune_cmd->add_option("--v-f", v_f, "final kept fraction");
  prune_cmd->add_option("--method", method, "first_order or zero_order");

  auto* factorize_cmd = app.add_subcommand("factorize", "Step-2: factorize a pruned model");
  add_common(factorize_cmd, c, true, true);
  factorize_cmd->add_option("--k", k_text, "uniform rank or 'full'");
  factorize_cmd->add_option("--weighting", weighting, "score, mask or none");

  auto* finetune_cmd = app.add_subcommand("finetune", "Step-3: mixed-rank fine-tuning");
  add_common(finetune_cmd, c, true, true);
  finetune_cmd->add_option("--p-init", p_init, "initial gate probability");
  finetune_cmd->add_option("--lambda", lambda, "consistency weight");

  auto* pipeline_cmd = app.add_subcommand("pipeline", "dense -> prune -> factorize -> finetune");
  add_common(pipeline_cmd, c, false, false);
  pipeline_cmd->add_flag("--telemetry", telemetry, "record ranks at every pruning event");

  auto* study_cmd = app.add_subcommand("study", "SVD_Ft vs UP_zero vs UP_first over budgets");
  add_common(study_cmd, c, false, false);

  auto* ablate_cmd = app.add_subcommand("ablate", "sparsity, weighting, mixed-rank, p_init grids");
  add_common(ablate_cmd, c, false, false);

  auto* stats_cmd = app.add_subcommand("stats", "per-layer statistics of a checkpoint (CSV)");
  add_common(stats_cmd, c, false, true);

  auto* export_cmd = app.add_subcommand("export-pattern", "write a sparse layer's mask as PGM");
  add_common(export_cmd, c, true, true);
  export_cmd->add_option("--layer", layer, "layer index")->required();
  export_cmd->add_option("--stem", stem, "output file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    ordered_json j;
    j["error"] = "usage";
    j["message"] = e.what();
    std::cerr << j.dump() << std::endl;
    return 64;
  }

  try {
    const fs::path out = c.out;
    if (*stats_cmd) {
      const lpaf::MlpModel model = lpaf::load_checkpoint(c.checkpoint);
      const std::string csv = lpaf::model_stats_csv(lpaf::model_stats(model));
      if (c.out.empty()) {
        std::cout << csv;
      } else {
        lpaf::write_text_file(out, csv);
        emit({{"command", "stats"}, {"csv", out.string()}});
      }
      return 0;
    }
    if (*export_cmd) {
      const lpaf::MlpModel model = lpaf::load_checkpoint(c.checkpoint);
      if (layer >= model.layers.size()) {
        throw lpaf::Error(lpaf::ErrorKind::kInvalidArgument,
                          "layer " + std::to_string(layer) + " out of range");
      }
      const auto ex = lpaf::sparsity_pattern_export(model.layers[layer], out, stem);
      emit({{"command", "export-pattern"},
            {"pgm", ex.pgm.string()},
            {"histogram", ex.histogram.string()},
            {"nonzero_rows", ex.nonzero_rows},
            {"zero_rows", ex.zero_rows}});
      return 0;
    }

    lpaf::ExperimentConfig cfg = load(c);
    if (*prune_cmd) {
      if (v_f) cfg.prune.v_f = *v_f;
      if (!method.empty()) cfg.prune.method = lpaf::prune_method_from_string(method);
    }
    if (*factorize_cmd) {
      if (k_text) {
        cfg.factorize.k = *k_text == "full" ? lpaf::kFullRank : std::stoull(*k_text);
        cfg.factorize.k_fraction.reset();
      }
      if (!weighting.empty()) cfg.factorize.weighting = lpaf::weighting_from_string(weighting);
    }
    if (*finetune_cmd) {
      if (p_init) cfg.finetune.mixed.p_init = *p_init;
      if (lambda) cfg.finetune.mixed.consistency_weight = *lambda;
    }
    cfg.validate();
    lpaf::Workbench bench(cfg);
    const std::uint64_t seed = cfg.seed;

    if (*train_cmd) {
      const lpaf::MlpModel& dense = bench.dense(seed);
      lpaf::save_checkpoint(dense, out);
      emit(stage_line("train", bench, dense, out));
    } else if (*prune_cmd) {
      if (!c.checkpoint.empty()) bench.set_dense(seed, lpaf::load_checkpoint(c.checkpoint));
      const lpaf::MlpModel sparse = bench.prune(seed, cfg.prune.v_f, cfg.prune.method);
      lpaf::save_checkpoint(sparse, out);
      emit(stage_line("prune", bench, sparse, out));
    } else if (*factorize_cmd) {
      const lpaf::MlpModel fact = bench.factorize(lpaf::load_checkpoint(c.checkpoint));
      lpaf::save_checkpoint(fact, out);
      emit(stage_line("factorize", bench, fact, out));
    } else if (*finetune_cmd) {
      lpaf::MixedRankLog log;
      const lpaf::MlpModel final_model =
          bench.finetune(lpaf::load_checkpoint(c.checkpoint), seed, std::nullopt, &log);
      lpaf::save_checkpoint(final_model, out);
      emit(stage_line("finetune", bench, final_model, out));
    } else if (*pipeline_cmd) {
      if (!c.checkpoint.empty()) bench.set_dense(seed, lpaf::load_checkpoint(c.checkpoint));
      lpaf::RunOptions options;
      options.out_dir = fs::path(cfg.output_dir);
      options.prune_rank_telemetry = telemetry;
      const lpaf::RunReport report = lpaf::lpaf_run(bench, seed, options);
      ordered_json j;
      j["command"] = "pipeline";
      for (const auto& s : report.stages) j[s.name] = s.metric;
      j["k"] = report.rank_k;
      j["report"] = (fs::path(cfg.output_dir) / "report.json").string();
      emit(j);
    } else if (*study_cmd) {
      const lpaf::StudyResult result = lpaf::preliminary_study(bench);
      const fs::path dir = cfg.output_dir;
      lpaf::write_text_file(dir / "study.csv", lpaf::study_csv(result));
      lpaf::write_text_file(dir / "study_summary.csv", lpaf::study_summary_csv(result));
      emit({{"command", "study"},
            {"rows", result.rows.size()},
            {"csv", (dir / "study.csv").string()},
            {"summary", (dir / "study_summary.csv").string()}});
    } else if (*ablate_cmd) {
      const lpaf::AblationResult result = lpaf::ablation_suite(bench);
      const fs::path dir = cfg.output_dir;
      lpaf::write_text_file(dir / "ablation.csv", lpaf::ablation_csv(result));
      ordered_json j;
      j["command"] = "ablate";
      j["rows"] = result.rows.size();
      j["csv"] = (dir / "ablation.csv").string();
      for (const char* table : {"sparsity", "weighting", "mixed", "p_init"}) {
        lpaf::AblationResult part;
        part.rows = result.table(table);
        if (part.rows.empty()) continue;
        const fs::path path = dir / (std::string("ablation_") + table + ".csv");
        lpaf::write_text_file(path, lpaf::ablation_csv(part));
        j[table] = path.string();
      }
      emit(j);
    }
    return 0;
  } catch (const lpaf::Error& e) {
    ordered_json j;
    j["error"] = std::string(lpaf::to_string(e.kind()));
    j["message"] = e.message();
    std::cerr << j.dump() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    ordered_json j;
    j["error"] = "internal";
    j["message"] = e.what();
    std::cerr << j.dump() << std::endl;
    return 3;
  }
}
