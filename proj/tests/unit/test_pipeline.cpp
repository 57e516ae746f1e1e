#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"
#include "lpaf/error.hpp"
#include "lpaf/io.hpp"
#include "lpaf/pipeline.hpp"

using namespace lpaf;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c = ExperimentConfig::defaults();
  c.dataset.synthetic.num_examples = 800;
  c.dataset.synthetic.input_dim = 12;
  c.dataset.synthetic.num_classes = 3;
  c.dataset.synthetic.teacher_hidden = 16;
  c.dataset.synthetic.teacher_rank = 3;
  c.model.hidden = {16, 12};
  c.dense.steps = 60;
  c.prune.train.steps = 60;
  c.prune.t_i = 5;
  c.prune.t_f = 20;
  c.finetune.train.steps = 40;
  c.study.budgets = {0.5};
  c.ablation.v_grid = {0.5};
  c.ablation.lambdas = {0.0};
  c.ablation.p_init_grid = {0.3};
  c.seeds = {0, 1};
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lpaf_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(StageSeeds, DistinctPerStageAndRun) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t run : {0u, 1u, 2u}) {
    for (StageSeed s : {StageSeed::kInit, StageSeed::kDense, StageSeed::kPrune,
                        StageSeed::kFinetune, StageSeed::kGates}) {
      EXPECT_TRUE(seen.insert(stage_seed(run, s)).second);
    }
  }
}

TEST(Pipeline, ReportMatchesCheckpoints) {
  const fs::path out = scratch("report");
  Workbench bench(tiny_config());
  RunOptions opts;
  opts.out_dir = out;
  opts.prune_rank_telemetry = true;
  const RunReport r = lpaf_run(bench, 0, opts);

  ASSERT_EQ(r.stages.size(), 4u);
  for (const StageReport& s : r.stages) {
    ASSERT_FALSE(s.checkpoint.empty()) << s.name;
    const MlpModel m = load_checkpoint(s.checkpoint);
    EXPECT_NEAR(bench.metric(m), s.metric, 1e-12) << s.name;
  }
  for (const char* f : {"config.json", "report.json", "prune_telemetry.csv",
                        "finetune_telemetry.csv", "stats_final.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto j = nlohmann::json::parse(read_text_file(out / "report.json"));
  EXPECT_EQ(j["stages"].size(), 4u);
  EXPECT_EQ(j["k"], r.rank_k);
  // config.json reloads to the same config
  EXPECT_EQ(config_to_json(load_config(out / "config.json")), r.config_json);
  fs::remove_all(out);
}

TEST(Pipeline, StepThreeFromSavedFactorizationReproduces) {
  const fs::path out = scratch("resume");
  Workbench bench(tiny_config());
  RunOptions opts;
  opts.out_dir = out;
  const RunReport r = lpaf_run(bench, 1, opts);
  const MlpModel fact = load_checkpoint(r.stage("factorized").checkpoint);
  const MlpModel again = bench.finetune(fact, 1);
  const MlpModel saved = load_checkpoint(r.stage("final").checkpoint);
  for (std::size_t l = 0; l < saved.layers.size(); ++l) {
    EXPECT_EQ(again.layers[l].weight, saved.layers[l].weight);
    EXPECT_EQ(again.layers[l].factors.a, saved.layers[l].factors.a);
    EXPECT_EQ(again.layers[l].bias, saved.layers[l].bias);
  }
  fs::remove_all(out);
}

TEST(Pipeline, FactorizationKeepsBiasesAndCountsFactorParameters) {
  Workbench bench(tiny_config());
  const RunReport r = lpaf_run(bench, 0);
  const MlpModel sparse = bench.prune(0, bench.config().prune.v_f, bench.config().prune.method);
  const MlpModel fact = bench.factorize(sparse);
  for (std::size_t l = 0; l < fact.layers.size(); ++l) {
    EXPECT_EQ(fact.layers[l].bias, sparse.layers[l].bias);
  }
  const ModelStats& st = r.stage("factorized").stats;
  for (std::size_t l = 0; l < 2; ++l) {
    const LayerStats& ls = st.layers[l];
    EXPECT_EQ(ls.kind, LayerKind::kFactorized);
    EXPECT_EQ(ls.parameters, ls.rank_k * (ls.rows + ls.cols) + ls.rows);
  }
  EXPECT_EQ(st.layers[2].kind, LayerKind::kDense);
  EXPECT_EQ(r.stage("final").stats.parameters, st.parameters);
}

TEST(Pipeline, RunsAreDeterministic) {
  const ExperimentConfig c = tiny_config();
  const RunReport a = lpaf_run(c);
  const RunReport b = lpaf_run(c);
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    EXPECT_EQ(a.stages[i].metric, b.stages[i].metric) << a.stages[i].name;
  }
}

TEST(Pipeline, StageErrorsCarryTheStageName) {
  ExperimentConfig c = tiny_config();
  c.factorize.k_fraction.reset();
  c.factorize.k = 4;
  c.factorize.k_per_layer[1] = 50;  // above min(12, 16)
  Workbench bench(c);
  try {
    lpaf_run(bench, 0);
    FAIL() << "run succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).find("stage factorized: ") != std::string::npos, true)
        << e.what();
  }
}

TEST(Study, RowsForEveryArmAndSeed) {
  Workbench bench(tiny_config());
  const StudyResult s = preliminary_study(bench);
  EXPECT_EQ(s.rows.size(), 2u * (1 + 3));
  const StudyRow& svd = s.find(1, 0.5, "svd_ft");
  EXPECT_EQ(svd.rank_k, rank_for_fraction(bench.dense(1), bench.factorize_layers(bench.dense(1)),
                                          0.5));
  EXPECT_GT(s.find(0, 0.5, "up_first").metric, 0.0);
  const std::string csv = study_csv(s);
  EXPECT_EQ(csv.rfind("seed,budget,arm,metric,average_rank,zero_row_fraction,k,parameters\n", 0),
            0u);
  EXPECT_EQ(study_summary_csv(s).rfind("budget,arm,metric_mean,", 0), 0u);
  EXPECT_THROW(s.find(0, 0.25, "svd_ft"), Error);
}

TEST(Ablation, TablesAndVariants) {
  ExperimentConfig c = tiny_config();
  c.seeds = {0};
  Workbench bench(c);
  const AblationResult a = ablation_suite(bench);
  EXPECT_EQ(a.table("sparsity").size(), 1u);
  EXPECT_EQ(a.table("weighting").size(), 3u);
  EXPECT_EQ(a.table("mixed").size(), 2u);
  EXPECT_EQ(a.table("p_init").size(), 1u);
  EXPECT_NO_THROW(a.find("mixed", 0, "vanilla"));
  EXPECT_NO_THROW(a.find("mixed", 0, "lambda=0"));
  EXPECT_NO_THROW(a.find("p_init", 0, "p_init=0.3"));
  EXPECT_NO_THROW(a.find("weighting", 0, "mask"));
  EXPECT_EQ(ablation_csv(a).rfind("table,seed,variant,v,k,sparse_rank,before,after\n", 0), 0u);

  c.ablation.v_grid.clear();
  c.ablation.p_init_grid.clear();
  Workbench small(c);
  const AblationResult b = ablation_suite(small);
  EXPECT_TRUE(b.table("sparsity").empty());
  EXPECT_TRUE(b.table("p_init").empty());
}

TEST(FormatReal, ShortestRoundTrip) {
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(1.0), "1");
  EXPECT_EQ(std::stod(format_real(1.0 / 3.0)), 1.0 / 3.0);
}
