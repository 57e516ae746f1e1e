#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "lpaf/analysis.hpp"
#include "lpaf/error.hpp"
#include "lpaf/factorize.hpp"
#include "lpaf/rng.hpp"

using namespace lpaf;

namespace {

MlpModel single_layer(std::size_t n, std::size_t m) {
  return MlpModel::create(m, std::vector<std::size_t>{}, n, Task::kClassification, 0);
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lpaf_analysis_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Flops, DenseAndFactorizedExamples) {
  const MlpModel dense = single_layer(4, 4);
  EXPECT_EQ(flops_per_sample(dense), 40u);
  FactorizeSpec spec;
  spec.k = 1;
  spec.weighting = Weighting::kNone;
  spec.layers = {0};
  const MlpModel f = factorize_model(dense, spec);
  EXPECT_EQ(flops_per_sample(f), 24u);
  EXPECT_EQ(layer_parameters(f.layers[0]), 1u * 8 + 4);
}

TEST(Flops, FactorizedCheaperExactlyBelowBreakEven) {
  // 6 x 10: nm / (n + m) = 3.75
  const MlpModel dense = single_layer(6, 10);
  for (std::size_t k = 1; k <= 6; ++k) {
    FactorizeSpec spec;
    spec.k = k;
    spec.weighting = Weighting::kNone;
    spec.layers = {0};
    const MlpModel f = factorize_model(dense, spec);
    EXPECT_EQ(flops_per_sample(f) < flops_per_sample(dense), double(k) < 60.0 / 16.0) << k;
  }
}

TEST(ModelStats, FreshDenseLayersAreFullRank) {
  const MlpModel m =
      MlpModel::create(64, std::vector<std::size_t>{256, 256}, 10, Task::kClassification, 0);
  const ModelStats s = model_stats(m);
  EXPECT_EQ(s.layers[0].numerical_rank, 64u);
  EXPECT_EQ(s.layers[1].numerical_rank, 256u);
  EXPECT_DOUBLE_EQ(s.average_rank, (64.0 + 256.0) / 2.0);
  EXPECT_EQ(s.parameters, 64u * 256 + 256 + 256u * 256 + 256 + 256u * 10 + 10);
}

TEST(ModelStats, PrunedRowsBoundRank) {
  Rng rng(1);
  MlpModel m = MlpModel::create(20, std::vector<std::size_t>{16}, 3, Task::kClassification, 1);
  LinearLayer& l = m.layers[0];
  l.kind = LayerKind::kSparse;
  l.mask = Matrix(16, 20);
  l.score = Matrix(16, 20);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 20; ++c) l.mask(r, c) = 1.0;
  l.weight = hadamard(l.weight, l.mask);
  const ModelStats s = model_stats(m);
  EXPECT_LE(s.layers[0].numerical_rank, 3u);
  EXPECT_NEAR(s.layers[0].zero_row_fraction, 13.0 / 16.0, 1e-15);
  EXPECT_EQ(s.layers[0].nonzeros, 60u);
  EXPECT_EQ(s.layers[0].kept_parameters, 60u + 16);
}

TEST(ModelStats, FactorizedLayerCounts) {
  const MlpModel dense =
      MlpModel::create(48, std::vector<std::size_t>{40}, 3, Task::kClassification, 2);
  FactorizeSpec spec;
  spec.k = 32;
  spec.weighting = Weighting::kNone;
  spec.layers = {0};
  const ModelStats s = model_stats(factorize_model(dense, spec));
  EXPECT_EQ(s.layers[0].parameters, 32u * (40 + 48) + 40);
  EXPECT_EQ(s.layers[0].rank_k, 32u);
  EXPECT_LE(s.layers[0].numerical_rank, 32u);
  EXPECT_EQ(s.layers[0].flops, 2u * 32 * (40 + 48) + 2 * 40);
}

TEST(ModelStats, TotalsAreLayerSums) {
  Rng rng(3);
  MlpModel m = MlpModel::create(9, std::vector<std::size_t>{7, 5, 6}, 4, Task::kClassification, 3);
  FactorizeSpec spec;
  spec.k = 2;
  spec.weighting = Weighting::kNone;
  spec.layers = {1};
  m = factorize_model(m, spec);
  const ModelStats s = model_stats(m);
  std::size_t params = 0, flops = 0;
  for (const auto& l : s.layers) {
    params += l.parameters;
    flops += l.flops;
  }
  EXPECT_EQ(params, s.parameters);
  EXPECT_EQ(flops, s.flops_per_sample);
  EXPECT_EQ(flops, flops_per_sample(m));

  const std::string csv = model_stats_csv(s);
  EXPECT_EQ(csv.rfind("layer,kind,rows,cols,k,", 0), 0u);
  EXPECT_NE(csv.find(",flops,rank_tolerance\n"), std::string::npos);
  EXPECT_NE(csv.find("\nTOTAL,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(s.layers.size() + 2));
}

TEST(Pattern, AllOnesIsAllWhite) {
  const std::string pgm = mask_to_pgm(Matrix(2, 3, 1.0));
  EXPECT_EQ(pgm, "P2\n3 2\n1\n1 1 1\n1 1 1\n");
}

TEST(Pattern, HistogramCountsKeptRows) {
  Matrix mask(30, 8);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 8; c += 2) mask(r, c) = 1.0;
  const std::string csv = row_histogram_csv(mask);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,nonzeros");
  std::size_t nonzero_rows = 0, rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.substr(line.find(',') + 1) != "0") ++nonzero_rows;
  }
  EXPECT_EQ(rows, 30u);
  EXPECT_EQ(nonzero_rows, 10u);
}

TEST(Pattern, ExportWritesFilesAndRejectsDense) {
  MlpModel m = MlpModel::create(4, std::vector<std::size_t>{3}, 2, Task::kClassification, 0);
  const auto dir = scratch_dir("export");
  EXPECT_THROW(sparsity_pattern_export(m.layers[0], dir, "l0"), Error);
  LinearLayer& l = m.layers[0];
  l.kind = LayerKind::kSparse;
  l.mask = Matrix::from_rows({{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 1, 0, 1}});
  l.score = Matrix(3, 4);
  l.weight = hadamard(l.weight, l.mask);
  const PatternExport e = sparsity_pattern_export(l, dir, "l0");
  EXPECT_EQ(e.nonzero_rows, 2u);
  EXPECT_EQ(e.zero_rows, 1u);
  std::ifstream pgm(e.pgm);
  std::stringstream buf;
  buf << pgm.rdbuf();
  EXPECT_EQ(buf.str(), mask_to_pgm(l.mask));
  EXPECT_TRUE(std::filesystem::exists(e.histogram));
  std::filesystem::remove_all(dir);
}

TEST(ApproximationCurves, IdentityAndRankOne) {
  Rng rng(4);
  const Matrix u = Matrix::random_normal(5, 1, rng);
  const Matrix v = Matrix::random_normal(1, 7, rng);
  const std::vector<NamedMatrix> ms{{"eye", Matrix::identity(4)}, {"r1", matmul(u, v)}};
  const std::vector<std::size_t> ks{1, 2, 4};
  const auto pts = approximation_curves(ms, ks);
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_EQ(pts[1].matrix, "eye");
  EXPECT_EQ(pts[1].k, 2u);
  EXPECT_NEAR(pts[1].error, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(pts[1].cumulative_fraction, 0.5, 1e-12);
  EXPECT_NEAR(pts[1].relative_error, std::sqrt(2.0) / 2.0, 1e-12);
  for (std::size_t i = 3; i < 6; ++i) {
    EXPECT_LT(pts[i].error, 1e-10 * frobenius_norm(ms[1].value));
    EXPECT_NEAR(pts[i].cumulative_fraction, 1.0, 1e-12);
  }
  const std::string csv = approximation_curves_csv(pts);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(ApproximationCurves, MonotoneAndRejectsLargeK) {
  Rng rng(5);
  const std::vector<NamedMatrix> ms{{"w", Matrix::random_normal(6, 9, rng)}};
  std::vector<std::size_t> ks{1, 2, 3, 4, 5, 6};
  const auto pts = approximation_curves(ms, ks);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].cumulative_fraction, pts[i - 1].cumulative_fraction);
    EXPECT_LE(pts[i].error, pts[i - 1].error + 1e-12);
  }
  EXPECT_NEAR(pts.back().cumulative_fraction, 1.0, 1e-12);
  ks.push_back(7);
  EXPECT_THROW(approximation_curves(ms, ks), Error);
}

TEST(ApproximationCurves, ZeroMatrixHasZeroRelativeError) {
  const std::vector<NamedMatrix> ms{{"z", Matrix(3, 3)}};
  const std::vector<std::size_t> ks{1};
  const auto pts = approximation_curves(ms, ks);
  EXPECT_EQ(pts[0].relative_error, 0.0);
}
