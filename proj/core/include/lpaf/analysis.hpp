#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lpaf/linalg.hpp"
#include "lpaf/matrix.hpp"
#include "lpaf/nn.hpp"

namespace lpaf {

struct LayerStats {
  std::string name;
  LayerKind kind = LayerKind::kDense;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t rank_k = 0;          // factorized layers only
  std::size_t nonzeros = 0;        // weight entries (factor entries when factorized)
  double kept_fraction = 1.0;      // nonzeros / (rows * cols)
  std::size_t numerical_rank = 0;  // of the effective weight
  double zero_row_fraction = 0.0;  // of the effective weight
  std::size_t parameters = 0;      // stored weights + bias
  std::size_t kept_parameters = 0; // nonzero weights + bias
  std::size_t flops = 0;
  bool factorizable = false;
};

struct ModelStats {
  std::vector<LayerStats> layers;
  std::size_t parameters = 0;
  std::size_t kept_parameters = 0;
  std::size_t flops_per_sample = 0;
  // Mean numerical rank over the factorizable (non-output) layers.
  double average_rank = 0.0;
  double rank_tolerance = kDefaultRankTolerance;
};

// FLOPs for one sample through a layer:
//   dense/sparse n x m:      2nm + n (bias) + n (activation)
//   factorized rank k:       2k(n + m) + n + n
// Unstructured zeros are not skipped.
std::size_t layer_flops(const LinearLayer& layer);
std::size_t flops_per_sample(const MlpModel& model);

// Parameters of a layer as stored for inference: nm + n, or k(n + m) + n.
std::size_t layer_parameters(const LinearLayer& layer);

ModelStats model_stats(const MlpModel& model, double rank_tolerance = kDefaultRankTolerance);

// CSV with header `layer,kind,rows,cols,k,nonzeros,kept_fraction,numerical_rank,
// zero_row_fraction,parameters,kept_parameters,flops,rank_tolerance` and a final
// TOTAL row.
std::string model_stats_csv(const ModelStats& stats);

// Mask as an ASCII portable graymap (P2, maxval 1): kept entries are white.
std::string mask_to_pgm(const Matrix& mask);
// `row,nonzeros` per row.
std::string row_histogram_csv(const Matrix& mask);

struct PatternExport {
  std::filesystem::path pgm;
  std::filesystem::path histogram;
  std::size_t nonzero_rows = 0;
  std::size_t zero_rows = 0;
};

// Writes <stem>.pgm and <stem>_rows.csv for a sparse layer's mask.
PatternExport sparsity_pattern_export(const LinearLayer& layer,
                                      const std::filesystem::path& directory,
                                      const std::string& stem);

struct ApproximationPoint {
  std::string matrix;
  std::size_t k = 0;
  double error = 0.0;           // ||W - A B||_F of the rank-k truncation
  double relative_error = 0.0;  // error / ||W||_F (0 for W = 0)
  double cumulative_fraction = 0.0;
};

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// k values above min(n, m) of a matrix are rejected.
std::vector<ApproximationPoint> approximation_curves(std::span<const NamedMatrix> matrices,
                                                     std::span<const std::size_t> k_grid);
std::string approximation_curves_csv(std::span<const ApproximationPoint> points);

}  // namespace lpaf
