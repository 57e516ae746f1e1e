#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "lpaf/linalg.hpp"
#include "lpaf/matrix.hpp"
#include "lpaf/nn.hpp"

namespace lpaf {

inline constexpr double kDefaultImportanceFloor = 1e-6;

// Normalized per-row importances s_hat (the diagonal of I_hat).
struct RowImportance {
  std::vector<double> s_hat;
  double epsilon_floor = kDefaultImportanceFloor;

  Matrix diagonal() const { return Matrix::diagonal(s_hat); }
};

// Row sums of the score matrix (shifted by -min(S) when S has negative
// entries, plus 1e-12), normalized to sum 1, then floored at epsilon_floor.
RowImportance row_importance(const Matrix& score,
                             double epsilon_floor = kDefaultImportanceFloor);

// Same normalization applied to the per-row kept counts of a 0/1 mask.
RowImportance mask_importance(const Matrix& mask,
                              double epsilon_floor = kDefaultImportanceFloor);

RowImportance uniform_importance(std::size_t rows);

// Rank-k minimizer of ||I_hat (W - A B)||_F:
//   I_hat W = U S V^T,  A = I_hat^{-1} U_k S_k,  B = V_k^T.
FactorPair sparsity_aware_factorize(const Matrix& weight, const RowImportance& importance,
                                    std::size_t k);

// Plain truncated SVD.
FactorPair vanilla_factorize(const Matrix& weight, std::size_t k);

// ||I_hat (W - A B)||_F
double weighted_error(const Matrix& weight, const RowImportance& importance,
                      const FactorPair& factors);

enum class Weighting { kScore, kMask, kNone };

std::string_view to_string(Weighting weighting);
Weighting weighting_from_string(std::string_view name);

inline constexpr std::size_t kFullRank = SIZE_MAX;

struct FactorizeSpec {
  // Uniform rank for every selected layer, capped at min(n, m) per layer;
  // kFullRank means min(n, m).
  std::size_t k = kFullRank;
  // Per-layer overrides keyed by layer index; must lie in [1, min(n, m)].
  std::map<std::size_t, std::size_t> k_per_layer;
  Weighting weighting = Weighting::kScore;
  // Layer indices to factorize; empty selects every layer except the output.
  std::vector<std::size_t> layers;
  double epsilon_floor = kDefaultImportanceFloor;

  std::size_t rank_for(std::size_t layer, std::size_t rows, std::size_t cols) const;
};

// Step-2: each selected layer becomes factorized with factors from the chosen
// weighting and keeps its pre-factorization matrix (and mask, score) as the
// shadow. Dense layers are accepted for Weighting::kNone only. Layers that
// are not selected are copied unchanged.
MlpModel factorize_model(const MlpModel& model, const FactorizeSpec& spec);

// Uniform k whose total k * sum(n + m) over `layers` is closest to
// fraction * sum(n * m), at least 1. Not capped per layer.
std::size_t rank_for_fraction(const MlpModel& model, std::span<const std::size_t> layers,
                              double fraction);

}  // namespace lpaf
