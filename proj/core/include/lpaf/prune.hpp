#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "lpaf/data.hpp"
#include "lpaf/matrix.hpp"
#include "lpaf/nn.hpp"
#include "lpaf/train.hpp"

namespace lpaf {

enum class PruneMethod { kZeroOrder, kFirstOrder };

std::string_view to_string(PruneMethod method);
PruneMethod prune_method_from_string(std::string_view name);

// Kept-fraction trajectory: v_i on [0, t_i), a cubic ramp down to v_f on
// [t_i, T - t_f), v_f afterwards.
struct SparsitySchedule {
  double v_i = 1.0;
  double v_f = 0.1;
  std::size_t t_i = 0;
  std::size_t t_f = 0;
  std::size_t total_steps = 1;

  void validate() const;
};

double schedule_v(std::size_t t, const SparsitySchedule& s);

struct PruneState {
  Matrix score;
  Matrix mask;
  PruneMethod method = PruneMethod::kFirstOrder;
};

// Fresh state for `weight`: all-ones mask; |W| scores for zero-order, zero
// scores for first-order.
PruneState make_prune_state(const Matrix& weight, PruneMethod method);

Matrix magnitude_scores(const Matrix& weight);

// score += -grad (.) weight
void accumulate_first_order(PruneState& state, const Matrix& weight, const Matrix& grad);

// ceil(v * total) up to rounding noise in the product, at least 1.
std::size_t kept_count(double v, std::size_t total);

// Keeps the kept_count(v, n*m) highest scores (ties: smaller row-major index
// first), writes the mask, and zeroes pruned weights.
void prune_to(PruneState& state, Matrix& weight, double v);

struct PruneTelemetryRow {
  std::size_t step = 0;
  std::size_t layer = 0;
  double v_t = 0.0;
  std::size_t nonzeros = 0;
  std::size_t numerical_rank = 0;
};

struct PruneOptions {
  PruneMethod method = PruneMethod::kFirstOrder;
  std::size_t prune_interval = 16;
  // Layer indices to prune; empty selects every layer except the output one.
  std::vector<std::size_t> layers;
  // When set, receives a row per pruned layer at every pruning event. Ranks
  // are computed only in that case.
  std::function<void(const PruneTelemetryRow&)> telemetry;
  double rank_tolerance = 1e-6;
};

std::vector<std::size_t> default_compressible_layers(const MlpModel& model);

// Step-1: trains `model` for schedule.total_steps steps while pruning. Per
// step: loss/grads -> score update -> (every prune_interval steps) mask to
// schedule_v(t) -> optimizer step. A final mask at v_f is applied after the
// last step. Selected layers come back as sparse layers carrying S and M.
MlpModel run_pruning(MlpModel model, const Dataset& data, const SparsitySchedule& schedule,
                     const TrainConfig& train_config, const PruneOptions& options);

// Fraction of rows of w that are entirely zero.
double zero_row_fraction(const Matrix& w);

}  // namespace lpaf
