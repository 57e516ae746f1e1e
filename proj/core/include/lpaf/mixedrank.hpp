#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lpaf/data.hpp"
#include "lpaf/nn.hpp"
#include "lpaf/rng.hpp"
#include "lpaf/train.hpp"

namespace lpaf {

struct MixedRankConfig {
  double p_init = 0.5;
  // Per-step decrement of p; unset means p_init / (steps / 2), i.e. p hits
  // zero halfway through training.
  std::optional<double> decay;
  double consistency_weight = 1.0;
  std::uint64_t seed = 0;

  double decay_for(std::size_t total_steps) const;
  void validate() const;
};

// max(0, p_init - decay * t)
double p_schedule(std::size_t t, double p_init, double decay);

// One independent Bernoulli(p) draw per factorized layer.
std::vector<std::uint8_t> sample_gates(std::size_t count, double p, Rng& rng);

// Forward pass with gate z_i selecting, per factorized layer, the low-rank
// factors (0) or the shadow matrix (1).
Matrix mixed_forward(const MlpModel& model, const Matrix& batch, GateSpan gates,
                     ForwardCache* cache = nullptr);

struct ConsistencyOutput {
  double loss = 0.0;
  Matrix d_first;
  Matrix d_second;
};

// Classification: symmetric KL 0.5 * (KL(p1||p2) + KL(p2||p1)) of the softmax
// distributions, averaged over rows. Regression: mean squared difference.
ConsistencyOutput consistency_loss(const Matrix& first, const Matrix& second, Task task);

struct MixedRankTelemetryRow {
  std::size_t step = 0;
  double p = 0.0;
  double task_loss_first = 0.0;
  double task_loss_second = 0.0;
  double consistency = 0.0;
};

struct MixedRankLog {
  std::vector<MixedRankTelemetryRow> rows;
};

// Step-3: per step, two gated passes on the same batch with independently
// sampled gates, loss 0.5 * (L1 + L2) + lambda * Lc, one AdamW update over
// the summed gradients. Shadow matrices keep their zero pattern.
MixedRankLog mixed_rank_finetune(MlpModel& model, const Dataset& data,
                                 const MixedRankConfig& config, const TrainConfig& train_config);

}  // namespace lpaf
