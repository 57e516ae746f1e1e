#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "lpaf/data.hpp"
#include "lpaf/nn.hpp"

namespace lpaf {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  AdamWConfig adamw() const;
  void validate() const;
};

// Batch-order stream for a given training seed. Every training loop in the
// library draws batches from this stream so that loops sharing a seed see the
// same data order.
inline constexpr std::uint64_t kBatchStream = 0xBA7C4;

struct TrainLog {
  std::vector<double> losses;  // one per step
};

// Plain AdamW training on the task loss for config.steps steps.
TrainLog train(MlpModel& model, const Dataset& data, const TrainConfig& config);

// Same, but `on_step(step, model)` runs after every optimizer update.
TrainLog train(MlpModel& model, const Dataset& data, const TrainConfig& config,
               const std::function<void(std::size_t, const MlpModel&)>& on_step);

// Classification accuracy in [0, 1], or mean squared error for regression.
double evaluate(const MlpModel& model, const Dataset& data);

}  // namespace lpaf
