#include "lpaf/train.hpp"

#include <algorithm>
#include <cmath>

#include "lpaf/error.hpp"

namespace lpaf {

AdamWConfig TrainConfig::adamw() const {
  AdamWConfig c;
  c.learning_rate = learning_rate;
  c.weight_decay = weight_decay;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kInvalidArgument, "learning_rate must be positive");
  if (steps < 1) throw Error(ErrorKind::kInvalidArgument, "steps must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "weight_decay must be >= 0");
}

TrainLog train(MlpModel& model, const Dataset& data, const TrainConfig& config) {
  return train(model, data, config, {});
}

TrainLog train(MlpModel& model, const Dataset& data, const TrainConfig& config,
               const std::function<void(std::size_t, const MlpModel&)>& on_step) {
  config.validate();
  model.validate();
  Batcher batcher(data, config.batch_size, derive_seed(config.seed, kBatchStream));
  Optimizer optimizer(config.adamw());
  TrainLog log;
  log.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = batcher.next();
    LossAndGrads lg;
    try {
      lg = loss_and_grads(model, batch.features, batch.labels);
    } catch (const Error& e) {
      throw Error(e.kind(), "step " + std::to_string(step) + ": " + e.message());
    }
    optimizer.step(model, lg.grads);
    log.losses.push_back(lg.loss);
    if (on_step) on_step(step, model);
  }
  return log;
}

double evaluate(const MlpModel& model, const Dataset& data) {
  if (data.size() == 0) throw Error(ErrorKind::kInvalidArgument, "evaluate: empty dataset");
  constexpr std::size_t kChunk = 512;
  double correct = 0.0;
  double squared = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - start);
    Matrix chunk(count, data.input_dim());
    for (std::size_t i = 0; i < count; ++i) {
      const auto src = data.features.row(start + i);
      std::copy(src.begin(), src.end(), chunk.row(i).begin());
    }
    const Matrix logits = forward(model, chunk);
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = logits.row(i);
      const double label = data.labels[start + i];
      if (model.task == Task::kClassification) {
        const auto best = static_cast<std::size_t>(
            std::distance(row.begin(), std::max_element(row.begin(), row.end())));
        if (static_cast<double>(best) == label) correct += 1.0;
      } else {
        const double d = row[0] - label;
        squared += d * d;
      }
    }
  }
  const double n = static_cast<double>(data.size());
  return model.task == Task::kClassification ? correct / n : squared / n;
}

}  // namespace lpaf
