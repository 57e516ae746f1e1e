#include "lpaf/mixedrank.hpp"

#include <algorithm>
#include <cmath>

#include "lpaf/error.hpp"

namespace lpaf {

namespace {

constexpr std::uint64_t kGateStream = 0x6A7E5;

void softmax_rows(const Matrix& logits, Matrix& probs, Matrix& log_probs) {
  probs = Matrix(logits.rows(), logits.cols());
  log_probs = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto y = logits.row(i);
    const double mx = *std::max_element(y.begin(), y.end());
    double z = 0.0;
    for (double v : y) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < y.size(); ++j) {
      log_probs(i, j) = y[j] - lse;
      probs(i, j) = std::exp(log_probs(i, j));
    }
  }
}

}  // namespace

double MixedRankConfig::decay_for(std::size_t total_steps) const {
  if (decay) return *decay;
  const double half = static_cast<double>(total_steps) / 2.0;
  return half > 0.0 ? p_init / half : 0.0;
}

void MixedRankConfig::validate() const {
  if (!(p_init >= 0.0 && p_init <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "p_init must be in [0, 1]");
  }
  if (decay && !(*decay >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "decay must be >= 0");
  if (!(consistency_weight >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "consistency_weight must be >= 0");
  }
}

double p_schedule(std::size_t t, double p_init, double decay) {
  const double p = p_init - decay * static_cast<double>(t);
  return std::max(0.0, p);
}

std::vector<std::uint8_t> sample_gates(std::size_t count, double p, Rng& rng) {
  std::vector<std::uint8_t> z(count);
  for (auto& zi : z) zi = rng.bernoulli(p) ? 1 : 0;
  return z;
}

Matrix mixed_forward(const MlpModel& model, const Matrix& batch, GateSpan gates,
                     ForwardCache* cache) {
  if (gates.size() != model.num_factorized()) {
    throw Error(ErrorKind::kShapeMismatch,
                "mixed_forward: gate vector length " + std::to_string(gates.size()) +
                    " but model has " + std::to_string(model.num_factorized()) +
                    " factorized layers");
  }
  return forward(model, batch, cache, gates);
}

ConsistencyOutput consistency_loss(const Matrix& first, const Matrix& second, Task task) {
  require_same_shape(first, second, "consistency_loss");
  const std::size_t n = first.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  ConsistencyOutput out;
  out.d_first = Matrix(n, first.cols());
  out.d_second = Matrix(n, first.cols());
  if (task == Task::kRegression) {
    const double inv = 1.0 / static_cast<double>(first.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < first.size(); ++i) {
      const double d = first.data()[i] - second.data()[i];
      sum += d * d;
      out.d_first.data()[i] = 2.0 * d * inv;
      out.d_second.data()[i] = -2.0 * d * inv;
    }
    out.loss = sum * inv;
    return out;
  }
  Matrix p1, l1, p2, l2;
  softmax_rows(first, p1, l1);
  softmax_rows(second, p2, l2);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double kl12 = 0.0;
    double kl21 = 0.0;
    for (std::size_t j = 0; j < first.cols(); ++j) {
      kl12 += p1(i, j) * (l1(i, j) - l2(i, j));
      kl21 += p2(i, j) * (l2(i, j) - l1(i, j));
    }
    total += 0.5 * (kl12 + kl21);
    // d/dy1_k [KL(p1||p2)] = p1_k (l1_k - l2_k - KL12); d/dy1_k [KL(p2||p1)] = p1_k - p2_k.
    for (std::size_t j = 0; j < first.cols(); ++j) {
      const double diff = l1(i, j) - l2(i, j);
      out.d_first(i, j) =
          0.5 * inv_n * (p1(i, j) * (diff - kl12) + p1(i, j) - p2(i, j));
      out.d_second(i, j) =
          0.5 * inv_n * (p2(i, j) * (-diff - kl21) + p2(i, j) - p1(i, j));
    }
  }
  out.loss = std::max(0.0, total * inv_n);
  return out;
}

MixedRankLog mixed_rank_finetune(MlpModel& model, const Dataset& data,
                                 const MixedRankConfig& config, const TrainConfig& train_config) {
  config.validate();
  train_config.validate();
  model.validate();
  const std::size_t gated = model.num_factorized();
  if (gated == 0) {
    throw Error(ErrorKind::kInvalidArgument, "mixed_rank_finetune: model has no factorized layers");
  }
  const double decay = config.decay_for(train_config.steps);
  Batcher batcher(data, train_config.batch_size, derive_seed(train_config.seed, kBatchStream));
  Rng gate_rng(derive_seed(config.seed, kGateStream));
  Optimizer optimizer(train_config.adamw());
  MixedRankLog log;
  log.rows.reserve(train_config.steps);
  for (std::size_t step = 0; step < train_config.steps; ++step) {
    const Batch batch = batcher.next();
    const double p = p_schedule(step, config.p_init, decay);
    const auto z1 = sample_gates(gated, p, gate_rng);
    const auto z2 = sample_gates(gated, p, gate_rng);
    ForwardCache c1, c2;
    const Matrix y1 = mixed_forward(model, batch.features, z1, &c1);
    const Matrix y2 = mixed_forward(model, batch.features, z2, &c2);
    LossOutput t1, t2;
    try {
      t1 = task_loss(y1, batch.labels, model.task);
      t2 = task_loss(y2, batch.labels, model.task);
    } catch (const Error& e) {
      throw Error(e.kind(), "fine-tuning step " + std::to_string(step) + ": " + e.message());
    }
    Matrix d1 = 0.5 * t1.d_logits;
    Matrix d2 = 0.5 * t2.d_logits;
    MixedRankTelemetryRow row;
    row.step = step;
    row.p = p;
    row.task_loss_first = t1.loss;
    row.task_loss_second = t2.loss;
    if (config.consistency_weight > 0.0) {
      const ConsistencyOutput c = consistency_loss(y1, y2, model.task);
      d1 += config.consistency_weight * c.d_first;
      d2 += config.consistency_weight * c.d_second;
      row.consistency = c.loss;
    }
    Gradients grads = backward(model, c1, d1);
    accumulate(grads, backward(model, c2, d2));
    optimizer.step(model, grads);
    log.rows.push_back(row);
  }
  return log;
}

}  // namespace lpaf
