#include "lpaf/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lpaf/error.hpp"
#include "lpaf/linalg.hpp"

namespace lpaf {

std::string_view to_string(PruneMethod method) {
  return method == PruneMethod::kZeroOrder ? "zero_order" : "first_order";
}

PruneMethod prune_method_from_string(std::string_view name) {
  if (name == "zero_order") return PruneMethod::kZeroOrder;
  if (name == "first_order") return PruneMethod::kFirstOrder;
  throw Error(ErrorKind::kInvalidArgument, "unknown pruning method '" + std::string(name) + "'");
}

void SparsitySchedule::validate() const {
  if (v_i != 1.0) throw Error(ErrorKind::kInvalidArgument, "schedule: v_i must be 1.0");
  if (!(v_f > 0.0)) throw Error(ErrorKind::kInvalidArgument, "kept fraction must be positive");
  if (v_f > v_i) throw Error(ErrorKind::kInvalidArgument, "schedule: v_f must not exceed v_i");
  if (t_i + t_f >= total_steps) {
    throw Error(ErrorKind::kInvalidArgument, "schedule: t_i + t_f must be below total steps");
  }
}

double schedule_v(std::size_t t, const SparsitySchedule& s) {
  if (t > s.total_steps) {
    std::ostringstream os;
    os << "schedule_v: step " << t << " outside [0, " << s.total_steps << "]";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  if (t < s.t_i) return s.v_i;
  const std::size_t ramp_end = s.total_steps - s.t_f;
  if (t >= ramp_end) return s.v_f;
  const double frac = static_cast<double>(ramp_end - t) / static_cast<double>(ramp_end - s.t_i);
  return s.v_f + (s.v_i - s.v_f) * frac * frac * frac;
}

PruneState make_prune_state(const Matrix& weight, PruneMethod method) {
  PruneState s;
  s.method = method;
  s.mask = Matrix(weight.rows(), weight.cols(), 1.0);
  s.score = method == PruneMethod::kZeroOrder ? magnitude_scores(weight)
                                              : Matrix(weight.rows(), weight.cols());
  return s;
}

Matrix magnitude_scores(const Matrix& weight) {
  Matrix s(weight.rows(), weight.cols());
  for (std::size_t i = 0; i < weight.size(); ++i) s.data()[i] = std::abs(weight.data()[i]);
  return s;
}

void accumulate_first_order(PruneState& state, const Matrix& weight, const Matrix& grad) {
  require_same_shape(state.score, weight, "accumulate_first_order score/weight");
  require_same_shape(weight, grad, "accumulate_first_order weight/grad");
  auto s = state.score.data();
  auto w = weight.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] -= g[i] * w[i];
}

std::size_t kept_count(double v, std::size_t total) {
  if (!(v > 0.0 && v <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "kept fraction must be in (0, 1]");
  }
  const double x = v * static_cast<double>(total);
  const auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(k, 1, total);
}

void prune_to(PruneState& state, Matrix& weight, double v) {
  require_same_shape(state.score, weight, "prune_to score/weight");
  require_finite(state.score, "prune_to scores");
  const std::size_t total = weight.size();
  const std::size_t keep = kept_count(v, total);
  if (state.mask.size() != total) state.mask = Matrix(weight.rows(), weight.cols());
  auto mask = state.mask.data();
  if (keep == total) {
    std::fill(mask.begin(), mask.end(), 1.0);
    return;
  }
  const auto score = state.score.data();
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return score[a] > score[b] || (score[a] == score[b] && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), before);
  std::fill(mask.begin(), mask.end(), 0.0);
  for (std::size_t i = 0; i < keep; ++i) mask[idx[i]] = 1.0;
  auto w = weight.data();
  for (std::size_t i = 0; i < total; ++i)
    if (mask[i] == 0.0) w[i] = 0.0;
}

std::vector<std::size_t> default_compressible_layers(const MlpModel& model) {
  std::vector<std::size_t> out(model.layers.size() > 0 ? model.layers.size() - 1 : 0);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

MlpModel run_pruning(MlpModel model, const Dataset& data, const SparsitySchedule& schedule,
                     const TrainConfig& train_config, const PruneOptions& options) {
  schedule.validate();
  train_config.validate();
  model.validate();
  if (options.prune_interval == 0) {
    throw Error(ErrorKind::kInvalidArgument, "prune_interval must be positive");
  }
  const std::vector<std::size_t> selected =
      options.layers.empty() ? default_compressible_layers(model) : options.layers;
  for (std::size_t l : selected) {
    if (l >= model.layers.size()) {
      throw Error(ErrorKind::kInvalidArgument, "prune: layer index " + std::to_string(l) +
                                                   " out of range");
    }
    if (model.layers[l].kind == LayerKind::kFactorized) {
      throw Error(ErrorKind::kInvalidArgument, "prune: layer " + std::to_string(l) +
                                                   " is factorized");
    }
  }

  std::vector<PruneState> states;
  states.reserve(selected.size());
  for (std::size_t l : selected) {
    LinearLayer& layer = model.layers[l];
    PruneState s = make_prune_state(layer.weight, options.method);
    if (layer.kind == LayerKind::kSparse) {
      s.mask = layer.mask;
      if (options.method == PruneMethod::kFirstOrder && !layer.score.empty()) s.score = layer.score;
    }
    layer.kind = LayerKind::kSparse;
    layer.mask = s.mask;
    states.push_back(std::move(s));
  }

  auto prune_event = [&](std::size_t step, double v) {
    for (std::size_t i = 0; i < selected.size(); ++i) {
      LinearLayer& layer = model.layers[selected[i]];
      PruneState& s = states[i];
      if (s.method == PruneMethod::kZeroOrder) s.score = magnitude_scores(layer.weight);
      prune_to(s, layer.weight, v);
      layer.mask = s.mask;
      if (options.telemetry) {
        PruneTelemetryRow row;
        row.step = step;
        row.layer = selected[i];
        row.v_t = v;
        row.nonzeros = count_nonzeros(layer.weight);
        row.numerical_rank = numerical_rank(layer.weight, options.rank_tolerance);
        options.telemetry(row);
      }
    }
  };

  Batcher batcher(data, train_config.batch_size, derive_seed(train_config.seed, kBatchStream));
  Optimizer optimizer(train_config.adamw());
  for (std::size_t step = 0; step < schedule.total_steps; ++step) {
    const Batch batch = batcher.next();
    LossAndGrads lg;
    try {
      lg = loss_and_grads(model, batch.features, batch.labels);
    } catch (const Error& e) {
      throw Error(e.kind(), "pruning step " + std::to_string(step) + ": " + e.message());
    }
    if (options.method == PruneMethod::kFirstOrder) {
      for (std::size_t i = 0; i < selected.size(); ++i) {
        accumulate_first_order(states[i], model.layers[selected[i]].weight,
                               lg.grads[selected[i]].weight);
      }
    }
    if (step % options.prune_interval == 0) prune_event(step, schedule_v(step, schedule));
    optimizer.step(model, lg.grads);
  }
  prune_event(schedule.total_steps, schedule.v_f);

  for (std::size_t i = 0; i < selected.size(); ++i) {
    model.layers[selected[i]].score = std::move(states[i].score);
  }
  return model;
}

double zero_row_fraction(const Matrix& w) {
  if (w.rows() == 0) return 0.0;
  std::size_t zero = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto r = w.row(i);
    if (std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; })) ++zero;
  }
  return static_cast<double>(zero) / static_cast<double>(w.rows());
}

}  // namespace lpaf
