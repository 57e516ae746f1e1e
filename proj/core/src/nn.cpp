#include "lpaf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lpaf/error.hpp"
#include "lpaf/rng.hpp"

namespace lpaf {

std::string_view to_string(Task task) {
  return task == Task::kClassification ? "classification" : "regression";
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kSparse: return "sparse";
    case LayerKind::kFactorized: return "factorized";
  }
  return "unknown";
}

Task task_from_string(std::string_view name) {
  if (name == "classification") return Task::kClassification;
  if (name == "regression") return Task::kRegression;
  throw Error(ErrorKind::kParse, "unknown task '" + std::string(name) + "'");
}

LayerKind layer_kind_from_string(std::string_view name) {
  if (name == "dense") return LayerKind::kDense;
  if (name == "sparse") return LayerKind::kSparse;
  if (name == "factorized") return LayerKind::kFactorized;
  throw Error(ErrorKind::kParse, "unknown layer kind '" + std::string(name) + "'");
}

Matrix LinearLayer::masked_weight() const {
  return has_mask() ? hadamard(weight, mask) : weight;
}

Matrix LinearLayer::effective_weight() const {
  switch (kind) {
    case LayerKind::kDense: return weight;
    case LayerKind::kSparse: return masked_weight();
    case LayerKind::kFactorized: return factors.product();
  }
  return weight;
}

void LinearLayer::validate(std::string_view name) const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kShapeMismatch, std::string(name) + ": " + what);
  };
  if (weight.empty()) fail("empty weight");
  if (bias.size() != weight.rows()) fail("bias length does not match output width");
  if (has_mask()) {
    if (!mask.same_shape(weight)) fail("mask shape differs from weight");
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double m = mask.data()[i];
      if (m != 0.0 && m != 1.0) fail("mask entry is not 0/1");
      if (m == 0.0 && weight.data()[i] != 0.0) fail("nonzero weight under a zero mask entry");
    }
  }
  if (!score.empty() && !score.same_shape(weight)) fail("score shape differs from weight");
  switch (kind) {
    case LayerKind::kDense:
      break;
    case LayerKind::kSparse:
      if (!has_mask()) fail("sparse layer without mask");
      break;
    case LayerKind::kFactorized:
      if (factors.a.cols() != factors.b.rows() || factors.a.cols() == 0)
        fail("factor inner dimensions disagree");
      if (factors.a.rows() != weight.rows() || factors.b.cols() != weight.cols())
        fail("factor product shape differs from shadow weight");
      break;
  }
}

MlpModel MlpModel::create(std::size_t input_dim, std::span<const std::size_t> hidden,
                          std::size_t output_dim, Task task, std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0) {
    throw Error(ErrorKind::kInvalidArgument, "model dimensions must be positive");
  }
  Rng rng(derive_seed(seed, 0x1417));
  MlpModel model;
  model.task = task;
  std::size_t in = input_dim;
  auto add = [&](std::size_t out) {
    if (out == 0) throw Error(ErrorKind::kInvalidArgument, "hidden width must be positive");
    LinearLayer layer;
    layer.weight = Matrix::random_normal(out, in, rng, std::sqrt(2.0 / static_cast<double>(in)));
    layer.bias.assign(out, 0.0);
    model.layers.push_back(std::move(layer));
    in = out;
  };
  for (std::size_t h : hidden) add(h);
  add(output_dim);
  return model;
}

std::size_t MlpModel::num_factorized() const noexcept {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) {
    return l.kind == LayerKind::kFactorized;
  }));
}

void MlpModel::validate() const {
  if (layers.empty()) throw Error(ErrorKind::kInvalidArgument, "model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate("layer" + std::to_string(l));
    if (l > 0 && layers[l].in_features() != layers[l - 1].out_features()) {
      throw Error(ErrorKind::kShapeMismatch,
                  "layer" + std::to_string(l) + ": input width does not chain");
    }
  }
  if (task == Task::kRegression && output_dim() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "regression model must have one output");
  }
}

namespace {

void add_bias(Matrix& y, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
}

void relu_inplace(Matrix& y) {
  for (double& x : y.data()) x = x > 0.0 ? x : 0.0;
}

}  // namespace

Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache* cache,
               GateSpan gates) {
  if (model.layers.empty()) throw Error(ErrorKind::kInvalidArgument, "model has no layers");
  if (batch.cols() != model.input_dim()) {
    std::ostringstream os;
    os << "forward: batch has " << batch.cols() << " columns, model expects "
       << model.input_dim();
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
  if (!gates.empty() && gates.size() != model.num_factorized()) {
    std::ostringstream os;
    os << "forward: gate vector length " << gates.size() << " but model has "
       << model.num_factorized() << " factorized layers";
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
  const std::size_t depth = model.layers.size();
  if (cache) {
    cache->inputs.assign(depth, Matrix());
    cache->low_rank.assign(depth, Matrix());
    cache->shadow.assign(depth, 0);
  }
  Matrix x = batch;
  std::size_t gate_index = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    const LinearLayer& layer = model.layers[l];
    Matrix y;
    bool use_shadow = false;
    if (layer.kind == LayerKind::kFactorized) {
      use_shadow = !gates.empty() && gates[gate_index] != 0;
      ++gate_index;
    }
    if (layer.kind == LayerKind::kFactorized && !use_shadow) {
      Matrix h = matmul_nt(x, layer.factors.b);
      y = matmul_nt(h, layer.factors.a);
      if (cache) cache->low_rank[l] = std::move(h);
    } else {
      y = matmul_nt(x, layer.masked_weight());
    }
    add_bias(y, layer.bias);
    if (l + 1 < depth) relu_inplace(y);
    if (cache) {
      cache->shadow[l] = use_shadow ? 1 : 0;
      cache->inputs[l] = std::move(x);
    }
    x = std::move(y);
  }
  return x;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& d_logits) {
  const std::size_t depth = model.layers.size();
  if (cache.inputs.size() != depth) {
    throw Error(ErrorKind::kInvalidArgument, "backward: cache does not match model");
  }
  Gradients grads(depth);
  Matrix dy = d_logits;
  for (std::size_t l = depth; l-- > 0;) {
    const LinearLayer& layer = model.layers[l];
    const Matrix& x = cache.inputs[l];
    LayerGrads& g = grads[l];
    g.bias.assign(layer.out_features(), 0.0);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
      auto r = dy.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
    }
    Matrix dx;
    const bool low_rank_path = layer.kind == LayerKind::kFactorized && !cache.shadow[l];
    if (low_rank_path) {
      const Matrix& h = cache.low_rank[l];
      g.a = matmul_tn(dy, h);
      Matrix dh = matmul(dy, layer.factors.a);
      g.b = matmul_tn(dh, x);
      g.factors_used = true;
      if (l > 0) dx = matmul(dh, layer.factors.b);
    } else {
      // Straight-through: the gradient w.r.t. W ignores the mask.
      g.weight = matmul_tn(dy, x);
      g.weight_used = true;
      if (l > 0) dx = matmul(dy, layer.masked_weight());
    }
    if (l > 0) {
      // x is the ReLU output of layer l-1.
      const auto xd = x.data();
      auto dd = dx.data();
      for (std::size_t i = 0; i < dd.size(); ++i)
        if (!(xd[i] > 0.0)) dd[i] = 0.0;
      dy = std::move(dx);
    }
  }
  return grads;
}

void accumulate(Gradients& into, const Gradients& from) {
  if (into.size() != from.size()) {
    throw Error(ErrorKind::kShapeMismatch, "accumulate: gradient layer counts differ");
  }
  auto add_matrix = [](Matrix& dst, const Matrix& src) {
    if (src.empty()) return;
    if (dst.empty()) {
      dst = src;
    } else {
      dst += src;
    }
  };
  for (std::size_t l = 0; l < into.size(); ++l) {
    LayerGrads& d = into[l];
    const LayerGrads& s = from[l];
    add_matrix(d.weight, s.weight);
    add_matrix(d.a, s.a);
    add_matrix(d.b, s.b);
    if (d.bias.empty()) {
      d.bias = s.bias;
    } else if (!s.bias.empty()) {
      for (std::size_t j = 0; j < d.bias.size(); ++j) d.bias[j] += s.bias[j];
    }
    d.weight_used = d.weight_used || s.weight_used;
    d.factors_used = d.factors_used || s.factors_used;
  }
}

LossOutput task_loss(const Matrix& logits, std::span<const double> labels, Task task) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "task_loss: label count differs from batch rows");
  }
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossOutput out;
  out.d_logits = Matrix(n, c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto y = logits.row(i);
    auto d = out.d_logits.row(i);
    double row_loss = 0.0;
    if (task == Task::kClassification) {
      const auto label = static_cast<std::size_t>(labels[i]);
      if (label >= c) {
        throw Error(ErrorKind::kInvalidArgument,
                    "task_loss: class id " + std::to_string(label) + " out of range");
      }
      const double mx = *std::max_element(y.begin(), y.end());
      double z = 0.0;
      for (double v : y) z += std::exp(v - mx);
      const double lse = mx + std::log(z);
      row_loss = lse - y[label];
      for (std::size_t j = 0; j < c; ++j) d[j] = std::exp(y[j] - lse) * inv_n;
      d[label] -= inv_n;
    } else {
      if (c != 1) throw Error(ErrorKind::kShapeMismatch, "task_loss: regression needs 1 output");
      const double diff = y[0] - labels[i];
      row_loss = diff * diff;
      d[0] = 2.0 * diff * inv_n;
    }
    if (!std::isfinite(row_loss)) {
      throw Error(ErrorKind::kNonFinite,
                  "task_loss: non-finite loss at batch row " + std::to_string(i));
    }
    total += row_loss;
  }
  out.loss = total * inv_n;
  return out;
}

LossAndGrads loss_and_grads(const MlpModel& model, const Matrix& batch,
                            std::span<const double> labels, GateSpan gates) {
  ForwardCache cache;
  const Matrix logits = forward(model, batch, &cache, gates);
  LossOutput lo = task_loss(logits, labels, model.task);
  return {lo.loss, backward(model, cache, lo.d_logits)};
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWSlot& slot,
                const AdamWConfig& config, bool apply_decay) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::kShapeMismatch, "adamw_step: parameter and gradient sizes differ");
  }
  if (slot.m.empty()) {
    slot.m.assign(params.size(), 0.0);
    slot.v.assign(params.size(), 0.0);
  } else if (slot.m.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "adamw_step: optimizer state size differs");
  }
  ++slot.step;
  const double t = static_cast<double>(slot.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = apply_decay ? config.learning_rate * config.weight_decay : 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g;
    slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = slot.m[i] / bc1;
    const double v_hat = slot.v[i] / bc2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps) +
                 decay * params[i];
  }
}

void Optimizer::step(MlpModel& model, const Gradients& grads) {
  if (grads.size() != model.layers.size()) {
    throw Error(ErrorKind::kShapeMismatch, "optimizer: gradient layer count differs");
  }
  if (slots_.size() != model.layers.size()) slots_.assign(model.layers.size(), LayerSlots{});
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    LinearLayer& layer = model.layers[l];
    const LayerGrads& g = grads[l];
    LayerSlots& s = slots_[l];
    if (g.weight_used) {
      adamw_step(layer.weight.data(), g.weight.data(), s.weight, config_, true);
      if (layer.has_mask()) {
        auto w = layer.weight.data();
        auto m = layer.mask.data();
        for (std::size_t i = 0; i < w.size(); ++i)
          if (m[i] == 0.0) w[i] = 0.0;
      }
    }
    if (g.factors_used) {
      adamw_step(layer.factors.a.data(), g.a.data(), s.a, config_, true);
      adamw_step(layer.factors.b.data(), g.b.data(), s.b, config_, true);
    }
    if (!g.bias.empty()) adamw_step(layer.bias, g.bias, s.bias, config_, false);
  }
}

}  // namespace lpaf
