#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lpaf/linalg.hpp"
#include "lpaf/matrix.hpp"

namespace lpaf {

enum class Task { kClassification, kRegression };
enum class LayerKind { kDense, kSparse, kFactorized };

std::string_view to_string(Task task);
std::string_view to_string(LayerKind kind);
Task task_from_string(std::string_view name);
LayerKind layer_kind_from_string(std::string_view name);

// One affine layer y = W x + b.
//
// kDense:      `weight` is used as-is.
// kSparse:     the forward pass uses weight (.) mask; `weight` is kept at exact
//              zero wherever mask is 0. `score` holds the pruning importances.
// kFactorized: the forward pass uses factors.a * factors.b. `weight` holds the
//              shadow matrix the factors were derived from (masked by `mask`
//              when the layer came from a sparse one) and is only read when a
//              mixed-rank gate selects it.
struct LinearLayer {
  LayerKind kind = LayerKind::kDense;
  Matrix weight;
  std::vector<double> bias;
  Matrix mask;
  Matrix score;
  FactorPair factors;

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }
  bool has_mask() const noexcept { return !mask.empty(); }

  // The matrix the default (ungated) forward pass multiplies by.
  Matrix effective_weight() const;
  // weight (.) mask, or weight when there is no mask.
  Matrix masked_weight() const;

  // Throws on any violated layer invariant.
  void validate(std::string_view name) const;
};

// Feed-forward network: ReLU after every layer except the last.
struct MlpModel {
  std::vector<LinearLayer> layers;
  Task task = Task::kClassification;

  // He-normal weights, zero biases.
  static MlpModel create(std::size_t input_dim, std::span<const std::size_t> hidden,
                         std::size_t output_dim, Task task, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return layers.front().in_features(); }
  std::size_t output_dim() const noexcept { return layers.back().out_features(); }
  std::size_t num_factorized() const noexcept;
  void validate() const;
};

// Per-layer intermediates recorded by forward() for backward().
struct ForwardCache {
  std::vector<Matrix> inputs;       // input to layer l (batch x in)
  std::vector<Matrix> low_rank;     // x * B^T for layers computed through factors
  std::vector<std::uint8_t> shadow; // 1 where the layer used its shadow matrix
};

// Gate vector for mixed-rank passes: one entry per factorized layer, in layer
// order; 1 selects the shadow matrix. An empty span means all zeros.
using GateSpan = std::span<const std::uint8_t>;

Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache* cache = nullptr,
               GateSpan gates = {});

struct LayerGrads {
  Matrix weight;  // d/dW; straight-through for sparse layers (mask ignored)
  std::vector<double> bias;
  Matrix a;
  Matrix b;
  bool weight_used = false;
  bool factors_used = false;
};
using Gradients = std::vector<LayerGrads>;

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& d_logits);

// Element-wise accumulate `from` into `into`; used flags are OR-ed.
void accumulate(Gradients& into, const Gradients& from);

struct LossOutput {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean cross-entropy over rows (softmax applied internally) for
// classification; mean squared error for regression (single output).
LossOutput task_loss(const Matrix& logits, std::span<const double> labels, Task task);

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

LossAndGrads loss_and_grads(const MlpModel& model, const Matrix& batch,
                            std::span<const double> labels, GateSpan gates = {});

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// One AdamW update with bias correction and decoupled weight decay:
//   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWSlot& slot,
                const AdamWConfig& config, bool apply_decay);

// AdamW over every tensor of a model. Tensors whose gradient was not produced
// in a step (an unselected mixed-rank path) are left untouched, moments
// included. Masked tensors are re-masked after the update.
class Optimizer {
 public:
  explicit Optimizer(const AdamWConfig& config) : config_(config) {}

  void step(MlpModel& model, const Gradients& grads);
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  struct LayerSlots {
    AdamWSlot weight, bias, a, b;
  };
  AdamWConfig config_;
  std::vector<LayerSlots> slots_;
};

}  // namespace lpaf
