#include "lpaf/factorize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lpaf/error.hpp"
#include "lpaf/prune.hpp"

namespace lpaf {

namespace {

constexpr double kShiftDelta = 1e-12;

RowImportance normalize_rows(std::vector<double> raw, double floor) {
  if (!(floor > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "importance floor must be positive");
  }
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  RowImportance out;
  out.epsilon_floor = floor;
  out.s_hat.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = total > 0.0 ? raw[i] / total : 1.0 / static_cast<double>(raw.size());
    out.s_hat[i] = std::max(v, floor);
  }
  return out;
}

}  // namespace

RowImportance row_importance(const Matrix& score, double epsilon_floor) {
  if (score.cols() == 0 || score.rows() == 0) {
    throw Error(ErrorKind::kInvalidArgument, "row_importance: empty score matrix");
  }
  require_finite(score, "row_importance scores");
  const double mn = *std::min_element(score.data().begin(), score.data().end());
  const double shift = (mn < 0.0 ? -mn : 0.0) + kShiftDelta;
  std::vector<double> raw(score.rows(), 0.0);
  for (std::size_t i = 0; i < score.rows(); ++i)
    for (double s : score.row(i)) raw[i] += s + shift;
  return normalize_rows(std::move(raw), epsilon_floor);
}

RowImportance mask_importance(const Matrix& mask, double epsilon_floor) {
  if (mask.empty()) throw Error(ErrorKind::kInvalidArgument, "mask_importance: empty mask");
  std::vector<double> raw(mask.rows(), 0.0);
  for (std::size_t i = 0; i < mask.rows(); ++i)
    for (double m : mask.row(i)) raw[i] += m;
  return normalize_rows(std::move(raw), epsilon_floor);
}

RowImportance uniform_importance(std::size_t rows) {
  RowImportance out;
  out.s_hat.assign(rows, 1.0 / static_cast<double>(rows));
  return out;
}

FactorPair sparsity_aware_factorize(const Matrix& weight, const RowImportance& importance,
                                    std::size_t k) {
  if (importance.s_hat.size() != weight.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "sparsity_aware_factorize: importance length " +
                                               std::to_string(importance.s_hat.size()) +
                                               " vs " + std::to_string(weight.rows()) + " rows");
  }
  const std::size_t max_rank = std::min(weight.rows(), weight.cols());
  if (k < 1 || k > max_rank) {
    std::ostringstream os;
    os << "sparsity_aware_factorize: rank " << k << " outside [1, " << max_rank << "]";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  for (double s : importance.s_hat) {
    if (!(s > 0.0)) {
      throw Error(ErrorKind::kInvalidArgument, "sparsity_aware_factorize: non-positive importance");
    }
  }
  FactorPair f = truncate(svd(scale_rows(importance.s_hat, weight)), k);
  std::vector<double> inverse(importance.s_hat.size());
  for (std::size_t i = 0; i < inverse.size(); ++i) inverse[i] = 1.0 / importance.s_hat[i];
  f.a = scale_rows(inverse, f.a);
  return f;
}

FactorPair vanilla_factorize(const Matrix& weight, std::size_t k) {
  return truncate(svd(weight), k);
}

double weighted_error(const Matrix& weight, const RowImportance& importance,
                      const FactorPair& factors) {
  return frobenius_norm(scale_rows(importance.s_hat, weight - factors.product()));
}

std::string_view to_string(Weighting weighting) {
  switch (weighting) {
    case Weighting::kScore: return "score";
    case Weighting::kMask: return "mask";
    case Weighting::kNone: return "none";
  }
  return "unknown";
}

Weighting weighting_from_string(std::string_view name) {
  if (name == "score") return Weighting::kScore;
  if (name == "mask") return Weighting::kMask;
  if (name == "none") return Weighting::kNone;
  throw Error(ErrorKind::kInvalidArgument, "unknown weighting '" + std::string(name) + "'");
}

std::size_t FactorizeSpec::rank_for(std::size_t layer, std::size_t rows, std::size_t cols) const {
  const std::size_t max_rank = std::min(rows, cols);
  const auto it = k_per_layer.find(layer);
  if (it == k_per_layer.end() && k != 0) return std::min(k, max_rank);
  const std::size_t requested = it != k_per_layer.end() ? it->second : k;
  if (requested == kFullRank) return max_rank;
  if (requested < 1 || requested > max_rank) {
    std::ostringstream os;
    os << "layer" << layer << ": rank " << requested << " outside [1, " << max_rank << "]";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  return requested;
}

MlpModel factorize_model(const MlpModel& model, const FactorizeSpec& spec) {
  model.validate();
  const std::vector<std::size_t> selected =
      spec.layers.empty() ? default_compressible_layers(model) : spec.layers;
  MlpModel out = model;
  for (std::size_t l : selected) {
    if (l >= model.layers.size()) {
      throw Error(ErrorKind::kInvalidArgument, "factorize: layer index " + std::to_string(l) +
                                                   " out of range");
    }
    LinearLayer& layer = out.layers[l];
    const std::string name = "layer" + std::to_string(l);
    if (layer.kind == LayerKind::kFactorized) {
      throw Error(ErrorKind::kInvalidArgument, "factorize: " + name + " is already factorized");
    }
    if (layer.kind == LayerKind::kDense && spec.weighting != Weighting::kNone) {
      throw Error(ErrorKind::kInvalidArgument,
                  "factorize: " + name + " is dense; only weighting 'none' applies");
    }
    const std::size_t k = spec.rank_for(l, layer.out_features(), layer.in_features());
    const Matrix w = layer.masked_weight();
    switch (spec.weighting) {
      case Weighting::kScore:
        if (layer.score.empty()) {
          throw Error(ErrorKind::kInvalidArgument,
                      "factorize: " + name + " has no scores for score weighting");
        }
        layer.factors =
            sparsity_aware_factorize(w, row_importance(layer.score, spec.epsilon_floor), k);
        break;
      case Weighting::kMask:
        layer.factors =
            sparsity_aware_factorize(w, mask_importance(layer.mask, spec.epsilon_floor), k);
        break;
      case Weighting::kNone:
        layer.factors = vanilla_factorize(w, k);
        break;
    }
    layer.kind = LayerKind::kFactorized;
  }
  return out;
}

std::size_t rank_for_fraction(const MlpModel& model, std::span<const std::size_t> layers,
                              double fraction) {
  if (!(fraction > 0.0)) throw Error(ErrorKind::kInvalidArgument, "fraction must be positive");
  double dense = 0.0;
  double per_rank = 0.0;
  for (std::size_t l : layers) {
    const auto n = model.layers.at(l).out_features();
    const auto m = model.layers.at(l).in_features();
    dense += static_cast<double>(n * m);
    per_rank += static_cast<double>(n + m);
  }
  if (per_rank == 0.0) throw Error(ErrorKind::kInvalidArgument, "no layers selected");
  const auto k = static_cast<std::size_t>(std::llround(fraction * dense / per_rank));
  return std::max<std::size_t>(k, 1);
}

}  // namespace lpaf
