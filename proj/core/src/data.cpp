#include "lpaf/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lpaf/error.hpp"

namespace lpaf {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.features = Matrix(rows.size(), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.size() != features.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "dataset: label count " +
                                               std::to_string(labels.size()) +
                                               " differs from feature rows " +
                                               std::to_string(features.rows()));
  }
  require_finite(features, "dataset features");
  if (task == Task::kClassification) {
    if (num_classes < 2) throw Error(ErrorKind::kInvalidArgument, "dataset: num_classes < 2");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double y = labels[i];
      if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(num_classes)) {
        throw Error(ErrorKind::kInvalidArgument,
                    "dataset: invalid class id at row " + std::to_string(i));
      }
    }
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!std::isfinite(labels[i])) {
        throw Error(ErrorKind::kNonFinite, "dataset: non-finite target at row " +
                                               std::to_string(i));
      }
    }
  }
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kBlobs: return "blobs";
    case SyntheticKind::kSpirals: return "spirals";
    case SyntheticKind::kLowRankTeacher: return "lowrank_teacher";
  }
  return "unknown";
}

SyntheticKind synthetic_kind_from_string(std::string_view name) {
  if (name == "blobs") return SyntheticKind::kBlobs;
  if (name == "spirals") return SyntheticKind::kSpirals;
  if (name == "lowrank_teacher") return SyntheticKind::kLowRankTeacher;
  throw Error(ErrorKind::kInvalidArgument, "unknown synthetic dataset kind '" +
                                               std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  auto reject = [](const std::string& what) { throw Error(ErrorKind::kInvalidArgument, what); };
  if (input_dim < 2) reject("synthetic: input_dim must be >= 2");
  if (task == Task::kClassification) {
    if (num_classes < 2) reject("synthetic: num_classes must be >= 2");
    if (num_examples < num_classes) reject("synthetic: num_examples must be >= num_classes");
  } else {
    if (kind != SyntheticKind::kLowRankTeacher) reject("synthetic: regression needs lowrank_teacher");
    if (num_examples < 1) reject("synthetic: num_examples must be positive");
  }
  if (!(noise >= 0.0)) reject("synthetic: noise must be non-negative");
  if (kind == SyntheticKind::kLowRankTeacher) {
    if (teacher_rank < 1 || teacher_rank > std::min(input_dim, teacher_hidden))
      reject("synthetic: teacher_rank must be in [1, min(input_dim, teacher_hidden)]");
    if (teacher_depth < 1) reject("synthetic: teacher_depth must be >= 1");
  }
}

MlpModel make_teacher(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x7EAC4E));
  const std::size_t h = spec.teacher_hidden;
  const std::size_t d = spec.input_dim;
  const std::size_t r = spec.teacher_rank;
  // Scaled so teacher pre-activations are O(1) for standard normal inputs.
  const Matrix u = Matrix::random_normal(h, r, rng, 1.0 / std::sqrt(static_cast<double>(r)));
  const Matrix v = Matrix::random_normal(d, r, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  MlpModel teacher;
  teacher.task = spec.task;
  LinearLayer first;
  first.weight = matmul_nt(u, v);
  first.bias.resize(h);
  for (double& b : first.bias) b = 0.1 * rng.normal();
  LinearLayer second;
  const std::size_t out = spec.task == Task::kClassification ? spec.num_classes : 1;
  second.weight = Matrix::random_normal(out, h, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  second.bias.assign(out, 0.0);
  teacher.layers.push_back(std::move(first));
  for (std::size_t extra = 1; extra < spec.teacher_depth; ++extra) {
    LinearLayer mid;
    mid.weight = Matrix::random_normal(h, h, rng, std::sqrt(2.0 / static_cast<double>(h)));
    mid.bias.resize(h);
    for (double& b : mid.bias) b = 0.1 * rng.normal();
    teacher.layers.push_back(std::move(mid));
  }
  teacher.layers.push_back(std::move(second));
  return teacher;
}

namespace {

Dataset make_blobs(const SyntheticSpec& spec, Rng& rng) {
  const Matrix centers =
      Matrix::random_normal(spec.num_classes, spec.input_dim, rng, spec.separation);
  Dataset out;
  out.features = Matrix(spec.num_examples, spec.input_dim);
  out.labels.resize(spec.num_examples);
  const double spread = spec.noise > 0.0 ? spec.noise : 1.0;
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    const std::size_t c = i % spec.num_classes;
    out.labels[i] = static_cast<double>(c);
    for (std::size_t j = 0; j < spec.input_dim; ++j)
      out.features(i, j) = centers(c, j) + spread * rng.normal();
  }
  return out;
}

Dataset make_spirals(const SyntheticSpec& spec, Rng& rng) {
  Dataset out;
  out.features = Matrix(spec.num_examples, spec.input_dim);
  out.labels.resize(spec.num_examples);
  const double k = static_cast<double>(spec.num_classes);
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    const std::size_t c = i % spec.num_classes;
    const double t = rng.uniform(0.1, 1.0);
    const double angle = 3.0 * std::numbers::pi * t + 2.0 * std::numbers::pi * c / k;
    out.labels[i] = static_cast<double>(c);
    out.features(i, 0) = 2.0 * t * std::cos(angle) + spec.noise * rng.normal();
    out.features(i, 1) = 2.0 * t * std::sin(angle) + spec.noise * rng.normal();
    for (std::size_t j = 2; j < spec.input_dim; ++j) out.features(i, j) = 0.1 * rng.normal();
  }
  return out;
}

Dataset make_lowrank_teacher(const SyntheticSpec& spec, Rng& rng) {
  const MlpModel teacher = make_teacher(spec);
  Dataset out;
  out.features = Matrix::random_normal(spec.num_examples, spec.input_dim, rng);
  const Matrix logits = forward(teacher, out.features);
  out.labels.resize(spec.num_examples);
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    auto row = logits.row(i);
    if (spec.task == Task::kRegression) {
      out.labels[i] = row[0] + spec.noise * rng.normal();
      continue;
    }
    std::size_t best = 0;
    double best_value = -INFINITY;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double value = row[c] + spec.noise * rng.normal();
      if (value > best_value) {
        best_value = value;
        best = c;
      }
    }
    out.labels[i] = static_cast<double>(best);
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0xDA7A));
  Dataset out;
  switch (spec.kind) {
    case SyntheticKind::kBlobs: out = make_blobs(spec, rng); break;
    case SyntheticKind::kSpirals: out = make_spirals(spec, rng); break;
    case SyntheticKind::kLowRankTeacher: out = make_lowrank_teacher(spec, rng); break;
  }
  out.task = spec.task;
  out.num_classes = spec.task == Task::kClassification ? spec.num_classes : 0;
  if (spec.kind != SyntheticKind::kLowRankTeacher) {
    // Interleaved class order would leak into the train/test split; shuffle.
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    out = out.subset(order);
  }
  return out;
}

DataSplit split_dataset(const Dataset& data, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "split: test_fraction must be in [0, 1)");
  }
  const auto n = data.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> train_rows(n - n_test);
  std::vector<std::size_t> test_rows(n_test);
  std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
  std::iota(test_rows.begin(), test_rows.end(), n - n_test);
  return {data.subset(train_rows), data.subset(test_rows)};
}

Batcher::Batcher(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), order_(data.size()), rng_(seed) {
  if (batch_size == 0 || batch_size > data.size()) {
    throw Error(ErrorKind::kInvalidArgument, "batcher: batch size must be in [1, dataset size]");
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void Batcher::reshuffle() {
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
}

Batch Batcher::next() {
  if (cursor_ + batch_size_ > order_.size()) reshuffle();
  Batch b;
  b.features = Matrix(batch_size_, data_->input_dim());
  b.labels.resize(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const std::size_t r = order_[cursor_ + i];
    const auto src = data_->features.row(r);
    std::copy(src.begin(), src.end(), b.features.row(i).begin());
    b.labels[i] = data_->labels[r];
  }
  cursor_ += batch_size_;
  return b;
}

}  // namespace lpaf
