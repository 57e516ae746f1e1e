#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lpaf/matrix.hpp"
#include "lpaf/nn.hpp"
#include "lpaf/rng.hpp"

namespace lpaf {

// Features plus one label per row. Classification labels are integral class
// ids stored as doubles; regression labels are real targets.
struct Dataset {
  Matrix features;
  std::vector<double> labels;
  Task task = Task::kClassification;
  std::size_t num_classes = 0;  // 0 for regression

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }
  std::size_t output_dim() const noexcept {
    return task == Task::kClassification ? num_classes : 1;
  }

  Dataset subset(std::span<const std::size_t> rows) const;
  void validate() const;
};

enum class SyntheticKind { kBlobs, kSpirals, kLowRankTeacher };

std::string_view to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(std::string_view name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kLowRankTeacher;
  std::size_t num_examples = 6000;
  std::size_t input_dim = 64;
  std::size_t num_classes = 10;
  Task task = Task::kClassification;
  // blobs: distance scale of the class centers.
  double separation = 4.0;
  // blobs/spirals: feature noise; lowrank_teacher: logit noise before argmax.
  double noise = 0.0;
  // lowrank_teacher: planted rank of the first teacher matrix, hidden width,
  // and number of hidden layers (layers after the first are full rank).
  std::size_t teacher_rank = 4;
  std::size_t teacher_hidden = 128;
  std::size_t teacher_depth = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// The frozen teacher behind kLowRankTeacher; its first weight matrix is
// U V^T with U, V having `teacher_rank` columns.
MlpModel make_teacher(const SyntheticSpec& spec);

Dataset generate_synthetic(const SyntheticSpec& spec);

struct DataSplit {
  Dataset train;
  Dataset test;
};

// The last round(test_fraction * n) rows become the test split.
DataSplit split_dataset(const Dataset& data, double test_fraction);

struct Batch {
  Matrix features;
  std::vector<double> labels;
};

// Fixed-size minibatches in seeded per-epoch shuffled order. An epoch ends
// when fewer than batch_size unseen rows remain.
class Batcher {
 public:
  Batcher(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  Batch next();

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

}  // namespace lpaf
