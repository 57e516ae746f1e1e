#include <gtest/gtest.h>

#include <set>

#include "lpaf/data.hpp"
#include "lpaf/error.hpp"
#include "lpaf/linalg.hpp"
#include "lpaf/train.hpp"

using namespace lpaf;

TEST(Synthetic, SameSeedIsBitIdentical) {
  for (SyntheticKind kind :
       {SyntheticKind::kBlobs, SyntheticKind::kSpirals, SyntheticKind::kLowRankTeacher}) {
    SyntheticSpec spec;
    spec.kind = kind;
    spec.num_examples = 300;
    spec.input_dim = 8;
    spec.num_classes = 3;
    spec.teacher_hidden = 16;
    spec.seed = 42;
    const Dataset a = generate_synthetic(spec);
    const Dataset b = generate_synthetic(spec);
    EXPECT_EQ(a.features, b.features) << to_string(kind);
    EXPECT_EQ(a.labels, b.labels) << to_string(kind);
    spec.seed = 43;
    EXPECT_NE(generate_synthetic(spec).features, a.features);
  }
}

TEST(Synthetic, TeacherFirstLayerHasPlantedRank) {
  SyntheticSpec spec;
  spec.teacher_rank = 4;
  const MlpModel teacher = make_teacher(spec);
  EXPECT_EQ(numerical_rank(teacher.layers[0].weight), 4u);
}

TEST(Synthetic, DeeperTeacherKeepsPlantedFirstLayer) {
  SyntheticSpec spec;
  spec.teacher_rank = 6;
  spec.teacher_depth = 3;
  spec.teacher_hidden = 32;
  const MlpModel teacher = make_teacher(spec);
  EXPECT_EQ(teacher.layers.size(), 4u);
  EXPECT_EQ(numerical_rank(teacher.layers[0].weight), 6u);
  EXPECT_EQ(numerical_rank(teacher.layers[1].weight), 32u);
}

TEST(Synthetic, LabelsCoverClassesAndRespectBounds) {
  SyntheticSpec spec;
  spec.num_examples = 2000;
  const Dataset d = generate_synthetic(spec);
  EXPECT_EQ(d.size(), 2000u);
  EXPECT_EQ(d.input_dim(), 64u);
  std::set<double> seen(d.labels.begin(), d.labels.end());
  EXPECT_GE(seen.size(), 5u);
  for (double y : d.labels) EXPECT_LT(y, 10.0);
}

TEST(Synthetic, SeparatedBlobsAreLinearlySeparable) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kBlobs;
  spec.num_examples = 2000;
  spec.input_dim = 16;
  spec.num_classes = 5;
  spec.separation = 6.0;
  const DataSplit split = split_dataset(generate_synthetic(spec), 0.25);
  MlpModel linear = MlpModel::create(16, std::vector<std::size_t>{}, 5,
                                     Task::kClassification, 0);
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.learning_rate = 1e-2;
  train(linear, split.train, cfg);
  EXPECT_GT(evaluate(linear, split.test), 0.95);
}

TEST(Synthetic, RegressionTeacher) {
  SyntheticSpec spec;
  spec.task = Task::kRegression;
  spec.num_examples = 100;
  const Dataset d = generate_synthetic(spec);
  EXPECT_EQ(d.output_dim(), 1u);
  EXPECT_EQ(d.num_classes, 0u);
}

TEST(Synthetic, InvalidParametersAreRejected) {
  SyntheticSpec spec;
  spec.num_classes = 1;
  EXPECT_THROW(generate_synthetic(spec), Error);
  spec = SyntheticSpec{};
  spec.input_dim = 1;
  EXPECT_THROW(generate_synthetic(spec), Error);
  spec = SyntheticSpec{};
  spec.num_examples = 5;
  EXPECT_THROW(generate_synthetic(spec), Error);
  spec = SyntheticSpec{};
  spec.teacher_rank = 0;
  EXPECT_THROW(generate_synthetic(spec), Error);
}

TEST(Split, TailBecomesTestSet) {
  Dataset d;
  d.features = Matrix(10, 1);
  for (std::size_t i = 0; i < 10; ++i) {
    d.features(i, 0) = static_cast<double>(i);
    d.labels.push_back(static_cast<double>(i % 2));
  }
  d.num_classes = 2;
  const DataSplit s = split_dataset(d, 0.3);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
  EXPECT_EQ(s.test.features(0, 0), 7.0);
}

TEST(Batcher, EpochVisitsEveryRowOnce) {
  Dataset d;
  d.features = Matrix(12, 1);
  for (std::size_t i = 0; i < 12; ++i) {
    d.features(i, 0) = static_cast<double>(i);
    d.labels.push_back(0.0);
  }
  d.num_classes = 2;
  Batcher b(d, 4, 9);
  std::multiset<double> seen;
  for (int i = 0; i < 3; ++i) {
    const Batch batch = b.next();
    for (std::size_t r = 0; r < 4; ++r) seen.insert(batch.features(r, 0));
  }
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_EQ(std::set<double>(seen.begin(), seen.end()).size(), 12u);
}
