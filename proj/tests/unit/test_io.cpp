#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpaf/error.hpp"
#include "lpaf/factorize.hpp"
#include "lpaf/io.hpp"
#include "lpaf/rng.hpp"
#include "support/random_models.hpp"

using namespace lpaf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lpaf_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void expect_same(const MlpModel& a, const MlpModel& b) {
  ASSERT_EQ(a.layers.size(), b.layers.size());
  EXPECT_EQ(a.task, b.task);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const LinearLayer& x = a.layers[l];
    const LinearLayer& y = b.layers[l];
    EXPECT_EQ(x.kind, y.kind) << l;
    EXPECT_EQ(x.weight, y.weight) << l;
    EXPECT_EQ(x.bias, y.bias) << l;
    EXPECT_EQ(x.mask, y.mask) << l;
    EXPECT_EQ(x.score, y.score) << l;
    EXPECT_EQ(x.factors.a, y.factors.a) << l;
    EXPECT_EQ(x.factors.b, y.factors.b) << l;
  }
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

void write_json(const fs::path& p, const nlohmann::json& j) { write_text_file(p, j.dump(2)); }

std::string load_error(const fs::path& dir) {
  try {
    load_checkpoint(dir);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCheckpoint);
    return e.what();
  }
  ADD_FAILURE() << "load succeeded";
  return {};
}

// A checkpoint with one sparse, one factorized and one dense layer.
fs::path mixed_checkpoint(const std::string& name) {
  Rng rng(1);
  MlpModel m = MlpModel::create(5, std::vector<std::size_t>{4, 3}, 2, Task::kClassification, 1);
  for (std::size_t l : {0u, 1u}) {
    m.layers[l].kind = LayerKind::kSparse;
    m.layers[l].mask = Matrix(m.layers[l].out_features(), m.layers[l].in_features(), 1.0);
    m.layers[l].score = Matrix::random_normal(m.layers[l].out_features(),
                                              m.layers[l].in_features(), rng);
  }
  FactorizeSpec spec;
  spec.k = 2;
  spec.layers = {1};
  m = factorize_model(m, spec);
  const fs::path dir = scratch(name);
  save_checkpoint(m, dir);
  return dir;
}

}  // namespace

TEST(Checkpoint, RandomModelsRoundTripBitExact) {
  Rng rng(2024);
  const fs::path dir = scratch("roundtrip");
  for (int t = 0; t < 20; ++t) {
    const MlpModel m = fixtures::random_model(rng, 100 + t);
    save_checkpoint(m, dir);
    const MlpModel back = load_checkpoint(dir);
    expect_same(m, back);
    EXPECT_TRUE(fixtures::same_model(m, back));
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, ManifestListsRolesAndOffsets) {
  const fs::path dir = mixed_checkpoint("manifest");
  const auto recs = read_manifest(dir);
  std::size_t offset = 0;
  bool saw_shadow = false, saw_factor = false;
  for (const auto& r : recs) {
    EXPECT_EQ(r.byte_offset, offset) << r.name;
    EXPECT_EQ(r.name, "layers." + std::to_string(r.layer) + "." + r.role);
    offset += r.byte_length;
    saw_shadow |= r.role == "shadow";
    saw_factor |= r.role == "factor_a";
    if (r.layer == 1) EXPECT_NE(r.role, "weight");
  }
  EXPECT_TRUE(saw_shadow);
  EXPECT_TRUE(saw_factor);
  EXPECT_EQ(fs::file_size(dir / kBlobFile), offset);
  fs::remove_all(dir);
}

TEST(Checkpoint, TruncatedBlobNamesTheTensor) {
  const fs::path dir = mixed_checkpoint("truncated");
  const auto recs = read_manifest(dir);
  fs::resize_file(dir / kBlobFile, recs.back().byte_offset + 8);
  const std::string msg = load_error(dir);
  EXPECT_NE(msg.find("tensor " + recs.back().name), std::string::npos) << msg;
  EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(Checkpoint, UnknownDtypeIsRejected) {
  const fs::path dir = mixed_checkpoint("dtype");
  auto j = read_json(dir / kManifestFile);
  j["tensors"][0]["dtype"] = "float16";
  write_json(dir / kManifestFile, j);
  const std::string msg = load_error(dir);
  EXPECT_NE(msg.find("unknown dtype 'float16'"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(Checkpoint, UnknownRoleIsRejected) {
  const fs::path dir = mixed_checkpoint("role");
  auto j = read_json(dir / kManifestFile);
  j["tensors"][1]["role"] = "momentum";
  write_json(dir / kManifestFile, j);
  EXPECT_NE(load_error(dir).find("unknown role 'momentum'"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  const fs::path dir = mixed_checkpoint("shape");
  auto j = read_json(dir / kManifestFile);
  j["tensors"][0]["shape"] = {5, 4};
  write_json(dir / kManifestFile, j);
  const std::string msg = load_error(dir);
  EXPECT_NE(msg.find("does not match expected"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(Checkpoint, MissingTensorAndMissingDirectory) {
  const fs::path dir = mixed_checkpoint("missing");
  auto j = read_json(dir / kManifestFile);
  auto& ts = j["tensors"];
  for (auto it = ts.begin(); it != ts.end(); ++it) {
    if ((*it)["name"] == "layers.1.factor_b") {
      ts.erase(it);
      break;
    }
  }
  write_json(dir / kManifestFile, j);
  EXPECT_NE(load_error(dir).find("layers.1.factor_b: missing"), std::string::npos);
  fs::remove_all(dir);
  EXPECT_THROW(load_checkpoint(dir), Error);
}

TEST(Checkpoint, BlobPathMustStayInsideDirectory) {
  const fs::path dir = mixed_checkpoint("escape");
  auto j = read_json(dir / kManifestFile);
  j["tensors"][0]["blob_file"] = "../tensors.bin";
  write_json(dir / kManifestFile, j);
  EXPECT_NE(load_error(dir).find("plain file name"), std::string::npos);
  fs::remove_all(dir);
}

TEST(DatasetCsv, ParsesAndRoundTrips) {
  const fs::path dir = scratch("csv");
  write_text_file(dir / "d.csv", "\xEF\xBB\xBF" "a,b,label\n1.5,-2,0\n\n0,3e-1,2\n");
  const Dataset d = read_dataset_csv(dir / "d.csv", Task::kClassification);
  EXPECT_EQ(d.features, Matrix::from_rows({{1.5, -2}, {0, 0.3}}));
  EXPECT_EQ(d.labels, (std::vector<double>{0, 2}));
  EXPECT_EQ(d.num_classes, 3u);

  write_dataset_csv(d, dir / "e.csv");
  const Dataset e = read_dataset_csv(dir / "e.csv", Task::kClassification, 3);
  EXPECT_EQ(e.features, d.features);
  EXPECT_EQ(e.labels, d.labels);
  fs::remove_all(dir);
}

TEST(DatasetCsv, ErrorsCarryLineAndColumn) {
  const fs::path dir = scratch("csv_err");
  auto message = [&](const std::string& text, Task task = Task::kClassification) {
    write_text_file(dir / "x.csv", text);
    try {
      read_dataset_csv(dir / "x.csv", task);
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("a,label\n1,0\n2,zz\n").find("x.csv:3:2: not a finite number"),
            std::string::npos);
  EXPECT_NE(message("a,b,label\n1,2,0\n1,2\n").find("x.csv:3: expected 3 columns"),
            std::string::npos);
  EXPECT_NE(message("a,label\nnan,1\n").find("x.csv:2:1"), std::string::npos);
  EXPECT_NE(message("a,label\n1,0.5\n").find("non-negative integer"), std::string::npos);
  EXPECT_NE(message("a,b\n1,2\n").find("'label'"), std::string::npos);
  EXPECT_NE(message("").find("empty file"), std::string::npos);
  EXPECT_NE(message("a,label\n").find("no data rows"), std::string::npos);
  EXPECT_EQ(message("a,label\n1,0.5\n", Task::kRegression), "no error");
  fs::remove_all(dir);
}
