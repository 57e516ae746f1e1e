#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lpaf/data.hpp"
#include "lpaf/nn.hpp"

namespace lpaf {

// Checkpoint layout: <dir>/manifest.json plus <dir>/tensors.bin holding every
// tensor as row-major little-endian float64, back to back.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

struct TensorRecord {
  std::string name;  // e.g. "layers.1.factor_a"
  std::string role;  // weight, bias, mask, score, factor_a, factor_b, shadow
  std::size_t layer = 0;
  std::vector<std::size_t> shape;
  std::string dtype = "float64";
  std::string blob_file = kBlobFile;
  std::size_t byte_offset = 0;
  std::size_t byte_length = 0;
};

// Writes the checkpoint, creating `dir` if needed. Existing files of the same
// names are overwritten.
void save_checkpoint(const MlpModel& model, const std::filesystem::path& dir);
MlpModel load_checkpoint(const std::filesystem::path& dir);

// Records the manifest at `dir` lists, in file order.
std::vector<TensorRecord> read_manifest(const std::filesystem::path& dir);

// Header row of feature names then `label`; one example per line.
Dataset read_dataset_csv(const std::filesystem::path& path, Task task,
                         std::optional<std::size_t> num_classes = std::nullopt);
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lpaf
