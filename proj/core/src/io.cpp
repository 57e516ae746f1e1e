#include "lpaf/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "lpaf/error.hpp"

namespace lpaf {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kRealBytes = 8;

const std::vector<std::string>& known_roles() {
  static const std::vector<std::string> roles = {"weight", "bias",     "mask",    "score",
                                                  "factor_a", "factor_b", "shadow"};
  return roles;
}

void append_le(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < kRealBytes; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < kRealBytes; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

struct BlobWriter {
  std::string bytes;
  std::vector<TensorRecord> records;

  void add(std::size_t layer, const std::string& role, std::vector<std::size_t> shape,
           const double* values, std::size_t count) {
    TensorRecord r;
    r.name = "layers." + std::to_string(layer) + "." + role;
    r.role = role;
    r.layer = layer;
    r.shape = std::move(shape);
    r.byte_offset = bytes.size();
    r.byte_length = count * kRealBytes;
    for (std::size_t i = 0; i < count; ++i) append_le(bytes, values[i]);
    records.push_back(std::move(r));
  }
  void add(std::size_t layer, const std::string& role, const Matrix& m) {
    add(layer, role, {m.rows(), m.cols()}, m.data().data(), m.size());
  }
  void add(std::size_t layer, const std::string& role, const std::vector<double>& v) {
    add(layer, role, {v.size()}, v.data(), v.size());
  }
};

std::string slurp_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  return slurp_binary(path);
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

void save_checkpoint(const MlpModel& model, const fs::path& dir) {
  model.validate();
  BlobWriter blob;
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LinearLayer& layer = model.layers[l];
    ordered_json entry;
    entry["kind"] = std::string(to_string(layer.kind));
    entry["in_features"] = layer.in_features();
    entry["out_features"] = layer.out_features();
    if (layer.kind == LayerKind::kFactorized) entry["rank"] = layer.factors.rank();
    layers.push_back(entry);

    blob.add(l, layer.kind == LayerKind::kFactorized ? "shadow" : "weight", layer.weight);
    blob.add(l, "bias", layer.bias);
    if (layer.has_mask()) blob.add(l, "mask", layer.mask);
    if (!layer.score.empty()) blob.add(l, "score", layer.score);
    if (layer.kind == LayerKind::kFactorized) {
      blob.add(l, "factor_a", layer.factors.a);
      blob.add(l, "factor_b", layer.factors.b);
    }
  }

  ordered_json tensors = ordered_json::array();
  for (const TensorRecord& r : blob.records) {
    ordered_json t;
    t["name"] = r.name;
    t["role"] = r.role;
    t["layer"] = r.layer;
    t["shape"] = r.shape;
    t["dtype"] = r.dtype;
    t["blob_file"] = r.blob_file;
    t["byte_offset"] = r.byte_offset;
    t["byte_length"] = r.byte_length;
    tensors.push_back(t);
  }
  ordered_json manifest;
  manifest["format"] = "lpaf-checkpoint";
  manifest["version"] = 1;
  manifest["task"] = std::string(to_string(model.task));
  manifest["layers"] = layers;
  manifest["tensors"] = tensors;

  fs::create_directories(dir);
  write_text_file(dir / kBlobFile, blob.bytes);
  write_text_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

namespace {

ordered_json parse_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  try {
    return ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCheckpoint, path.string() + ": " + e.what());
  }
}

template <class T>
T field(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) {
    throw Error(ErrorKind::kCheckpoint, where + ": missing '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::kCheckpoint, where + ": bad value for '" + key + "'");
  }
}

}  // namespace

std::vector<TensorRecord> read_manifest(const fs::path& dir) {
  const ordered_json manifest = parse_manifest(dir);
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw Error(ErrorKind::kCheckpoint, "manifest: missing 'tensors' array");
  }
  std::vector<TensorRecord> out;
  for (std::size_t i = 0; i < manifest["tensors"].size(); ++i) {
    const ordered_json& t = manifest["tensors"][i];
    const std::string where = "manifest tensors[" + std::to_string(i) + "]";
    TensorRecord r;
    r.name = field<std::string>(t, "name", where);
    const std::string named = "tensor " + r.name;
    r.role = field<std::string>(t, "role", named);
    r.layer = field<std::size_t>(t, "layer", named);
    r.shape = field<std::vector<std::size_t>>(t, "shape", named);
    r.dtype = field<std::string>(t, "dtype", named);
    r.blob_file = field<std::string>(t, "blob_file", named);
    r.byte_offset = field<std::size_t>(t, "byte_offset", named);
    r.byte_length = field<std::size_t>(t, "byte_length", named);
    out.push_back(std::move(r));
  }
  return out;
}

MlpModel load_checkpoint(const fs::path& dir) {
  const ordered_json manifest = parse_manifest(dir);
  const auto format = field<std::string>(manifest, "format", "manifest");
  if (format != "lpaf-checkpoint") {
    throw Error(ErrorKind::kCheckpoint, "manifest: unknown format '" + format + "'");
  }
  if (field<int>(manifest, "version", "manifest") != 1) {
    throw Error(ErrorKind::kCheckpoint, "manifest: unsupported version");
  }

  MlpModel model;
  try {
    model.task = task_from_string(field<std::string>(manifest, "task", "manifest"));
  } catch (const Error& e) {
    throw Error(ErrorKind::kCheckpoint, "manifest: " + e.message());
  }
  if (!manifest.contains("layers") || !manifest["layers"].is_array() ||
      manifest["layers"].empty()) {
    throw Error(ErrorKind::kCheckpoint, "manifest: missing 'layers'");
  }
  struct Expect {
    std::size_t in = 0, out = 0, rank = 0;
  };
  std::vector<Expect> expect;
  for (std::size_t l = 0; l < manifest["layers"].size(); ++l) {
    const ordered_json& j = manifest["layers"][l];
    const std::string where = "manifest layers[" + std::to_string(l) + "]";
    LinearLayer layer;
    try {
      layer.kind = layer_kind_from_string(field<std::string>(j, "kind", where));
    } catch (const Error& e) {
      throw Error(ErrorKind::kCheckpoint, where + ": " + e.message());
    }
    Expect e{field<std::size_t>(j, "in_features", where),
             field<std::size_t>(j, "out_features", where), 0};
    if (layer.kind == LayerKind::kFactorized) e.rank = field<std::size_t>(j, "rank", where);
    expect.push_back(e);
    model.layers.push_back(std::move(layer));
  }

  const std::vector<TensorRecord> records = read_manifest(dir);
  std::map<std::string, std::string> blobs;
  std::vector<std::vector<bool>> seen(model.layers.size(),
                                      std::vector<bool>(known_roles().size(), false));
  for (const TensorRecord& r : records) {
    const std::string named = "tensor " + r.name;
    const auto& roles = known_roles();
    const auto role_it = std::find(roles.begin(), roles.end(), r.role);
    if (role_it == roles.end()) {
      throw Error(ErrorKind::kCheckpoint, named + ": unknown role '" + r.role + "'");
    }
    if (r.dtype != "float64") {
      throw Error(ErrorKind::kCheckpoint, named + ": unknown dtype '" + r.dtype + "'");
    }
    if (r.layer >= model.layers.size()) {
      throw Error(ErrorKind::kCheckpoint, named + ": layer index out of range");
    }
    const std::size_t role_index = static_cast<std::size_t>(role_it - roles.begin());
    if (seen[r.layer][role_index]) {
      throw Error(ErrorKind::kCheckpoint, named + ": duplicate tensor");
    }
    seen[r.layer][role_index] = true;

    LinearLayer& layer = model.layers[r.layer];
    const Expect& e = expect[r.layer];
    std::vector<std::size_t> want;
    if (r.role == "bias") {
      want = {e.out};
    } else if (r.role == "factor_a") {
      want = {e.out, e.rank};
    } else if (r.role == "factor_b") {
      want = {e.rank, e.in};
    } else {
      want = {e.out, e.in};
    }
    const bool factor_role = r.role == "factor_a" || r.role == "factor_b" || r.role == "shadow";
    if (factor_role && layer.kind != LayerKind::kFactorized) {
      throw Error(ErrorKind::kCheckpoint,
                  named + ": role '" + r.role + "' does not fit a " +
                      std::string(to_string(layer.kind)) + " layer");
    }
    if (r.role == "weight" && layer.kind == LayerKind::kFactorized) {
      throw Error(ErrorKind::kCheckpoint, named + ": factorized layers store 'shadow'");
    }
    if (r.shape != want) {
      throw Error(ErrorKind::kCheckpoint, named + ": shape " + shape_text(r.shape) +
                                              " does not match expected " + shape_text(want));
    }
    if (r.byte_length != kRealBytes * product(r.shape)) {
      throw Error(ErrorKind::kCheckpoint,
                  named + ": byte_length " + std::to_string(r.byte_length) + " but shape needs " +
                      std::to_string(kRealBytes * product(r.shape)));
    }
    if (fs::path(r.blob_file).has_parent_path()) {
      throw Error(ErrorKind::kCheckpoint, named + ": blob_file must be a plain file name");
    }
    auto blob_it = blobs.find(r.blob_file);
    if (blob_it == blobs.end()) {
      const fs::path blob_path = dir / r.blob_file;
      if (!fs::exists(blob_path)) {
        throw Error(ErrorKind::kCheckpoint, named + ": missing blob file " + r.blob_file);
      }
      blob_it = blobs.emplace(r.blob_file, slurp_binary(blob_path)).first;
    }
    const std::string& bytes = blob_it->second;
    if (r.byte_offset > bytes.size() || bytes.size() - r.byte_offset < r.byte_length) {
      throw Error(ErrorKind::kCheckpoint,
                  named + ": blob " + r.blob_file + " is truncated (" +
                      std::to_string(bytes.size()) + " bytes, tensor ends at " +
                      std::to_string(r.byte_offset + r.byte_length) + ")");
    }
    const char* p = bytes.data() + r.byte_offset;
    std::vector<double> values(product(r.shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_le(p + i * kRealBytes);

    if (r.role == "bias") {
      layer.bias = std::move(values);
      continue;
    }
    Matrix m(r.shape[0], r.shape[1]);
    std::copy(values.begin(), values.end(), m.data().begin());
    if (r.role == "weight" || r.role == "shadow") {
      layer.weight = std::move(m);
    } else if (r.role == "mask") {
      layer.mask = std::move(m);
    } else if (r.role == "score") {
      layer.score = std::move(m);
    } else if (r.role == "factor_a") {
      layer.factors.a = std::move(m);
    } else {
      layer.factors.b = std::move(m);
    }
  }

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LinearLayer& layer = model.layers[l];
    const std::string where = "layers." + std::to_string(l);
    auto need = [&](bool ok, const char* role) {
      if (!ok) throw Error(ErrorKind::kCheckpoint, "tensor " + where + "." + role + ": missing");
    };
    need(!layer.weight.empty(),
         layer.kind == LayerKind::kFactorized ? "shadow" : "weight");
    need(!layer.bias.empty(), "bias");
    if (layer.kind == LayerKind::kSparse) need(layer.has_mask(), "mask");
    if (layer.kind == LayerKind::kFactorized) {
      need(!layer.factors.a.empty(), "factor_a");
      need(!layer.factors.b.empty(), "factor_b");
    }
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kCheckpoint, "checkpoint " + dir.string() + ": " + e.message());
  }
  return model;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

Dataset read_dataset_csv(const fs::path& path, Task task, std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const std::string file = path.string();

  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (line_no == 0 || trim(line).empty()) {
    throw Error(ErrorKind::kParse, file + ": empty file");
  }
  {
    std::string_view header = trim(line);
    if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
    const auto names = split_fields(header);
    if (names.size() < 2 || trim(names.back()) != "label") {
      throw Error(ErrorKind::kParse,
                  file + ":" + std::to_string(line_no) +
                      ": header needs at least one feature column and a final 'label' column");
    }
    width = names.size();
  }

  std::vector<double> values;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto cells = split_fields(row);
    if (cells.size() != width) {
      throw Error(ErrorKind::kParse, file + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(width) + " columns, found " +
                                         std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const std::string_view cell = trim(cells[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw Error(ErrorKind::kParse, file + ":" + std::to_string(line_no) + ":" +
                                           std::to_string(c + 1) + ": not a finite number '" +
                                           std::string(cell) + "'");
      }
      if (c + 1 == width) {
        if (task == Task::kClassification && (v < 0 || v != std::floor(v))) {
          throw Error(ErrorKind::kParse, file + ":" + std::to_string(line_no) + ":" +
                                             std::to_string(c + 1) +
                                             ": class label must be a non-negative integer");
        }
        labels.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw Error(ErrorKind::kParse, file + ": no data rows");

  Dataset data;
  data.task = task;
  data.features = Matrix(labels.size(), width - 1);
  std::copy(values.begin(), values.end(), data.features.data().begin());
  data.labels = std::move(labels);
  if (task == Task::kClassification) {
    std::size_t max_label = 0;
    for (double y : data.labels) max_label = std::max(max_label, static_cast<std::size_t>(y));
    data.num_classes = num_classes.value_or(max_label + 1);
  }
  try {
    data.validate();
  } catch (const Error& e) {
    throw Error(e.kind(), file + ": " + e.message());
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const fs::path& path) {
  data.validate();
  std::string out;
  for (std::size_t c = 0; c < data.input_dim(); ++c) out += "x" + std::to_string(c) + ",";
  out += "label\n";
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
  };
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.input_dim(); ++c) {
      put(data.features(r, c));
      out += ',';
    }
    put(data.labels[r]);
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace lpaf
