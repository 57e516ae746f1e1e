#include "lpaf/config.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "lpaf/error.hpp"
#include "lpaf/io.hpp"

namespace lpaf {
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::kConfig, path + ": " + what);
}

// Walks one JSON object, remembering which keys were read so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(where(), "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const ordered_json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void real(const std::string& key, double& out) {
    if (const auto* v = find(key)) out = as_real(*v, key_path(key));
  }
  void count(const std::string& key, std::size_t& out) {
    if (const auto* v = find(key)) out = as_count(*v, key_path(key));
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const auto* v = find(key)) out = as_u64(*v, key_path(key));
  }
  void text(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) out = as_text(*v, key_path(key));
  }
  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (const auto* v = find(key)) {
      out.clear();
      for (std::size_t i = 0; i < array(*v, key).size(); ++i) {
        out.push_back(as_count((*v)[i], key_path(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }
  void reals(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      out.clear();
      for (std::size_t i = 0; i < array(*v, key).size(); ++i) {
        out.push_back(as_real((*v)[i], key_path(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }
  void u64s(const std::string& key, std::vector<std::uint64_t>& out) {
    if (const auto* v = find(key)) {
      out.clear();
      for (std::size_t i = 0; i < array(*v, key).size(); ++i) {
        out.push_back(as_u64((*v)[i], key_path(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }

  Section child(const std::string& key) {
    used_.insert(key);
    static const ordered_json empty = ordered_json::object();
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return Section(empty, key_path(key));
    return Section(*it, key_path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(key_path(it.key()), "unknown key");
    }
  }

  static double as_real(const ordered_json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected a finite number");
    return d;
  }
  static std::uint64_t as_u64(const ordered_json& v, const std::string& path) {
    if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static std::size_t as_count(const ordered_json& v, const std::string& path) {
    return static_cast<std::size_t>(as_u64(v, path));
  }
  static std::string as_text(const ordered_json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const ordered_json& array(const ordered_json& v, const std::string& key) const {
    if (!v.is_array()) fail(key_path(key), "expected an array");
    return v;
  }

  const ordered_json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class Fn>
auto parse_enum(const std::string& path, const std::string& value, Fn fn) {
  try {
    return fn(value);
  } catch (const Error& e) {
    fail(path, e.message());
  }
}

void read_train(Section& s, TrainConfig& t) {
  s.real("learning_rate", t.learning_rate);
  s.count("batch_size", t.batch_size);
  s.count("steps", t.steps);
  s.real("weight_decay", t.weight_decay);
}

ordered_json write_train(const TrainConfig& t) {
  ordered_json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["steps"] = t.steps;
  j["weight_decay"] = t.weight_decay;
  return j;
}

void check_train(const TrainConfig& t, const std::string& path) {
  if (!(t.learning_rate > 0.0)) fail(path + ".learning_rate", "must be positive");
  if (t.batch_size < 1) fail(path + ".batch_size", "must be >= 1");
  if (t.steps < 1) fail(path + ".steps", "must be >= 1");
  if (!(t.weight_decay >= 0.0)) fail(path + ".weight_decay", "must be >= 0");
}

void check_layers(const std::vector<std::size_t>& layers, std::size_t count,
                  const std::string& path) {
  std::set<std::size_t> seen;
  for (std::size_t l : layers) {
    if (l + 1 >= count) {
      fail(path, "layer " + std::to_string(l) + " is not a hidden layer (model has " +
                     std::to_string(count) + " layers, the last is the output)");
    }
    if (!seen.insert(l).second) fail(path, "layer " + std::to_string(l) + " listed twice");
  }
}

}  // namespace

SparsitySchedule PruneStageConfig::schedule(double kept_fraction) const {
  SparsitySchedule s;
  s.v_f = kept_fraction;
  s.t_i = t_i;
  s.t_f = t_f;
  s.total_steps = train.steps;
  return s;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  SyntheticSpec& d = c.dataset.synthetic;
  d.kind = SyntheticKind::kLowRankTeacher;
  d.num_examples = 40000;
  d.input_dim = 64;
  d.num_classes = 10;
  d.teacher_rank = 16;
  d.teacher_hidden = 128;
  d.teacher_depth = 1;
  d.seed = 7;

  c.dense.learning_rate = 1e-3;
  c.dense.steps = 4000;
  c.dense.weight_decay = 0.1;

  c.prune.train.learning_rate = 1e-3;
  c.prune.train.steps = 3000;
  c.prune.train.weight_decay = 1.0;

  c.finetune.train.learning_rate = 3e-4;
  c.finetune.train.steps = 2000;
  c.finetune.train.weight_decay = 0.1;
  return c;
}

void ExperimentConfig::validate() const {
  const SyntheticSpec& d = dataset.synthetic;
  if (!dataset.csv_path) {
    try {
      d.validate();
    } catch (const Error& e) {
      fail("dataset", e.message());
    }
  } else if (dataset.csv_path->empty()) {
    fail("dataset.csv", "path must not be empty");
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    fail("dataset.test_fraction", "must be in (0, 1)");
  }
  if (model.hidden.empty()) fail("model.hidden", "needs at least one hidden layer");
  for (std::size_t i = 0; i < model.hidden.size(); ++i) {
    if (model.hidden[i] < 1) fail("model.hidden[" + std::to_string(i) + "]", "must be >= 1");
  }
  const std::size_t layer_count = model.hidden.size() + 1;

  check_train(dense, "dense");

  check_train(prune.train, "prune");
  if (!(prune.v_f > 0.0)) fail("prune.v_f", "kept fraction must be positive");
  if (prune.v_f > 1.0) fail("prune.v_f", "kept fraction must be <= 1");
  if (prune.t_i + prune.t_f >= prune.train.steps) {
    fail("prune.t_f", "t_i + t_f must be below prune.steps");
  }
  if (prune.prune_interval < 1) fail("prune.interval", "must be >= 1");
  check_layers(prune.layers, layer_count, "prune.layers");

  if (factorize.k.has_value() == factorize.k_fraction.has_value()) {
    fail("factorize.k", "set exactly one of k and k_fraction");
  }
  if (factorize.k && *factorize.k < 1) fail("factorize.k", "must be >= 1");
  if (factorize.k_fraction && !(*factorize.k_fraction > 0.0 && *factorize.k_fraction <= 1.0)) {
    fail("factorize.k_fraction", "must be in (0, 1]");
  }
  for (const auto& [layer, k] : factorize.k_per_layer) {
    const std::string path = "factorize.k_per_layer." + std::to_string(layer);
    if (layer + 1 >= layer_count) fail(path, "not a hidden layer");
    if (k < 1) fail(path, "must be >= 1");
  }
  check_layers(factorize.layers, layer_count, "factorize.layers");
  if (!(factorize.epsilon_floor > 0.0 && factorize.epsilon_floor < 1.0)) {
    fail("factorize.epsilon_floor", "must be in (0, 1)");
  }

  check_train(finetune.train, "finetune");
  if (!(finetune.mixed.p_init >= 0.0 && finetune.mixed.p_init <= 1.0)) {
    fail("finetune.p_init", "must be in [0, 1]");
  }
  if (finetune.mixed.decay && !(*finetune.mixed.decay >= 0.0)) {
    fail("finetune.decay", "must be >= 0");
  }
  if (!(finetune.mixed.consistency_weight >= 0.0)) {
    fail("finetune.consistency_weight", "must be >= 0");
  }

  if (study.budgets.empty()) fail("study.budgets", "must not be empty");
  for (std::size_t i = 0; i < study.budgets.size(); ++i) {
    const double b = study.budgets[i];
    if (!(b > 0.0 && b <= 1.0)) {
      fail("study.budgets[" + std::to_string(i) + "]", "kept fraction must be in (0, 1]");
    }
  }
  for (std::size_t i = 0; i < ablation.v_grid.size(); ++i) {
    const double v = ablation.v_grid[i];
    if (!(v > 0.0 && v <= 1.0)) {
      fail("ablation.v_grid[" + std::to_string(i) + "]", "kept fraction must be in (0, 1]");
    }
  }
  for (std::size_t i = 0; i < ablation.lambdas.size(); ++i) {
    if (!(ablation.lambdas[i] >= 0.0)) {
      fail("ablation.lambdas[" + std::to_string(i) + "]", "must be >= 0");
    }
  }
  for (std::size_t i = 0; i < ablation.p_init_grid.size(); ++i) {
    const double p = ablation.p_init_grid[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      fail("ablation.p_init_grid[" + std::to_string(i) + "]", "must be in [0, 1]");
    }
  }
  if (seeds.empty()) fail("seeds", "must not be empty");
  if (output_dir.empty()) fail("output_dir", "must not be empty");
}

ExperimentConfig parse_config(const std::string& json_text) {
  ordered_json root;
  try {
    root = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, std::string("config: ") + e.what());
  }

  ExperimentConfig c = ExperimentConfig::defaults();
  Section top(root, "");

  {
    Section s = top.child("dataset");
    SyntheticSpec& d = c.dataset.synthetic;
    std::string kind(to_string(d.kind));
    s.text("kind", kind);
    if (kind == "csv") {
      c.dataset.csv_path.emplace();
      s.text("path", *c.dataset.csv_path);
      if (!s.has("path")) fail("dataset.path", "required when kind is csv");
      std::size_t classes = 0;
      if (s.find("num_classes")) {
        s.count("num_classes", classes);
        c.dataset.csv_num_classes = classes;
      }
    } else {
      d.kind = parse_enum("dataset.kind", kind, synthetic_kind_from_string);
      s.count("num_examples", d.num_examples);
      s.count("input_dim", d.input_dim);
      s.count("num_classes", d.num_classes);
      s.real("separation", d.separation);
      s.real("noise", d.noise);
      s.count("teacher_rank", d.teacher_rank);
      s.count("teacher_hidden", d.teacher_hidden);
      s.count("teacher_depth", d.teacher_depth);
      s.u64("seed", d.seed);
    }
    std::string task(to_string(d.task));
    s.text("task", task);
    d.task = parse_enum("dataset.task", task, task_from_string);
    c.dataset.csv_task = d.task;
    s.real("test_fraction", c.dataset.test_fraction);
    s.finish();
  }
  {
    Section s = top.child("model");
    s.counts("hidden", c.model.hidden);
    s.finish();
  }
  {
    Section s = top.child("dense");
    read_train(s, c.dense);
    s.finish();
  }
  {
    Section s = top.child("prune");
    std::string method(to_string(c.prune.method));
    s.text("method", method);
    c.prune.method = parse_enum("prune.method", method, prune_method_from_string);
    s.real("v_f", c.prune.v_f);
    s.count("t_i", c.prune.t_i);
    s.count("t_f", c.prune.t_f);
    s.count("interval", c.prune.prune_interval);
    s.counts("layers", c.prune.layers);
    read_train(s, c.prune.train);
    s.finish();
  }
  {
    Section s = top.child("factorize");
    const bool has_k = s.find("k") != nullptr;
    const bool has_fraction = s.find("k_fraction") != nullptr;
    if (has_k) {
      const ordered_json& k = root["factorize"]["k"];
      if (k.is_string() && k.get<std::string>() == "full") {
        c.factorize.k = kFullRank;
      } else {
        c.factorize.k = Section::as_count(k, "factorize.k");
      }
      if (!has_fraction) c.factorize.k_fraction.reset();
    }
    if (has_fraction) {
      c.factorize.k_fraction =
          Section::as_real(root["factorize"]["k_fraction"], "factorize.k_fraction");
      if (!has_k) c.factorize.k.reset();
    }
    if (const auto* per = s.find("k_per_layer")) {
      if (!per->is_object()) fail("factorize.k_per_layer", "expected an object");
      for (auto it = per->begin(); it != per->end(); ++it) {
        const std::string path = "factorize.k_per_layer." + it.key();
        std::size_t layer = 0;
        const std::string& key = it.key();
        if (key.empty() || key.find_first_not_of("0123456789") != std::string::npos) {
          fail(path, "key must be a layer index");
        }
        layer = static_cast<std::size_t>(std::stoull(key));
        c.factorize.k_per_layer[layer] = Section::as_count(it.value(), path);
      }
    }
    std::string weighting(to_string(c.factorize.weighting));
    s.text("weighting", weighting);
    c.factorize.weighting = parse_enum("factorize.weighting", weighting, weighting_from_string);
    s.counts("layers", c.factorize.layers);
    s.real("epsilon_floor", c.factorize.epsilon_floor);
    s.finish();
  }
  {
    Section s = top.child("finetune");
    s.real("p_init", c.finetune.mixed.p_init);
    if (s.find("decay")) {
      double d = 0.0;
      s.real("decay", d);
      c.finetune.mixed.decay = d;
    }
    s.real("consistency_weight", c.finetune.mixed.consistency_weight);
    read_train(s, c.finetune.train);
    s.finish();
  }
  {
    Section s = top.child("study");
    s.reals("budgets", c.study.budgets);
    s.finish();
  }
  {
    Section s = top.child("ablation");
    s.reals("v_grid", c.ablation.v_grid);
    if (const auto* w = s.find("weightings")) {
      if (!w->is_array()) fail("ablation.weightings", "expected an array");
      c.ablation.weightings.clear();
      for (std::size_t i = 0; i < w->size(); ++i) {
        const std::string path = "ablation.weightings[" + std::to_string(i) + "]";
        c.ablation.weightings.push_back(
            parse_enum(path, Section::as_text((*w)[i], path), weighting_from_string));
      }
    }
    s.reals("lambdas", c.ablation.lambdas);
    s.reals("p_init_grid", c.ablation.p_init_grid);
    s.finish();
  }
  top.u64("seed", c.seed);
  top.u64s("seeds", c.seeds);
  top.text("output_dir", c.output_dir);
  top.finish();

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.message());
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json root;
  {
    ordered_json d;
    const SyntheticSpec& s = c.dataset.synthetic;
    if (c.dataset.csv_path) {
      d["kind"] = "csv";
      d["path"] = *c.dataset.csv_path;
      if (c.dataset.csv_num_classes) d["num_classes"] = *c.dataset.csv_num_classes;
    } else {
      d["kind"] = std::string(to_string(s.kind));
      d["num_examples"] = s.num_examples;
      d["input_dim"] = s.input_dim;
      d["num_classes"] = s.num_classes;
      d["separation"] = s.separation;
      d["noise"] = s.noise;
      d["teacher_rank"] = s.teacher_rank;
      d["teacher_hidden"] = s.teacher_hidden;
      d["teacher_depth"] = s.teacher_depth;
      d["seed"] = s.seed;
    }
    d["task"] = std::string(to_string(c.dataset.csv_path ? c.dataset.csv_task : s.task));
    d["test_fraction"] = c.dataset.test_fraction;
    root["dataset"] = d;
  }
  root["model"]["hidden"] = c.model.hidden;
  root["dense"] = write_train(c.dense);
  {
    ordered_json p;
    p["method"] = std::string(to_string(c.prune.method));
    p["v_f"] = c.prune.v_f;
    p["t_i"] = c.prune.t_i;
    p["t_f"] = c.prune.t_f;
    p["interval"] = c.prune.prune_interval;
    p["layers"] = c.prune.layers;
    p.update(write_train(c.prune.train));
    root["prune"] = p;
  }
  {
    ordered_json f;
    if (c.factorize.k) {
      if (*c.factorize.k == kFullRank) {
        f["k"] = "full";
      } else {
        f["k"] = *c.factorize.k;
      }
    } else {
      f["k"] = nullptr;
    }
    f["k_fraction"] = c.factorize.k_fraction ? ordered_json(*c.factorize.k_fraction)
                                             : ordered_json(nullptr);
    ordered_json per = ordered_json::object();
    for (const auto& [layer, k] : c.factorize.k_per_layer) per[std::to_string(layer)] = k;
    f["k_per_layer"] = per;
    f["weighting"] = std::string(to_string(c.factorize.weighting));
    f["layers"] = c.factorize.layers;
    f["epsilon_floor"] = c.factorize.epsilon_floor;
    root["factorize"] = f;
  }
  {
    ordered_json m;
    m["p_init"] = c.finetune.mixed.p_init;
    m["decay"] = c.finetune.mixed.decay ? ordered_json(*c.finetune.mixed.decay)
                                        : ordered_json(nullptr);
    m["consistency_weight"] = c.finetune.mixed.consistency_weight;
    m.update(write_train(c.finetune.train));
    root["finetune"] = m;
  }
  root["study"]["budgets"] = c.study.budgets;
  {
    ordered_json a;
    a["v_grid"] = c.ablation.v_grid;
    ordered_json w = ordered_json::array();
    for (Weighting x : c.ablation.weightings) w.push_back(std::string(to_string(x)));
    a["weightings"] = w;
    a["lambdas"] = c.ablation.lambdas;
    a["p_init_grid"] = c.ablation.p_init_grid;
    root["ablation"] = a;
  }
  root["seed"] = c.seed;
  root["seeds"] = c.seeds;
  root["output_dir"] = c.output_dir;
  return root.dump(2) + "\n";
}

DataSplit load_dataset(const DatasetConfig& config) {
  Dataset data = config.csv_path
                     ? read_dataset_csv(*config.csv_path, config.csv_task, config.csv_num_classes)
                     : generate_synthetic(config.synthetic);
  return split_dataset(data, config.test_fraction);
}

}  // namespace lpaf
