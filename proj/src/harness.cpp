#include "affield/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "affield/rng.hpp"
#include "affield/seggrid.hpp"
#include "json.hpp"

namespace affield {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string join_ints(std::span<const int> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Accumulates per-key conversion errors so validation can report all of them.
class FieldReader {
 public:
  explicit FieldReader(const std::map<std::string, std::string>& values) : values_(values) {}

  const std::string* find(const std::string& key) {
    used_.push_back(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    const auto* v = find(key);
    if (!v) return;
    try {
      std::size_t pos = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out = static_cast<T>(std::stod(*v, &pos));
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument("negative");
        out = static_cast<T>(std::stoull(*v, &pos));
      } else {
        out = static_cast<T>(std::stoll(*v, &pos));
      }
      if (pos != v->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      errors_.push_back(key + ": not a valid number ('" + *v + "')");
    }
  }

  template <typename F>
  void custom(const std::string& key, F&& parse) {
    const auto* v = find(key);
    if (!v) return;
    try {
      parse(*v);
    } catch (const std::exception& e) {
      errors_.push_back(key + ": " + e.what());
    }
  }

  void check_unknown() {
    for (const auto& [k, v] : values_) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) errors_.push_back(k + ": unknown key");
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  const std::map<std::string, std::string>& values_;
  std::vector<std::string> used_;
  std::vector<std::string> errors_;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t pos = 0;
    out.push_back(std::stoi(item, &pos));
    if (pos != item.size()) throw std::invalid_argument("bad integer '" + item + "'");
  }
  return out;
}

[[noreturn]] void throw_errors(const std::string& what, const std::vector<std::string>& errors) {
  std::string msg = what;
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ValidationError(msg);
}

json shape_to_json(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BlobShape>) {
          return {{"type", "blob"}, {"radius_min", s.radius_min}, {"radius_max", s.radius_max}, {"count", s.count}};
        } else if constexpr (std::is_same_v<T, RingShape>) {
          return {{"type", "ring"}, {"radius", s.radius}, {"thickness", s.thickness}, {"count", s.count}};
        } else {
          return {{"type", "bars"},         {"width_min", s.width_min},   {"width_max", s.width_max},
                  {"count", s.count},       {"length_min", s.length_min}, {"length_max", s.length_max}};
        }
      },
      shape);
}

ShapeSpec shape_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "blob") {
    BlobShape s;
    s.radius_min = j.value("radius_min", s.radius_min);
    s.radius_max = j.value("radius_max", s.radius_max);
    s.count = j.value("count", s.count);
    return s;
  }
  if (type == "ring") {
    RingShape s;
    s.radius = j.value("radius", s.radius);
    s.thickness = j.value("thickness", s.thickness);
    s.count = j.value("count", s.count);
    return s;
  }
  if (type == "bars") {
    BarsShape s;
    s.width_min = j.value("width_min", s.width_min);
    s.width_max = j.value("width_max", s.width_max);
    s.count = j.value("count", s.count);
    s.length_min = j.value("length_min", s.length_min);
    s.length_max = j.value("length_max", s.length_max);
    return s;
  }
  throw ValidationError("unknown shape type '" + type + "'");
}

json spec_json(const SceneSpec& spec) {
  json shapes = json::array();
  for (const auto& s : spec.shapes) shapes.push_back(shape_to_json(s));
  return {{"height", spec.height},
          {"width", spec.width},
          {"shapes", shapes},
          {"class_names", spec.class_names},
          {"feature_noise_sigma", spec.feature_noise_sigma},
          {"label_bleed", spec.label_bleed},
          {"mean_spacing", spec.mean_spacing},
          {"seed", spec.seed}};
}

SceneSpec spec_from(const json& j) {
  SceneSpec spec;
  spec.height = j.value("height", spec.height);
  spec.width = j.value("width", spec.width);
  for (const auto& s : j.at("shapes")) spec.shapes.push_back(shape_from_json(s));
  spec.class_names = j.value("class_names", std::vector<std::string>{});
  spec.feature_noise_sigma = j.value("feature_noise_sigma", spec.feature_noise_sigma);
  spec.label_bleed = j.value("label_bleed", spec.label_bleed);
  spec.mean_spacing = j.value("mean_spacing", spec.mean_spacing);
  spec.seed = j.value("seed", spec.seed);
  spec.validate();
  return spec;
}

json optional_list(const std::vector<std::optional<double>>& values) {
  json out = json::array();
  for (const auto& v : values) out.push_back(v ? json(*v) : json(nullptr));
  return out;
}

std::vector<std::optional<double>> optional_list_from(const json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& v : j) out.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  return out;
}

json scores_json(const ClassScores& s) { return {{"mean", s.mean}, {"per_class", optional_list(s.per_class)}}; }

ClassScores scores_from(const json& j) {
  return ClassScores{optional_list_from(j.at("per_class")), j.at("mean").get<double>()};
}

json boundary_json(const BoundaryScore& b) {
  return {{"P", b.precision},          {"R", b.recall},
          {"F", b.f_measure},          {"pred_pixels", b.pred_pixels},
          {"gt_pixels", b.gt_pixels},  {"matched_pred", b.matched_pred},
          {"matched_gt", b.matched_gt}};
}

BoundaryScore boundary_from(const json& j) {
  BoundaryScore b;
  b.precision = j.at("P").get<double>();
  b.recall = j.at("R").get<double>();
  b.f_measure = j.at("F").get<double>();
  b.pred_pixels = j.at("pred_pixels").get<std::int64_t>();
  b.gt_pixels = j.at("gt_pixels").get<std::int64_t>();
  b.matched_pred = j.at("matched_pred").get<std::int64_t>();
  b.matched_gt = j.at("matched_gt").get<std::int64_t>();
  return b;
}

json eval_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& b : r.boundary_per_class) per_class.push_back(boundary_json(b));
  return {{"miou", scores_json(r.miou)},
          {"instance_miou", scores_json(r.instance_miou)},
          {"boundary", boundary_json(r.boundary)},
          {"boundary_per_class", per_class},
          {"pixel_accuracy", r.pixel_accuracy}};
}

EvalReport eval_from(const json& j) {
  EvalReport r;
  r.miou = scores_from(j.at("miou"));
  r.instance_miou = scores_from(j.at("instance_miou"));
  r.boundary = boundary_from(j.at("boundary"));
  for (const auto& b : j.at("boundary_per_class")) r.boundary_per_class.push_back(boundary_from(b));
  r.pixel_accuracy = j.at("pixel_accuracy").get<double>();
  return r;
}

std::string curves_csv(const LossCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "iter,total,unary,region\n";
  for (std::size_t i = 0; i < curve.total.size(); ++i) {
    out << i << ',' << curve.total[i] << ',' << curve.unary[i] << ',' << curve.region[i] << '\n';
  }
  return out.str();
}

std::string weights_csv(const RunRecord& record) {
  std::ostringstream out;
  out << std::setprecision(17) << "iter,class,term,kernel,weight\n";
  const int kernels = static_cast<int>(record.ks.size());
  for (const auto& snap : record.weight_trajectory) {
    const TermTable layout(static_cast<int>(snap.weights.size()) / (2 * kernels), kernels);
    for (int c = 0; c < layout.classes; ++c) {
      for (int t = 0; t < 2; ++t) {
        for (int k = 0; k < kernels; ++k) {
          out << snap.iter << ',' << c << ',' << term_name(static_cast<Term>(t)) << ',' << record.ks[k] << ','
              << snap.weights[layout.index(c, static_cast<Term>(t), k)] << '\n';
        }
      }
    }
  }
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------- config

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "root seed; data, init and shuffle streams derive from it"},
      {"data.preset", "thinblob-32", "scene preset used when data.manifest is empty"},
      {"data.manifest", "", "manifest.json written by gen-data"},
      {"data.train", "200", "number of training scenes (preset only)"},
      {"data.test", "50", "number of test scenes (preset only)"},
      {"data.seed", "", "scene seed; empty derives it from seed"},
      {"loss.mode", "unary", "unary | affinity | aaf | contrastive"},
      {"loss.ks", "3,5", "kernel sizes of the aaf mode"},
      {"loss.affinity_k", "3", "kernel of the affinity and contrastive modes"},
      {"hp.lambda", "1", "region loss weight"},
      {"hp.margin", "3", "boundary hinge margin (nats)"},
      {"hp.contrastive_margin", "0.2", "contrastive hinge margin"},
      {"hp.kl_eps", "1e-06", "probability clamp"},
      {"train.base_lr", "0.001", "base learning rate"},
      {"train.iters", "30000", "training iterations"},
      {"train.poly_power", "0.9", "poly schedule exponent"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.weight_decay", "0.0005", "L2 weight decay"},
      {"train.log_every", "10", "weight trajectory sampling period"},
      {"minimax.w_lr", "0.01", "kernel-weight step size"},
      {"minimax.scheme", "simultaneous", "simultaneous | alternating"},
      {"minimax.alternating_n", "1", "segmenter steps per weight step (alternating)"},
      {"minimax.parametrization", "softmax", "softmax | projected"},
      {"minimax.direction", "ascent", "ascent | descent"},
      {"eval.tol", "1", "boundary matching tolerance (pixels)"},
      {"eval.ignore_class", "", "class dropped from class averages"},
      {"output.dir", "", "output directory"},
  };
  return keys;
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& values) {
  ExperimentConfig cfg;
  FieldReader r(values);
  r.number("seed", cfg.seed);
  r.custom("data.preset", [&](const std::string& v) { cfg.data_preset = v; });
  r.custom("data.manifest", [&](const std::string& v) { cfg.data_manifest = v; });
  r.number("data.train", cfg.data_train);
  r.number("data.test", cfg.data_test);
  r.custom("data.seed", [&](const std::string& v) {
    if (v.empty()) return;
    std::size_t pos = 0;
    cfg.data_seed = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not a valid seed");
  });
  r.custom("loss.mode", [&](const std::string& v) { cfg.train.loss_mode = parse_loss_mode(v); });
  r.custom("loss.ks", [&](const std::string& v) { cfg.ks = KernelSpec(parse_int_list(v)); });
  r.number("loss.affinity_k", cfg.train.affinity_k);
  r.number("hp.lambda", cfg.hp.lambda);
  r.number("hp.margin", cfg.hp.margin_m);
  r.number("hp.contrastive_margin", cfg.hp.contrastive_m);
  r.number("hp.kl_eps", cfg.hp.kl_eps);
  r.number("train.base_lr", cfg.train.base_lr);
  r.number("train.iters", cfg.train.iters);
  r.number("train.poly_power", cfg.train.poly_power);
  r.number("train.momentum", cfg.train.momentum);
  r.number("train.weight_decay", cfg.train.weight_decay);
  r.number("train.log_every", cfg.train.log_every);
  r.number("minimax.w_lr", cfg.minimax.w_lr);
  r.custom("minimax.scheme", [&](const std::string& v) {
    if (v == "simultaneous") cfg.minimax.scheme = UpdateScheme::Simultaneous;
    else if (v == "alternating") cfg.minimax.scheme = UpdateScheme::Alternating;
    else throw std::invalid_argument("expected simultaneous or alternating");
  });
  r.number("minimax.alternating_n", cfg.minimax.alternating_n);
  r.custom("minimax.parametrization", [&](const std::string& v) {
    if (v == "softmax") cfg.minimax.parametrization = Parametrization::SoftmaxLogits;
    else if (v == "projected") cfg.minimax.parametrization = Parametrization::Projected;
    else throw std::invalid_argument("expected softmax or projected");
  });
  r.custom("minimax.direction", [&](const std::string& v) {
    if (v == "ascent") cfg.minimax.direction = WeightDirection::Ascent;
    else if (v == "descent") cfg.minimax.direction = WeightDirection::Descent;
    else throw std::invalid_argument("expected ascent or descent");
  });
  r.number("eval.tol", cfg.eval_tol);
  r.custom("eval.ignore_class", [&](const std::string& v) {
    if (!v.empty()) cfg.ignore_class = std::stoi(v);
  });
  r.custom("output.dir", [&](const std::string& v) { cfg.output_dir = v; });
  r.check_unknown();

  auto errors = std::move(r.errors());
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    std::stringstream ss(e.what());
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) errors.push_back(trim(line).substr(2));
  }
  if (!errors.empty()) throw_errors("invalid config:", errors);
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> values;
  std::vector<std::string> errors;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    if (values.count(key)) errors.push_back(key + ": duplicate key (line " + std::to_string(lineno) + ")");
    values[key] = trim(line.substr(eq + 1));
  }
  if (!errors.empty()) throw_errors("invalid config:", errors);
  return config_from_map(values);
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  auto collect = [&](auto&& check) {
    try {
      check();
    } catch (const ValidationError& e) {
      std::string msg = e.what();
      if (msg.rfind("invalid ", 0) != 0) {
        errors.push_back(msg);
        return;
      }
      msg = msg.substr(msg.find(':') + 1);
      std::stringstream ss(msg);
      std::string part;
      while (std::getline(ss, part, ';')) {
        part = trim(part);
        if (!part.empty()) errors.push_back(part);
      }
    }
  };
  if (data_manifest.empty()) {
    collect([&] { scene_spec_preset(data_preset); });
    if (data_train < 1) errors.push_back("data.train must be >= 1");
    if (data_test < 1) errors.push_back("data.test must be >= 1");
  } else if (!std::filesystem::exists(data_manifest)) {
    errors.push_back("data.manifest: " + data_manifest.string() + " does not exist");
  }
  if (ks.size() == 0) errors.push_back("loss.ks must be nonempty");
  collect([&] { hp.validate(); });
  collect([&] { train.validate(); });
  collect([&] { minimax.validate(); });
  if (eval_tol < 0) errors.push_back("eval.tol must be >= 0");
  if (ignore_class && *ignore_class < 0) errors.push_back("eval.ignore_class must be >= 0");
  if (!errors.empty()) throw_errors("invalid config:", errors);
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  const auto param = minimax.parametrization == Parametrization::Projected ? "projected" : "softmax";
  return {
      {"seed", std::to_string(seed)},
      {"data.preset", data_preset},
      {"data.manifest", data_manifest.string()},
      {"data.train", std::to_string(data_train)},
      {"data.test", std::to_string(data_test)},
      {"data.seed", data_seed ? std::to_string(*data_seed) : ""},
      {"loss.mode", to_string(train.loss_mode)},
      {"loss.ks", join_ints(ks.sizes())},
      {"loss.affinity_k", std::to_string(train.affinity_k)},
      {"hp.lambda", format_double(hp.lambda)},
      {"hp.margin", format_double(hp.margin_m)},
      {"hp.contrastive_margin", format_double(hp.contrastive_m)},
      {"hp.kl_eps", format_double(hp.kl_eps)},
      {"train.base_lr", format_double(train.base_lr)},
      {"train.iters", std::to_string(train.iters)},
      {"train.poly_power", format_double(train.poly_power)},
      {"train.momentum", format_double(train.momentum)},
      {"train.weight_decay", format_double(train.weight_decay)},
      {"train.log_every", std::to_string(train.log_every)},
      {"minimax.w_lr", format_double(minimax.w_lr)},
      {"minimax.scheme", minimax.scheme == UpdateScheme::Alternating ? "alternating" : "simultaneous"},
      {"minimax.alternating_n", std::to_string(minimax.alternating_n)},
      {"minimax.parametrization", param},
      {"minimax.direction", minimax.direction == WeightDirection::Descent ? "descent" : "ascent"},
      {"eval.tol", std::to_string(eval_tol)},
      {"eval.ignore_class", ignore_class ? std::to_string(*ignore_class) : ""},
      {"output.dir", output_dir.string()},
  };
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------- data

SceneSpec scene_spec_preset(const std::string& name) {
  if (name == "thinblob-32") return thinblob32();
  throw ValidationError("data.preset: unknown preset '" + name + "' (available: thinblob-32)");
}

std::string scene_spec_to_json(const SceneSpec& spec) { return spec_json(spec).dump(2); }

SceneSpec scene_spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene spec JSON: ") + e.what());
  }
}

Dataset make_dataset(const SceneSpec& spec, int n_train, int n_test) {
  Dataset data{spec, generate(spec, n_train, 0), generate(spec, n_test, static_cast<std::uint64_t>(n_train))};
  return data;
}

std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = {{"spec", spec_json(data.spec)}, {"num_classes", data.spec.num_classes()}};
  int index = 0;
  for (const auto* split : {&data.train, &data.test}) {
    json files = json::array();
    for (const auto& scene : *split) {
      std::ostringstream stem;
      stem << "scene_" << std::setw(4) << std::setfill('0') << index++;
      const auto label = stem.str() + "_label.sgrd";
      const auto feat = stem.str() + "_feat.sgrd";
      write_grid(dir / label, scene.gt);
      write_grid(dir / feat, scene.features);
      files.push_back({{"label", label}, {"features", feat}});
    }
    manifest[split == &data.train ? "train" : "test"] = files;
  }
  const auto path = dir / "manifest.json";
  write_file_atomic(path, manifest.dump(2) + "\n");
  return path;
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  Dataset data;
  try {
    data.spec = spec_from(manifest.at("spec"));
    const int classes = manifest.at("num_classes").get<int>();
    for (const char* split : {"train", "test"}) {
      auto& out = std::string(split) == "train" ? data.train : data.test;
      for (const auto& entry : manifest.at(split)) {
        Scene scene{read_label_grid(dir / entry.at("label").get<std::string>(), classes),
                    read_dense_grid(dir / entry.at("features").get<std::string>())};
        out.push_back(std::move(scene));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (data.train.empty()) throw ValidationError(manifest_path.string() + ": no training scenes");
  return data;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.data_manifest.empty()) return load_manifest(cfg.data_manifest);
  SceneSpec spec = scene_spec_preset(cfg.data_preset);
  spec.seed = cfg.data_seed ? *cfg.data_seed : substream_seed(cfg.seed, "data");
  return make_dataset(spec, cfg.data_train, cfg.data_test);
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate(std::span<const LabelGrid> preds, std::span<const LabelGrid> gts, int tol,
                    std::optional<int> ignore_class) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw ValidationError("evaluate: need equally many (>= 1) predictions and ground truths");
  }
  const int classes = gts.front().num_classes();
  ConfusionMatrix cm(classes);
  std::vector<ImagePair> pairs;
  EvalReport report;
  report.boundary.finalize();
  report.boundary_per_class.assign(classes, BoundaryScore{});
  bool first = true;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cm.add(preds[i], gts[i]);
    pairs.push_back({&preds[i], &gts[i]});
    const auto b = boundary_prf(preds[i], gts[i], tol);
    if (first) report.boundary = b;
    else report.boundary += b;
    for (int c = 0; c < classes; ++c) {
      const auto bc = boundary_prf_class(preds[i], gts[i], tol, c);
      if (first) report.boundary_per_class[c] = bc;
      else report.boundary_per_class[c] += bc;
    }
    first = false;
  }
  report.miou = miou(cm, ignore_class);
  report.instance_miou = instance_miou(pairs, ignore_class);
  std::int64_t correct = 0;
  for (int c = 0; c < classes; ++c) correct += cm.at(c, c);
  report.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(cm.total());
  return report;
}

EvalReport evaluate(const ToySegmenter& model, std::span<const Scene> scenes, int tol, std::optional<int> ignore_class) {
  std::vector<LabelGrid> preds, gts;
  for (const auto& s : scenes) {
    preds.push_back(predict(model, s.features));
    gts.push_back(s.gt);
  }
  return evaluate(preds, gts, tol, ignore_class);
}

std::string eval_to_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  json j = eval_json(report);
  j["class_names"] = class_names;
  return j.dump(2);
}

// ---------------------------------------------------------------- records

std::string record_to_json(const RunRecord& r) {
  json trajectory = json::array();
  for (const auto& s : r.weight_trajectory) trajectory.push_back({{"iter", s.iter}, {"weights", s.weights}});
  json j = {{"config", r.config},
            {"seed", r.seed},
            {"loss_mode", r.loss_mode},
            {"ks", r.ks},
            {"class_names", r.class_names},
            {"curve", {{"total", r.curve.total}, {"unary", r.curve.unary}, {"region", r.curve.region}}},
            {"metrics", eval_json(r.metrics)},
            {"weight_trajectory", trajectory},
            {"final_weights", r.final_weights ? json(*r.final_weights) : json(nullptr)},
            {"wall_time_s", r.wall_time_s}};
  return j.dump(1);
}

RunRecord record_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunRecord r;
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.loss_mode = j.at("loss_mode").get<std::string>();
    r.ks = j.at("ks").get<std::vector<int>>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.curve.total = j.at("curve").at("total").get<std::vector<double>>();
    r.curve.unary = j.at("curve").at("unary").get<std::vector<double>>();
    r.curve.region = j.at("curve").at("region").get<std::vector<double>>();
    r.metrics = eval_from(j.at("metrics"));
    for (const auto& s : j.at("weight_trajectory")) {
      r.weight_trajectory.push_back({s.at("iter").get<int>(), s.at("weights").get<std::vector<double>>()});
    }
    if (!j.at("final_weights").is_null()) r.final_weights = j.at("final_weights").get<std::vector<double>>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run record: ") + e.what());
  }
}

RunRecord load_record(const std::filesystem::path& path) {
  try {
    return record_from_json(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- runs

RunOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, load_dataset(cfg));
}

RunOutput run_experiment(const ExperimentConfig& cfg, const Dataset& data) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const int classes = data.spec.num_classes();
  const int in_channels = data.train.front().features.channels();

  TrainConfig tc = cfg.train;
  tc.seed = substream_seed(cfg.seed, "shuffle");
  auto model = ToySegmenter::random(in_channels, classes, substream_seed(cfg.seed, "init"));
  auto trained = train(std::move(model), data.train, tc, cfg.ks, cfg.hp, cfg.minimax);

  RunRecord record;
  record.config = cfg.to_map();
  record.seed = cfg.seed;
  record.loss_mode = to_string(cfg.train.loss_mode);
  record.ks.assign(cfg.ks.sizes().begin(), cfg.ks.sizes().end());
  for (int c = 0; c < classes; ++c) record.class_names.push_back(data.spec.class_name(c));
  record.curve = std::move(trained.curve);
  const auto& eval_scenes = data.test.empty() ? data.train : data.test;
  record.metrics = evaluate(trained.model, eval_scenes, cfg.eval_tol, cfg.ignore_class);
  record.weight_trajectory = std::move(trained.weight_trajectory);
  if (trained.final_weights) {
    record.final_weights.emplace(trained.final_weights->weights().begin(), trained.final_weights->weights().end());
  }
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    save_checkpoint(trained.model, cfg.output_dir / "model.tseg");
    write_file_atomic(cfg.output_dir / "curves.csv", curves_csv(record.curve));
    if (record.final_weights) write_file_atomic(cfg.output_dir / "weights.csv", weights_csv(record));
    write_file_atomic(cfg.output_dir / "run.json", record_to_json(record) + "\n");
  }
  return {std::move(record), std::move(trained.model)};
}

SimplexWeights final_weights_of(const RunRecord& record) {
  if (record.loss_mode != "aaf" || !record.final_weights) {
    throw ValidationError("run record is not from an aaf run (loss_mode " + record.loss_mode + ")");
  }
  const int kernels = static_cast<int>(record.ks.size());
  const int classes = static_cast<int>(record.class_names.size());
  return SimplexWeights::from_weights(classes, kernels, *record.final_weights);
}

std::string kernel_report(const RunRecord& record) {
  const auto w = final_weights_of(record);
  std::vector<int> sizes = record.ks;
  const KernelSpec ks(std::move(sizes));
  std::ostringstream out;
  out << std::setprecision(17) << "row,class,name,term,kernel,value\n";
  for (int c = 0; c < w.classes(); ++c) {
    for (int t = 0; t < 2; ++t) {
      const Term term = static_cast<Term>(t);
      for (int k = 0; k < w.kernels(); ++k) {
        out << "weight," << c << ',' << record.class_names[c] << ',' << term_name(term) << ',' << ks[k] << ','
            << w.weight(c, term, k) << '\n';
      }
    }
  }
  for (int c = 0; c < w.classes(); ++c) {
    for (int t = 0; t < 2; ++t) {
      const Term term = static_cast<Term>(t);
      out << "effective," << c << ',' << record.class_names[c] << ',' << term_name(term) << ",,"
          << effective_kernel_size(w, ks, c, term) << '\n';
    }
  }
  return out.str();
}

CollapseStats collapse_stats(const SimplexWeights& w) {
  CollapseStats s;
  s.final_weights.assign(w.weights().begin(), w.weights().end());
  const int last = w.kernels() - 1;
  s.min_nonedge_on_smallest = s.min_edge_on_largest = 1.0;
  for (int c = 0; c < w.classes(); ++c) {
    const double ne = w.weight(c, Term::NonEdge, 0);
    const double e = w.weight(c, Term::Edge, last);
    s.nonedge_on_smallest += ne / w.classes();
    s.edge_on_largest += e / w.classes();
    s.min_nonedge_on_smallest = std::min(s.min_nonedge_on_smallest, ne);
    s.min_edge_on_largest = std::min(s.min_edge_on_largest, e);
  }
  return s;
}

ProbeReport trivial_solution_probe(const ExperimentConfig& cfg) {
  cfg.validate();
  return trivial_solution_probe(cfg, load_dataset(cfg));
}

ProbeReport trivial_solution_probe(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.ks.size() < 2) throw ValidationError("probe-trivial: loss.ks needs at least two kernel sizes");
  ProbeReport report;
  report.ks.assign(cfg.ks.sizes().begin(), cfg.ks.sizes().end());
  report.threshold = kCollapseThreshold;
  for (const auto direction : {WeightDirection::Descent, WeightDirection::Ascent}) {
    ExperimentConfig run = cfg;
    run.train.loss_mode = LossMode::Aaf;
    run.minimax.direction = direction;
    run.output_dir.clear();
    const auto out = run_experiment(run, data);
    const auto stats = collapse_stats(final_weights_of(out.record));
    const bool collapsed = stats.nonedge_on_smallest > kCollapseThreshold && stats.edge_on_largest > kCollapseThreshold;
    if (direction == WeightDirection::Descent) {
      report.descent = stats;
      report.descent_collapsed = collapsed;
    } else {
      report.ascent = stats;
      report.ascent_collapsed = collapsed;
    }
  }
  return report;
}

std::string probe_to_json(const ProbeReport& r) {
  auto stats = [](const CollapseStats& s) {
    return json{{"final_weights", s.final_weights},
                {"nonedge_on_smallest", s.nonedge_on_smallest},
                {"edge_on_largest", s.edge_on_largest},
                {"min_nonedge_on_smallest", s.min_nonedge_on_smallest},
                {"min_edge_on_largest", s.min_edge_on_largest}};
  };
  return json{{"ks", r.ks},
              {"threshold", r.threshold},
              {"descent", stats(r.descent)},
              {"ascent", stats(r.ascent)},
              {"descent_collapsed", r.descent_collapsed},
              {"ascent_collapsed", r.ascent_collapsed}}
      .dump(2);
}

}  // namespace affield
