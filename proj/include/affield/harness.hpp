#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affield/losses.hpp"
#include "affield/metrics.hpp"
#include "affield/minimax.hpp"
#include "affield/segmenter.hpp"
#include "affield/synthdata.hpp"

namespace affield {

/// Everything one run needs. Text form is one `key = value` per line with
/// `#` comments; see `config_keys()` for the schema and defaults.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string data_preset = "thinblob-32";
  std::filesystem::path data_manifest;     ///< overrides the preset when set
  int data_train = kThinblobTrain;
  int data_test = kThinblobTest;
  std::optional<std::uint64_t> data_seed;  ///< default: derived from `seed`

  KernelSpec ks = KernelSpec({3, 5});
  HyperParams hp;
  TrainConfig train;
  MinimaxConfig minimax;

  int eval_tol = 1;
  std::optional<int> ignore_class;

  std::filesystem::path output_dir;

  /// Throws ValidationError listing every violated field.
  void validate() const;

  /// Flat key -> value snapshot; parse_config(to_text()) reproduces the config.
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string description;
};

const std::vector<ConfigKey>& config_keys();

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& values);

SceneSpec scene_spec_preset(const std::string& name);
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& json);

struct Dataset {
  SceneSpec spec;
  std::vector<Scene> train;
  std::vector<Scene> test;
};

/// Train scenes take indices [0, n_train), test scenes the next n_test.
Dataset make_dataset(const SceneSpec& spec, int n_train, int n_test);

/// SEGGRID files (scene_NNNN_label.sgrd / scene_NNNN_feat.sgrd) plus
/// manifest.json {spec, num_classes, train: [{label, features}], test: [...]}.
std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_manifest(const std::filesystem::path& manifest);

/// Dataset the config points at (manifest, else preset with derived seed).
Dataset load_dataset(const ExperimentConfig& cfg);

struct EvalReport {
  ClassScores miou;
  ClassScores instance_miou;
  BoundaryScore boundary;
  std::vector<BoundaryScore> boundary_per_class;
  double pixel_accuracy = 0.0;

  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(std::span<const LabelGrid> preds, std::span<const LabelGrid> gts, int tol,
                    std::optional<int> ignore_class = std::nullopt);
EvalReport evaluate(const ToySegmenter& model, std::span<const Scene> scenes, int tol,
                    std::optional<int> ignore_class = std::nullopt);

struct RunRecord {
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::string loss_mode;
  std::vector<int> ks;
  std::vector<std::string> class_names;
  LossCurve curve;
  EvalReport metrics;
  std::vector<WeightSnapshot> weight_trajectory;
  std::optional<std::vector<double>> final_weights;
  double wall_time_s = 0.0;

  bool operator==(const RunRecord&) const = default;
};

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(const std::string& json);
RunRecord load_record(const std::filesystem::path& path);

struct RunOutput {
  RunRecord record;
  ToySegmenter model;
};

/// Trains and evaluates on the configured dataset. When output_dir is set,
/// writes run.json, model.tseg, curves.csv and (aaf) weights.csv, each via
/// temp file + rename.
RunOutput run_experiment(const ExperimentConfig& cfg);
RunOutput run_experiment(const ExperimentConfig& cfg, const Dataset& data);

/// Final weights of an aaf run as SimplexWeights. Throws for other modes.
SimplexWeights final_weights_of(const RunRecord& record);

/// CSV rows: `weight,class,name,term,kernel,value` per final weight and
/// `effective,class,name,term,,value` per (class, term).
std::string kernel_report(const RunRecord& record);

struct CollapseStats {
  std::vector<double> final_weights;
  double nonedge_on_smallest = 0.0;  ///< class mean of w(c, nonedge, min k)
  double edge_on_largest = 0.0;      ///< class mean of w(c, edge, max k)
  double min_nonedge_on_smallest = 0.0;
  double min_edge_on_largest = 0.0;
};

struct ProbeReport {
  std::vector<int> ks;
  double threshold = 0.0;
  CollapseStats descent;
  CollapseStats ascent;
  bool descent_collapsed = false;
  bool ascent_collapsed = false;
};

/// Collapse threshold on the class-mean weights, pinned from the thinblob-32 probe.
inline constexpr double kCollapseThreshold = 0.8;

CollapseStats collapse_stats(const SimplexWeights& w);

/// Trains twice in aaf mode, once minimizing over the weights (descent) and
/// once maximizing (ascent), and reports where the weight mass ends up.
ProbeReport trivial_solution_probe(const ExperimentConfig& cfg);
ProbeReport trivial_solution_probe(const ExperimentConfig& cfg, const Dataset& data);
std::string probe_to_json(const ProbeReport& report);

std::string eval_to_json(const EvalReport& report, const std::vector<std::string>& class_names);

}  // namespace affield
