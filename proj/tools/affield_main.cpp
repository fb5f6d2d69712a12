#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "affield/gradcheck.hpp"
#include "affield/harness.hpp"
#include "affield/seggrid.hpp"

namespace fs = std::filesystem;
using namespace affield;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SceneSpec spec_from_arg(const std::string& arg) {
  if (fs::exists(arg)) return scene_spec_from_json(slurp(arg));
  return scene_spec_preset(arg);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << '\n';
  } else {
    write_file_atomic(out_path, text + "\n");
  }
}

// Resolves the dataset either from a manifest or a preset with an explicit seed.
struct EvalArgs {
  std::string ckpt, data, out, pred_dir;
  std::vector<std::string> preds, gts;
  int classes = 0;
  int tol = 1;
  int ignore_class = -1;
};

int cmd_eval(const EvalArgs& a) {
  std::optional<int> ignore;
  if (a.ignore_class >= 0) ignore = a.ignore_class;
  if (a.tol < 0) throw ValidationError("--tol must be >= 0");

  EvalReport report;
  std::vector<std::string> names;
  if (!a.ckpt.empty()) {
    if (a.data.empty()) throw ValidationError("--ckpt needs --data <manifest.json>");
    const auto model = load_checkpoint(a.ckpt);
    const auto data = load_manifest(a.data);
    if (model.classes() != data.spec.num_classes()) {
      throw ValidationError("checkpoint has " + std::to_string(model.classes()) + " classes, dataset has " +
                            std::to_string(data.spec.num_classes()));
    }
    if (!a.pred_dir.empty()) {
      fs::create_directories(a.pred_dir);
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "pred_%04zu.sgrd", i);
        write_grid(fs::path(a.pred_dir) / name, AnyGrid(predict(model, data.test[i].features)));
      }
    }
    report = evaluate(model, data.test, a.tol, ignore);
    for (int c = 0; c < data.spec.num_classes(); ++c) names.push_back(data.spec.class_name(c));
  } else {
    if (a.preds.empty() || a.preds.size() != a.gts.size()) {
      throw ValidationError("give --ckpt/--data, or matching --pred/--gt lists");
    }
    if (a.classes < 1) throw ValidationError("--classes is required with --pred/--gt");
    std::vector<LabelGrid> preds, gts;
    for (std::size_t i = 0; i < a.preds.size(); ++i) {
      preds.push_back(read_label_grid(a.preds[i], a.classes));
      gts.push_back(read_label_grid(a.gts[i], a.classes));
    }
    report = evaluate(preds, gts, a.tol, ignore);
    for (int c = 0; c < a.classes; ++c) names.push_back("class" + std::to_string(c));
  }
  emit(eval_to_json(report, names), a.out);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int instances) {
  GradCheckOptions opt;
  opt.seed = seed;
  opt.instances = instances;
  constexpr double kTol = 1e-4;
  bool ok = true;
  for (const auto& c : run_gradcheck(opt)) {
    const bool pass = c.max_rel_error < kTol;
    ok = ok && pass;
    std::printf("%-34s %s  max_rel_err=%.3e  coords=%zu\n", c.name.c_str(), pass ? "ok  " : "FAIL", c.max_rel_error,
                c.coordinates);
  }
  if (!ok) throw RuntimeFailure("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive affinity field losses on a toy segmenter"};
  app.require_subcommand(1);

  std::string spec_arg, out_dir;
  int n_train = kThinblobTrain, n_test = kThinblobTest;
  std::optional<std::uint64_t> data_seed;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as SEGGRID files plus manifest.json");
  gen->add_option("spec", spec_arg, "Preset name or scene spec JSON file")->required();
  gen->add_option("-o,--out", out_dir, "Output directory")->required();
  gen->add_option("--train", n_train, "Training scenes");
  gen->add_option("--test", n_test, "Test scenes");
  gen->add_option("--seed", data_seed, "Overrides the spec seed");

  std::string config_path;
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate one run");
  train_cmd->add_option("-c,--config", config_path, "Config file")->required();
  train_cmd->add_option("-o,--out", out_dir, "Output directory (overrides output.dir)");
  train_cmd->add_option("--set", overrides, "key=value overrides, applied after the file");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset, or prediction/gt grid pairs");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint (model.tseg)");
  eval_cmd->add_option("--data", eval_args.data, "Dataset manifest.json; the test split is scored");
  eval_cmd->add_option("--pred", eval_args.preds, "Predicted label grids");
  eval_cmd->add_option("--gt", eval_args.gts, "Ground-truth label grids");
  eval_cmd->add_option("--classes", eval_args.classes, "Class count for --pred/--gt");
  eval_cmd->add_option("--tol", eval_args.tol, "Boundary tolerance in pixels");
  eval_cmd->add_option("--ignore-class", eval_args.ignore_class, "Class left out of the averages");
  eval_cmd->add_option("--pred-dir", eval_args.pred_dir, "Also write predicted label grids here");
  eval_cmd->add_option("-o,--out", eval_args.out, "Report path (default stdout)");

  std::uint64_t gc_seed = 0;
  int gc_instances = 20;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("--seed", gc_seed, "Root seed");
  gc->add_option("--instances", gc_instances, "Random instances per case");

  std::string record_path, report_out;
  auto* wr = app.add_subcommand("weights-report", "Final kernel weights and effective kernel sizes of an aaf run");
  wr->add_option("record", record_path, "run.json")->required();
  wr->add_option("-o,--out", report_out, "CSV path (default stdout)");

  auto* probe = app.add_subcommand("probe-trivial", "Train with weight descent and ascent and report collapse");
  probe->add_option("-c,--config", config_path, "Config file")->required();
  probe->add_option("--set", overrides, "key=value overrides");
  probe->add_option("-o,--out", report_out, "JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto config_with_overrides = [&]() {
    auto cfg = load_config(config_path);
    if (overrides.empty()) return cfg;
    auto map = cfg.to_map();
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
      map[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return config_from_map(map);
  };

  try {
    if (*gen) {
      auto spec = spec_from_arg(spec_arg);
      if (data_seed) spec.seed = *data_seed;
      if (n_train < 0 || n_test < 0) throw ValidationError("scene counts must be >= 0");
      const auto manifest = write_dataset(make_dataset(spec, n_train, n_test), out_dir);
      std::cout << manifest.string() << '\n';
    } else if (*train_cmd) {
      auto cfg = config_with_overrides();
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      const auto out = run_experiment(cfg);
      const auto& m = out.record.metrics;
      std::printf("mode=%s mIoU=%.4f instance_mIoU=%.4f boundary P=%.4f R=%.4f F=%.4f time=%.1fs\n",
                  out.record.loss_mode.c_str(), m.miou.mean, m.instance_miou.mean, m.boundary.precision,
                  m.boundary.recall, m.boundary.f_measure, out.record.wall_time_s);
    } else if (*eval_cmd) {
      return cmd_eval(eval_args);
    } else if (*gc) {
      return cmd_gradcheck(gc_seed, gc_instances);
    } else if (*wr) {
      emit(kernel_report(load_record(record_path)), report_out);
    } else if (*probe) {
      emit(probe_to_json(trivial_solution_probe(config_with_overrides())), report_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
