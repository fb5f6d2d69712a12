#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "affield/harness.hpp"
#include "affield/seggrid.hpp"

using namespace affield;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("affield_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.data_train = 6;
  cfg.data_test = 3;
  cfg.train.iters = 12;
  cfg.train.base_lr = 0.01;
  cfg.train.log_every = 4;
  return cfg;
}

}  // namespace

TEST(Config, DefaultsMatchSchema) {
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.ks, KernelSpec({3, 5}));
  EXPECT_EQ(cfg.hp.lambda, 1.0);
  EXPECT_EQ(cfg.hp.margin_m, 3.0);
  EXPECT_EQ(cfg.train.poly_power, 0.9);
  EXPECT_EQ(cfg.train.weight_decay, 5e-4);
  EXPECT_EQ(cfg.minimax.w_lr, 0.01);
  for (const auto& key : config_keys()) EXPECT_TRUE(cfg.to_map().count(key.key)) << key.key;
}

TEST(Config, ParsesKeysAndComments) {
  const auto cfg = parse_config(
      "# comment\n"
      "seed = 4\n"
      "loss.mode = unary+aaf   # trailing\n"
      "loss.ks = 3, 5, 7\n"
      "minimax.direction = descent\n"
      "eval.ignore_class = 0\n");
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.train.loss_mode, LossMode::Aaf);
  EXPECT_EQ(cfg.ks, KernelSpec({3, 5, 7}));
  EXPECT_EQ(cfg.minimax.direction, WeightDirection::Descent);
  EXPECT_EQ(cfg.ignore_class, 0);
}

TEST(Config, TextRoundTrip) {
  auto cfg = parse_config("seed = 9\nhp.margin = 1.5\nloss.ks = 3,7\ntrain.base_lr = 0.003\n");
  EXPECT_EQ(parse_config(cfg.to_text()).to_map(), cfg.to_map());
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
  EXPECT_THROW(parse_config("nope = 1\n"), ValidationError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ValidationError);
  EXPECT_THROW(parse_config("seed 1\n"), ValidationError);
  EXPECT_THROW(parse_config("train.iters = many\n"), ValidationError);
}

TEST(Config, ValidationListsEveryViolation) {
  try {
    parse_config("train.base_lr = -1\nloss.ks = 4\nhp.margin = 0\ndata.manifest = /no/such/manifest.json\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.base_lr"), std::string::npos) << msg;
    EXPECT_NE(msg.find("loss.ks"), std::string::npos) << msg;
    EXPECT_NE(msg.find("hp.margin"), std::string::npos) << msg;
    EXPECT_NE(msg.find("data.manifest"), std::string::npos) << msg;
  }
}

TEST(Dataset, ManifestRoundTrip) {
  const auto dir = fresh_dir("dataset");
  const auto data = make_dataset(thinblob32(), 3, 2);
  const auto manifest = write_dataset(data, dir);
  const auto back = load_manifest(manifest);
  EXPECT_EQ(back.spec.num_classes(), 3);
  ASSERT_EQ(back.train.size(), 3u);
  ASSERT_EQ(back.test.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.train[i].gt, data.train[i].gt);
    for (std::size_t p = 0; p < data.train[i].features.values().size(); ++p)
      EXPECT_EQ(back.train[i].features.values()[p], static_cast<float>(data.train[i].features.values()[p]));
  }
  // Test scenes continue the index sequence after the train scenes.
  EXPECT_EQ(data.test[0].gt, generate(thinblob32(), 1, 3)[0].gt);
  fs::remove_all(dir);
}

TEST(Run, DeterministicAndUnaryHasNoWeights) {
  auto cfg = small_config();
  const auto a = run_experiment(cfg).record;
  const auto b = run_experiment(cfg).record;
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_TRUE(a.weight_trajectory.empty());
  EXPECT_FALSE(a.final_weights.has_value());
  EXPECT_THROW(final_weights_of(a), ValidationError);
  EXPECT_THROW(kernel_report(a), ValidationError);
}

TEST(Run, RecordRoundTripAndArtifacts) {
  const auto dir = fresh_dir("run");
  auto cfg = small_config();
  cfg.train.loss_mode = LossMode::Aaf;
  cfg.output_dir = dir;
  const auto out = run_experiment(cfg);
  for (const char* f : {"run.json", "model.tseg", "curves.csv", "weights.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  const auto back = load_record(dir / "run.json");
  EXPECT_EQ(back, out.record);
  EXPECT_EQ(record_from_json(record_to_json(out.record)), out.record);
  EXPECT_EQ(back.weight_trajectory.size(), 4u);  // iters 0, 4, 8 and the last, 11
  EXPECT_EQ(back.final_weights->size(), 3u * 2 * 2);
  const auto ckpt = load_checkpoint(dir / "model.tseg");
  EXPECT_EQ(ckpt.param_count(), out.model.param_count());
  fs::remove_all(dir);
}

TEST(KernelReport, UniformAndOneHotWeights) {
  RunRecord r;
  r.loss_mode = "aaf";
  r.ks = {3, 5};
  r.class_names = {"background", "blob", "bars"};
  r.final_weights = std::vector<double>(3 * 2 * 2, 0.5);
  auto has_line = [](const std::string& csv, const std::string& line) {
    return csv.find(line) != std::string::npos;
  };
  const auto uniform = kernel_report(r);
  EXPECT_TRUE(has_line(uniform, "effective,2,bars,edge,,4\n")) << uniform;
  EXPECT_TRUE(has_line(uniform, "effective,1,blob,nonedge,,4\n")) << uniform;
  // One-hot on k = 3 for the bars edge row.
  (*r.final_weights)[(2 * 2 + 1) * 2 + 0] = 1.0;
  (*r.final_weights)[(2 * 2 + 1) * 2 + 1] = 0.0;
  EXPECT_TRUE(has_line(kernel_report(r), "effective,2,bars,edge,,3\n"));
  EXPECT_TRUE(has_line(kernel_report(r), "weight,2,bars,edge,3,1\n"));
}

TEST(Probe, RefusesSingleKernel) {
  auto cfg = small_config();
  cfg.ks = KernelSpec({3});
  EXPECT_THROW(trivial_solution_probe(cfg), ValidationError);
}

TEST(Probe, CollapseStatsOnConstructedWeights) {
  // Two classes over {3, 7}: non-edge all on 3, edge all on 7.
  const auto w = SimplexWeights::from_weights(2, 2, {1, 0, 0, 1, 0.9, 0.1, 0.2, 0.8});
  const auto s = collapse_stats(w);
  EXPECT_DOUBLE_EQ(s.nonedge_on_smallest, 0.95);
  EXPECT_DOUBLE_EQ(s.edge_on_largest, 0.9);
  EXPECT_DOUBLE_EQ(s.min_nonedge_on_smallest, 0.9);
  EXPECT_DOUBLE_EQ(s.min_edge_on_largest, 0.8);
}

TEST(Evaluate, LabelPairsAndModel) {
  const auto data = make_dataset(thinblob32(), 1, 2);
  std::vector<LabelGrid> gts;
  for (const auto& s : data.test) gts.push_back(s.gt);
  const auto perfect = evaluate(gts, gts, 1);
  EXPECT_EQ(perfect.miou.mean, 1.0);
  EXPECT_EQ(perfect.boundary.recall, 1.0);
  EXPECT_EQ(perfect.pixel_accuracy, 1.0);
  EXPECT_EQ(perfect.boundary_per_class.size(), 3u);
  const auto flat = evaluate(ToySegmenter(3, 3), data.test, 1);
  EXPECT_EQ(flat.boundary.recall, 0.0);
  const auto json = eval_to_json(perfect, {"background", "blob", "bars"});
  EXPECT_NE(json.find("\"instance_miou\""), std::string::npos);
}
