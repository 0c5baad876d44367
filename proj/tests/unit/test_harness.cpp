#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "patchmil/checkpoint.hpp"
#include "patchmil/config.hpp"
#include "patchmil/error.hpp"
#include "patchmil/evaluator.hpp"
#include "patchmil/optimizer.hpp"
#include "patchmil/render.hpp"
#include "patchmil/splits.hpp"
#include "patchmil/synthetic.hpp"
#include "patchmil/trainer.hpp"

using namespace patchmil;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("patchmil_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig tiny_config() {
  RunConfig c;
  c.model.backbone_channels = {4, 4, 8, 8, 8};
  c.model.head_channels = 8;
  c.batch_size = 4;
  c.iterations = 10;
  c.seed = 3;
  return c;
}

// Manifest with `annotated` boxed rows and `plain` label-only rows.
DatasetManifest pools(int annotated, int plain) {
  DatasetManifest m;
  m.class_names = {"a"};
  for (int i = 0; i < annotated + plain; ++i) {
    ImageSample s;
    s.image_id = s.path = "img" + std::to_string(i);
    s.labels = {static_cast<std::uint8_t>(i < annotated ? 1 : i % 2)};
    if (i < annotated) s.boxes.push_back({1, 1, 4, 4, 0});
    m.samples.push_back(s);
  }
  return m;
}

struct SynthSet {
  SyntheticDataset synth;
  PreparedDataset data;
};

SynthSet synth_set(int n, std::uint64_t seed, double annotated) {
  SynthConfig sc;
  sc.samples = n;
  sc.seed = seed;
  sc.annotated_fraction = annotated;
  SynthSet s{generate_synthetic(sc), {}};
  s.data = prepare_dataset(s.synth.manifest, s.synth.images, 64);
  return s;
}

FoldSplit everything(const DatasetManifest& m) {
  FoldSplit f;
  for (int i = 0; i < static_cast<int>(m.samples.size()); ++i)
    (m.samples[static_cast<std::size_t>(i)].annotated() ? f.train_annotated : f.train_unannotated).push_back(i);
  f.eval_annotated = f.train_annotated;
  f.eval_unannotated = f.train_unannotated;
  return f;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(RunConfig, DefaultsAreTheDeskProfile) {
  const RunConfig c;
  EXPECT_EQ(c.loss.lambda_bbox, 5.0);
  EXPECT_EQ(c.optimizer.learning_rate, 0.001);
  EXPECT_EQ(c.optimizer.decay_factor, 0.1);
  EXPECT_EQ(c.optimizer.decay_interval_epochs, 10.0);
  EXPECT_EQ(c.model.grid_size, 8);
  EXPECT_EQ(c.model.num_classes, 4);
  EXPECT_EQ(c.model.input_side, 64);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_NE(c.to_json().find("\"lambda_bbox\":5"), std::string::npos);
}

TEST(RunConfig, JsonRoundTripAndHash) {
  RunConfig c = tiny_config();
  c.loss.class_weights = {1.0, 2.0, 0.5, 1.0};
  c.data.manifest = "x/m.csv";
  c.seed = 1234567890123ULL;
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
  RunConfig d = c;
  d.loss.lambda_bbox = 4.0;
  EXPECT_NE(d.hash(), c.hash());

  const fs::path dir = scratch("config");
  c.save((dir / "c.json").string());
  EXPECT_EQ(RunConfig::load((dir / "c.json").string()), c);
}

TEST(RunConfig, OverridesAndErrors) {
  RunConfig c;
  c.apply_override("loss.lambda_bbox=2.5");
  c.apply_override("model.grid_size=12");
  c.apply_override("data.manifest=some/path.csv");
  c.apply_override("optimizer.type=adam");
  c.apply_override("loss.smooth_annotated=false");
  EXPECT_EQ(c.loss.lambda_bbox, 2.5);
  EXPECT_EQ(c.model.grid_size, 12);
  EXPECT_EQ(c.data.manifest, "some/path.csv");
  EXPECT_FALSE(c.loss.smooth_annotated);
  EXPECT_THROW(c.apply_override("loss.lambda=1"), ConfigError);
  EXPECT_THROW(c.apply_override("loss.lambda_bbox"), ConfigError);
  EXPECT_THROW(c.apply_override("loss.lambda_bbox=-1"), ConfigError);
  EXPECT_THROW(c.apply_override("optimizer.type=sgd"), ConfigError);
  EXPECT_THROW(RunConfig::from_json("{\"bogus\":1}"), ConfigError);
  EXPECT_THROW(RunConfig::from_json("{not json"), ConfigError);
  EXPECT_THROW(RunConfig::from_json("{\"model\":{\"input_side\":50}}"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/c.json"), IoError);
}

// ---------------------------------------------------------------- splits

TEST(Splits, FoldArithmetic) {
  const auto m = pools(100, 50);
  const auto plan = make_splits(m, 5, 0.8, 1.0, 7);
  ASSERT_EQ(plan.folds.size(), 5u);
  std::set<int> held_out;
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.eval_annotated.size(), 20u);
    EXPECT_EQ(f.train_annotated.size(), 64u);
    EXPECT_EQ(f.eval_unannotated.size(), 10u);
    EXPECT_EQ(f.train_unannotated.size(), 40u);
    const auto tr = f.train(), ev = f.eval();
    for (int i : ev) {
      EXPECT_FALSE(std::binary_search(tr.begin(), tr.end(), i));
      EXPECT_TRUE(held_out.insert(i).second);
    }
  }
  EXPECT_EQ(held_out.size(), 150u);
}

TEST(Splits, DeterministicAndFractionIndependent) {
  const auto m = pools(40, 40);
  EXPECT_EQ(make_splits(m, 5, 0.5, 0.5, 1), make_splits(m, 5, 0.5, 0.5, 1));
  EXPECT_NE(make_splits(m, 5, 0.5, 0.5, 1), make_splits(m, 5, 0.5, 0.5, 2));
  const auto full = make_splits(m, 5, 1.0, 1.0, 1), none = make_splits(m, 5, 0.0, 0.3, 1);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(full.folds[f].eval_annotated, none.folds[f].eval_annotated);
    EXPECT_EQ(full.folds[f].eval_unannotated, none.folds[f].eval_unannotated);
    EXPECT_TRUE(none.folds[f].train_annotated.empty());
  }
}

TEST(Splits, Errors) {
  const auto m = pools(3, 40);
  EXPECT_THROW(make_splits(m, 5, 1.0, 1.0, 0), ValidationError);
  EXPECT_THROW(make_splits(pools(10, 10), 5, 1.5, 1.0, 0), ValidationError);
  EXPECT_THROW(make_splits(pools(10, 10), 1, 1.0, 1.0, 0), ValidationError);
  EXPECT_NO_THROW(make_splits(pools(0, 10), 5, 1.0, 1.0, 0));
}

// ------------------------------------------------------------- optimizer

TEST(Schedule, StepDecayPerEpochs) {
  OptimizerConfig o;
  // 100 training images, batch 10: one epoch per 10 iterations.
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(o, 0, 10, 100), 0.001);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(o, 99, 10, 100), 0.001);
  EXPECT_NEAR(scheduled_learning_rate(o, 100, 10, 100), 1e-4, 1e-18);
  EXPECT_NEAR(scheduled_learning_rate(o, 250, 10, 100), 1e-5, 1e-18);
  EXPECT_THROW(scheduled_learning_rate(o, 1, 1, 0), ValidationError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("w", 2);
  p.value = {1.0f, -1.0f};
  p.grad = {0.5f, -3.0f};
  Adam adam(OptimizerConfig{}, {&p});
  adam.step(0.01);
  EXPECT_NEAR(p.value[0], 0.99f, 1e-6);
  EXPECT_NEAR(p.value[1], -0.99f, 1e-6);
  EXPECT_EQ(adam.steps(), 1);
}

// ---------------------------------------------------------------- trainer

TEST(Trainer, SupervisionRoutesBoxesPerClass) {
  ImageSample s;
  s.labels = {1, 1, 0};
  PreparedImage img;
  img.boxes = {{0, 0, 8, 8, 0}, {56, 56, 8, 8, 0}};
  const auto sup = supervision_for(s, img, PatchGrid(64, 64, 8));
  ASSERT_TRUE(sup.annotated(0));
  EXPECT_EQ(sup.boxes[0]->positives, (std::vector<int>{0, 63}));
  EXPECT_FALSE(sup.annotated(1));
  EXPECT_FALSE(sup.annotated(2));
}

TEST(Trainer, ZeroIterationsGivesInitializedCheckpointAndEmptyLog) {
  const auto set = synth_set(20, 1, 0.5);
  RunConfig c = tiny_config();
  c.iterations = 0;
  PatchModel model(c.model);
  Trainer t(c, set.data, everything(set.data.manifest), model);
  const fs::path dir = scratch("zero");
  std::ostringstream log;
  const auto r = t.run({dir / "ck.bin", &log});
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(log.str().empty());
  const auto ck = read_checkpoint(dir / "ck.bin");
  EXPECT_EQ(ck.iteration, 0u);
  PatchModel fresh(c.model);
  fresh.init(c.seed);
  const auto reloaded = load_model(ck);
  const Tensor x = batch_tensor(set.data, {0, 1});
  EXPECT_EQ(reloaded->predict(x)[1].scores, fresh.predict(x)[1].scores);
}

TEST(Trainer, LossDecreasesOnSmallSet) {
  const auto set = synth_set(20, 2, 0.5);
  RunConfig c = tiny_config();
  c.iterations = 200;
  c.batch_size = 20;
  c.loss.l2_coefficient = 0.0;
  PatchModel model(c.model);
  const auto split = everything(set.data.manifest);
  Trainer t(c, set.data, split, model);
  const auto r = t.run();
  ASSERT_EQ(r.log.size(), 200u);
  // Full-batch steps, so the first and last entries see the same images.
  EXPECT_LT(r.log.back().loss.total(), r.log.front().loss.total());
}

TEST(Trainer, LogDecompositionAndFormat) {
  const auto set = synth_set(20, 3, 0.5);
  RunConfig c = tiny_config();
  c.iterations = 5;
  c.log_interval = 2;
  PatchModel model(c.model);
  Trainer t(c, set.data, everything(set.data.manifest), model);
  std::ostringstream os;
  const auto r = t.run({{}, &os});
  for (const auto& e : r.log) {
    EXPECT_GT(e.loss.l2, 0.0);
    EXPECT_NEAR(e.loss.total(), e.loss.annotated + e.loss.unannotated + e.loss.l2, 1e-8 * e.loss.total());
  }
  // Iterations 0, 2, 4 are logged.
  std::istringstream lines(os.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.rfind("iter=", 0), 0u);
    EXPECT_NE(line.find(" annotated="), std::string::npos);
    EXPECT_NE(line.find(" unannotated="), std::string::npos);
    EXPECT_NE(line.find(" l2="), std::string::npos);
    ++count;
  }
  EXPECT_EQ(count, 3);
}

TEST(Trainer, RunsAreBitwiseReproducible) {
  const auto set = synth_set(24, 4, 0.3);
  RunConfig c = tiny_config();
  c.iterations = 12;
  const fs::path dir = scratch("repro");
  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    PatchModel model(c.model);
    Trainer t(c, set.data, everything(set.data.manifest), model);
    std::ostringstream os;
    t.run({dir / ("ck" + std::to_string(run)), &os});
    logs[run] = os.str();
  }
  EXPECT_EQ(logs[0], logs[1]);
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(bytes(dir / "ck0"), bytes(dir / "ck1"));
}

TEST(Trainer, AnnotatedGradientShareGrowsWithLambda) {
  const auto set = synth_set(16, 5, 0.5);
  RunConfig c = tiny_config();
  PatchModel model(c.model);
  model.init(1);
  std::vector<int> ids;
  std::vector<SupervisionLabel> labels;
  bool any_box = false;
  for (int i = 0; i < 16; ++i) {
    ids.push_back(i);
    labels.push_back(supervision_for(set.data.manifest.samples[static_cast<std::size_t>(i)],
                                     set.data.images[static_cast<std::size_t>(i)], model.grid()));
    any_box = any_box || set.data.manifest.samples[static_cast<std::size_t>(i)].annotated();
  }
  ASSERT_TRUE(any_box);
  const Tensor x = batch_tensor(set.data, ids);
  double prev = 0.0;
  for (double lambda : {0.5, 1.0, 5.0, 20.0}) {
    LossConfig l;
    l.lambda_bbox = lambda;
    const double share = annotated_gradient_share(model, x, labels, l);
    EXPECT_GT(share, prev) << "lambda " << lambda;
    prev = share;
  }
}

TEST(Trainer, NonFiniteLossAbortsWithBatchIds) {
  auto set = synth_set(8, 6, 0.5);
  RunConfig c = tiny_config();
  PatchModel model(c.model);
  Trainer t(c, set.data, everything(set.data.manifest), model);
  // Poison the prediction layer so every logit is NaN.
  model.head().conv1x1().bias().value[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.step({2, 3}, 0);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.batch_ids(), (std::vector<std::string>{set.data.manifest.samples[2].image_id,
                                                       set.data.manifest.samples[3].image_id}));
    EXPECT_EQ(e.iteration(), 0);
  }
}

TEST(Trainer, ConfigMismatchesRejected) {
  const auto set = synth_set(8, 7, 0.5);
  RunConfig c = tiny_config();
  auto other = c.model;
  other.grid_size = 4;
  PatchModel wrong(other);
  EXPECT_THROW(Trainer(c, set.data, everything(set.data.manifest), wrong), ConfigError);
  c.model.num_classes = 3;
  PatchModel three(c.model);
  EXPECT_THROW(Trainer(c, set.data, everything(set.data.manifest), three), ConfigError);
}

// ------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripAndMismatch) {
  const auto set = synth_set(8, 8, 0.5);
  RunConfig c = tiny_config();
  c.iterations = 3;
  PatchModel model(c.model);
  Trainer t(c, set.data, everything(set.data.manifest), model);
  const fs::path dir = scratch("ckpt");
  t.run({dir / "ck.bin"});
  const auto ck = read_checkpoint(dir / "ck.bin");
  EXPECT_EQ(ck.config, c);
  EXPECT_EQ(ck.config_hash, c.hash());
  EXPECT_EQ(ck.iteration, 3u);
  const Tensor x = batch_tensor(set.data, {0, 1, 2});
  EXPECT_EQ(load_model(ck)->predict(x)[2].scores, model.predict(x)[2].scores);
  EXPECT_FALSE(fs::exists(dir / "ck.bin.tmp"));

  for (auto tweak : {+[](ModelConfig& m) { m.grid_size = 4; }, +[](ModelConfig& m) { m.num_classes = 2; },
                     +[](ModelConfig& m) { m.head_channels = 4; },
                     +[](ModelConfig& m) { m.backbone_channels.back() = 16; }}) {
    ModelConfig mc = c.model;
    tweak(mc);
    PatchModel other(mc);
    EXPECT_THROW(restore(other, ck), ConfigError);
  }

  std::string bytes;
  {
    std::ifstream in(dir / "ck.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(read_checkpoint(dir / "trunc.bin"), IoError);
  std::ofstream(dir / "junk.bin", std::ios::binary) << "JUNKJUNKJUNK";
  EXPECT_THROW(read_checkpoint(dir / "junk.bin"), IoError);
  EXPECT_THROW(read_checkpoint(dir / "missing.bin"), IoError);
}

TEST(Checkpoint, PeriodicFilesWritten) {
  const auto set = synth_set(8, 9, 0.5);
  RunConfig c = tiny_config();
  c.iterations = 5;
  c.checkpoint_interval = 2;
  PatchModel model(c.model);
  Trainer t(c, set.data, everything(set.data.manifest), model);
  const fs::path dir = scratch("periodic");
  t.run({dir / "ck.bin"});
  EXPECT_TRUE(fs::exists(dir / "ck.bin.2"));
  EXPECT_TRUE(fs::exists(dir / "ck.bin.4"));
  EXPECT_EQ(read_checkpoint(dir / "ck.bin.4").iteration, 4u);
  EXPECT_EQ(read_checkpoint(dir / "ck.bin").iteration, 5u);
}

// -------------------------------------------------------------- evaluator

namespace {

// Scores from the truth: `inside` on patches touched by a box of the class
// (or on one fixed patch for unannotated positives), `outside` elsewhere.
std::vector<EvalItem> stub_items(const SyntheticDataset& d, double inside, double outside) {
  const PatchGrid grid(64, 64, 8);
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < d.log.size(); ++i) {
    EvalItem it;
    it.image_id = d.log[i].image_id;
    it.labels = d.manifest.samples[i].labels;
    it.boxes = d.manifest.samples[i].boxes;
    it.prediction.grid = grid;
    it.prediction.num_classes = 4;
    it.prediction.scores.assign(64 * 4, outside);
    for (const auto& s : d.log[i].shapes)
      for (int j : bbox_to_patch_labels(s.box, grid).positives)
        it.prediction.scores[static_cast<std::size_t>(j * 4 + s.class_index)] = inside;
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace

TEST(Evaluate, PerfectStub) {
  SynthConfig sc;
  sc.samples = 200;
  sc.seed = 11;
  sc.annotated_fraction = 0.3;
  const auto d = generate_synthetic(sc);
  const auto r = evaluate_items(stub_items(d, 0.999, 0.001), d.manifest.class_names, LossConfig{}, 0.5, "h");
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(*r.auc[static_cast<std::size_t>(k)], 1.0);
    EXPECT_GT(r.localization[static_cast<std::size_t>(k)].evaluated, 0);
    EXPECT_DOUBLE_EQ(*r.localization[static_cast<std::size_t>(k)].iou_accuracy[0], 1.0);
    EXPECT_DOUBLE_EQ(*r.localization[static_cast<std::size_t>(k)].ior_accuracy[0], 1.0);
  }
  EXPECT_EQ(r.annotated_eval_images, 60);
  EXPECT_DOUBLE_EQ(*r.mean_localization(OverlapMeasure::IoU, 0.1), 1.0);
}

TEST(Evaluate, RandomStubIsNearChance) {
  SynthConfig sc;
  sc.samples = 200;
  sc.seed = 12;
  const auto d = generate_synthetic(sc);
  auto items = stub_items(d, 0.5, 0.5);
  Rng rng(13);
  for (auto& it : items)
    for (auto& s : it.prediction.scores) s = rng.uniform(0.001, 0.06);
  const auto r = evaluate_items(items, d.manifest.class_names, LossConfig{}, 0.5, "h");
  for (const auto& a : r.auc) EXPECT_NEAR(*a, 0.5, 0.1);
}

TEST(Evaluate, ReportGridsAndAbsentValues) {
  SynthConfig sc;
  sc.samples = 30;
  sc.seed = 14;
  sc.annotated_fraction = 0.0;
  const auto d = generate_synthetic(sc);
  const auto r = evaluate_items(stub_items(d, 0.9, 0.1), d.manifest.class_names, LossConfig{}, 0.5, "abc123");
  const std::string kv = r.key_values();
  EXPECT_EQ(kv.rfind("config_hash=abc123\n", 0), 0u);
  for (const char* t : {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7"})
    EXPECT_NE(kv.find(std::string("loc.iou.") + t + ".mean=absent"), std::string::npos) << t;
  for (const char* t : {"0.1", "0.25", "0.5", "0.75", "0.9"})
    EXPECT_NE(kv.find(std::string("loc.ior.") + t + ".mean="), std::string::npos) << t;
  EXPECT_EQ(kv.find("loc.iou.0.8"), std::string::npos);
  EXPECT_EQ(kv.find("loc.ior.0.2."), std::string::npos);
  EXPECT_NE(r.table().find("config_hash abc123"), std::string::npos);
  EXPECT_FALSE(r.localization[0].iou_accuracy[0].has_value());
  EXPECT_THROW(r.mean_localization(OverlapMeasure::IoU, 0.15), ValidationError);
  EXPECT_THROW(evaluate_items({}, d.manifest.class_names, LossConfig{}, 0.5, "h"), ValidationError);
}

TEST(Evaluate, ModelPathChecksClassCountAndEmptyPool) {
  const auto set = synth_set(10, 15, 0.5);
  RunConfig c = tiny_config();
  PatchModel model(c.model);
  model.init(1);
  FoldSplit empty;
  EXPECT_THROW(evaluate(model, c, set.data, empty), ValidationError);
  auto mc = c.model;
  mc.num_classes = 2;
  PatchModel two(mc);
  EXPECT_THROW(evaluate(two, c, set.data, everything(set.data.manifest)), ConfigError);
  const auto r = evaluate(model, c, set.data, everything(set.data.manifest));
  EXPECT_EQ(r.eval_images, 10);
  EXPECT_EQ(r.config_hash, c.hash());
}

// ----------------------------------------------------------------- render

TEST(Render, OverlaySizeAndBoxOutline) {
  PredictionTensor p;
  p.grid = PatchGrid(64, 64, 8);
  p.num_classes = 2;
  p.scores.assign(128, 0.0);
  const Image img(40, 30, 3, 100);
  const Image out = render_overlay(img, p, 1, {{5, 5, 10, 10, 1}});
  EXPECT_EQ(out.width, 40);
  EXPECT_EQ(out.height, 30);
  EXPECT_EQ(out.channels, 3);
  EXPECT_EQ(out.at(20, 20, 0), 100);  // score 0: untouched
  EXPECT_EQ(out.at(5, 5, 1), 255);    // box outline colour
  EXPECT_THROW(render_overlay(img, p, 2, {}), ValidationError);
  const auto up = upsample_scores(p, 0, 16, 16);
  EXPECT_EQ(up.size(), 256u);
}
