// patchmil command line: synth | train | eval | predict | render.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchmil/checkpoint.hpp"
#include "patchmil/config.hpp"
#include "patchmil/error.hpp"
#include "patchmil/evaluator.hpp"
#include "patchmil/localize.hpp"
#include "patchmil/render.hpp"
#include "patchmil/splits.hpp"
#include "patchmil/synthetic.hpp"
#include "patchmil/trainer.hpp"

namespace fs = std::filesystem;
using namespace patchmil;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

FoldSplit fold_of(const RunConfig& c, const DatasetManifest& m) {
  const SplitPlan plan = make_splits(m, c.data.fold_count, c.data.annotated_fraction, c.data.unannotated_fraction,
                                     c.data.split_seed);
  return plan.folds.at(static_cast<std::size_t>(c.data.fold));
}

// Images named on the command line, or every sample of a manifest.
struct Inputs {
  DatasetManifest manifest;
  std::vector<Image> images;
};

Inputs gather(const std::string& manifest_path, const std::vector<std::string>& image_paths, int num_classes) {
  Inputs in;
  if (!manifest_path.empty()) {
    in.manifest = load_manifest(manifest_path);
    for (const auto& s : in.manifest.samples) in.images.push_back(read_png(in.manifest.resolve(s)));
  } else {
    for (int k = 0; k < num_classes; ++k) in.manifest.class_names.push_back("class" + std::to_string(k));
    for (const auto& p : image_paths) {
      ImageSample s;
      s.image_id = s.path = p;
      s.labels.assign(static_cast<std::size_t>(num_classes), 0);
      in.manifest.samples.push_back(s);
      in.images.push_back(read_png(p));
    }
  }
  if (in.images.empty()) throw ValidationError("no input images");
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-grid multiple-instance learning: joint classification and localization"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic shape dataset");
  SynthConfig sc;
  std::string synth_out;
  synth->add_option("--classes", sc.num_classes, "shape classes (1-8)")->capture_default_str();
  synth->add_option("--n", sc.samples, "number of images")->capture_default_str();
  synth->add_option("--seed", sc.seed, "generator seed")->capture_default_str();
  synth->add_option("--side", sc.image_side, "image side in pixels")->capture_default_str();
  synth->add_option("--annotated-fraction", sc.annotated_fraction, "share of images keeping boxes")->capture_default_str();
  synth->add_flag("--stratified", sc.stratified, "balance annotated images across classes");
  synth->add_option("--min-size", sc.min_size)->capture_default_str();
  synth->add_option("--max-size", sc.max_size)->capture_default_str();
  synth->add_option("--noise", sc.noise_sigma, "background noise sigma")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model on one fold");
  std::string train_manifest, train_config, train_out;
  std::vector<std::string> overrides;
  train->add_option("--manifest", train_manifest, "dataset manifest (overrides data.manifest)");
  train->add_option("--config", train_config, "run config JSON");
  train->add_option("--set", overrides, "key.path=value override (repeatable)");
  train->add_option("--out", train_out, "run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a fold's held-out set");
  std::string eval_ckpt, eval_manifest, eval_out;
  int eval_fold = -1;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--manifest", eval_manifest, "defaults to the checkpoint's data.manifest");
  eval->add_option("--fold", eval_fold, "defaults to the checkpoint's fold");
  eval->add_option("--out", eval_out, "report directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "write patch scores and regions");
  std::string pred_ckpt, pred_manifest, pred_out;
  std::vector<std::string> pred_images;
  predict->add_option("--ckpt", pred_ckpt)->required();
  auto* pm = predict->add_option("--manifest", pred_manifest);
  predict->add_option("--image", pred_images, "PNG file (repeatable)")->excludes(pm);
  predict->add_option("--out", pred_out, "output directory")->required();

  // render
  auto* render = app.add_subcommand("render", "heatmap overlay PNG for one class");
  std::string rend_ckpt, rend_image, rend_manifest, rend_out;
  int rend_class = 0;
  render->add_option("--ckpt", rend_ckpt)->required();
  render->add_option("--image", rend_image)->required();
  render->add_option("--class", rend_class)->required();
  render->add_option("--manifest", rend_manifest, "draw this image's boxes from the manifest");
  render->add_option("--out", rend_out, "output PNG (default <image>.overlay.png)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto data = generate_synthetic(sc);
      const auto path = write_synthetic(data, synth_out);
      std::cout << "wrote " << data.images.size() << " images, " << data.manifest.box_count() << " boxes to "
                << path.string() << '\n';
    } else if (*train) {
      RunConfig cfg = train_config.empty() ? RunConfig{} : RunConfig::load(train_config);
      for (const auto& o : overrides) cfg.apply_override(o);
      if (!train_manifest.empty()) cfg.data.manifest = fs::absolute(train_manifest).string();
      if (cfg.data.manifest.empty()) throw ConfigError("train: no manifest given");
      cfg.validate();
      fs::create_directories(train_out);
      cfg.save((fs::path(train_out) / "config.json").string());

      const auto manifest = load_manifest(cfg.data.manifest);
      const auto data = prepare_dataset(manifest, cfg.model.input_side);
      const FoldSplit split = fold_of(cfg, manifest);
      std::cout << "config " << cfg.hash() << ": lambda_bbox=" << cfg.loss.lambda_bbox << " train "
                << split.train().size() << " (" << split.train_annotated.size() << " annotated)\n";
      PatchModel model(cfg.model);
      Trainer trainer(cfg, data, split, model);
      std::ofstream log(fs::path(train_out) / "train.log");
      if (!log) throw IoError("cannot write training log");
      log << "# config_hash=" << cfg.hash() << '\n';
      struct Tee : std::streambuf {
        std::streambuf *a, *b;
        int overflow(int c) override {
          if (c == EOF) return 0;
          a->sputc(static_cast<char>(c));
          b->sputc(static_cast<char>(c));
          return c;
        }
        int sync() override { return a->pubsync() | b->pubsync(); }
      } tee;
      tee.a = log.rdbuf();
      tee.b = std::cout.rdbuf();
      std::ostream both(&tee);
      trainer.run({fs::path(train_out) / "checkpoint.bin", &both});
    } else if (*eval) {
      const Checkpoint ck = read_checkpoint(eval_ckpt);
      RunConfig cfg = ck.config;
      if (eval_fold >= 0) cfg.data.fold = eval_fold;
      if (!eval_manifest.empty()) cfg.data.manifest = eval_manifest;
      cfg.validate();
      auto model = load_model(ck);
      const auto manifest = load_manifest(cfg.data.manifest);
      const auto data = prepare_dataset(manifest, cfg.model.input_side);
      const auto report = evaluate(*model, cfg, data, fold_of(cfg, manifest));
      fs::create_directories(eval_out);
      write_text(fs::path(eval_out) / "report.txt", report.table());
      write_text(fs::path(eval_out) / "report.kv", report.key_values());
      std::cout << report.table();
    } else if (*predict) {
      const Checkpoint ck = read_checkpoint(pred_ckpt);
      auto model = load_model(ck);
      const Inputs in = gather(pred_manifest, pred_images, ck.config.model.num_classes);
      if (in.manifest.num_classes() != ck.config.model.num_classes)
        throw ConfigError("predict: manifest class count differs from the checkpoint");
      const auto data = prepare_dataset(in.manifest, in.images, ck.config.model.input_side);
      std::vector<int> all(in.images.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      const auto preds = predict_all(*model, data, all);
      fs::create_directories(pred_out);
      std::ofstream scores(fs::path(pred_out) / "scores.csv");
      std::ofstream regions(fs::path(pred_out) / "regions.txt");
      if (!scores || !regions) throw IoError("cannot write predictions in " + pred_out);
      scores << "# config_hash=" << ck.config_hash << "\nimage_id,class,row,col,score\n";
      regions << "# config_hash=" << ck.config_hash << '\n';
      char buf[64];
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& id = in.manifest.samples[i].image_id;
        const int p = preds[i].grid.grid_size;
        for (int k = 0; k < preds[i].num_classes; ++k)
          for (int r = 0; r < p; ++r)
            for (int c = 0; c < p; ++c) {
              std::snprintf(buf, sizeof buf, "%.9g", preds[i].at(r, c, k));
              scores << id << ',' << in.manifest.class_names[static_cast<std::size_t>(k)] << ',' << r << ',' << c
                     << ',' << buf << '\n';
            }
        write_regions(regions, id, extract_regions(preds[i], ck.config.activation_threshold));
      }
      std::cout << "wrote predictions for " << preds.size() << " images to " << pred_out << '\n';
    } else if (*render) {
      const Checkpoint ck = read_checkpoint(rend_ckpt);
      auto model = load_model(ck);
      const Image img = read_png(rend_image);
      std::vector<BoundingBox> boxes;
      if (!rend_manifest.empty()) {
        const auto m = load_manifest(rend_manifest, {.verify_images = false});
        const fs::path target = fs::weakly_canonical(rend_image);
        for (const auto& s : m.samples)
          if (fs::weakly_canonical(m.resolve(s)) == target) boxes = s.boxes_of(rend_class);
      }
      DatasetManifest one;
      one.class_names.resize(static_cast<std::size_t>(ck.config.model.num_classes));
      one.samples.push_back(ImageSample{rend_image, rend_image, {}, {}, {}});
      const auto data = prepare_dataset(one, {img}, ck.config.model.input_side);
      const auto pred = predict_all(*model, data, {0}).front();
      const Image overlay = render_overlay(img, pred, rend_class, boxes);
      const std::string out = rend_out.empty() ? rend_image + ".overlay.png" : rend_out;
      write_png(out, overlay);
      std::cout << "wrote " << out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
