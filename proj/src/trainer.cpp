#include "patchmil/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>

#include "patchmil/checkpoint.hpp"
#include "patchmil/error.hpp"

namespace patchmil {

PreparedDataset prepare_dataset(const DatasetManifest& manifest, int side) {
  std::vector<Image> images;
  images.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) images.push_back(read_png(manifest.resolve(s)));
  return prepare_dataset(manifest, images, side);
}

PreparedDataset prepare_dataset(const DatasetManifest& manifest, const std::vector<Image>& images, int side) {
  if (images.size() != manifest.samples.size())
    throw ValidationError("prepare_dataset: image count does not match the manifest");
  PreparedDataset out{manifest, {}, side};
  out.images.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    out.images.push_back(preprocess(images[i], manifest.samples[i].boxes, side));
  return out;
}

Tensor batch_tensor(const PreparedDataset& data, const std::vector<int>& indices) {
  const int side = data.side;
  Tensor x(static_cast<int>(indices.size()), 3, side, side);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& px = data.images.at(static_cast<std::size_t>(indices[b])).pixels;
    std::memcpy(x.sample(static_cast<int>(b)), px.data(), px.size() * sizeof(float));
  }
  return x;
}

SupervisionLabel supervision_for(const ImageSample& sample, const PreparedImage& image, const PatchGrid& grid) {
  const std::size_t k_count = sample.labels.size();
  SupervisionLabel label{sample.labels, std::vector<std::optional<PatchLabelSet>>(k_count)};
  for (const auto& b : image.boxes) {
    auto& slot = label.boxes.at(static_cast<std::size_t>(b.class_index));
    const PatchLabelSet set = bbox_to_patch_labels(b, grid);
    if (slot)
      slot->merge(set);
    else
      slot = set;
  }
  return label;
}

std::string format_log_entry(const TrainLogEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "iter=%ld lr=%.6g total=%.9g annotated=%.9g unannotated=%.9g l2=%.9g", e.iteration,
                e.learning_rate, e.loss.total(), e.loss.annotated, e.loss.unannotated, e.loss.l2);
  return buf;
}

namespace {

std::string describe_batch(long iteration, const std::vector<std::string>& ids) {
  std::string s = "non-finite loss at iteration " + std::to_string(iteration) + "; batch:";
  for (const auto& id : ids) s += " " + id;
  return s;
}

}  // namespace

NonFiniteLossError::NonFiniteLossError(long iteration, std::vector<std::string> batch_ids)
    : std::runtime_error(describe_batch(iteration, batch_ids)), iteration_(iteration), batch_ids_(std::move(batch_ids)) {}

Trainer::Trainer(const RunConfig& config, const PreparedDataset& data, const FoldSplit& split, PatchModel& model)
    : config_(config),
      data_(data),
      model_(model),
      train_(split.train()),
      params_(model.trainable_parameters(config.freeze_backbone)),
      adam_(config.optimizer, params_),
      shuffle_rng_(config.seed ^ 0x5851f42d4c957f2dULL) {
  config_.validate();
  if (!(model.config() == config.model)) throw ConfigError("trainer: model does not match the run config");
  if (data.side != config.model.input_side) throw ConfigError("trainer: data prepared at the wrong side");
  if (data.manifest.num_classes() != config.model.num_classes)
    throw ConfigError("trainer: manifest has " + std::to_string(data.manifest.num_classes()) +
                      " classes but the model expects " + std::to_string(config.model.num_classes));
  model_.init(config.seed);
}

std::vector<int> Trainer::next_batch() {
  if (train_.empty()) throw ValidationError("trainer: empty training split");
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(config_.batch_size));
  while (batch.size() < static_cast<std::size_t>(config_.batch_size)) {
    if (cursor_ == order_.size()) {
      order_ = train_;
      shuffle_rng_.shuffle(order_.begin(), order_.end());
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

TrainLogEntry Trainer::step(const std::vector<int>& batch, long iteration) {
  const PatchGrid grid = model_.grid();
  std::vector<SupervisionLabel> labels;
  labels.reserve(batch.size());
  for (int i : batch)
    labels.push_back(supervision_for(data_.manifest.samples.at(static_cast<std::size_t>(i)),
                                     data_.images[static_cast<std::size_t>(i)], grid));

  TrainLogEntry entry;
  entry.iteration = iteration;
  entry.learning_rate = scheduled_learning_rate(config_.optimizer, iteration, config_.batch_size, train_.size());

  const Tensor logits = model_.forward_logits(batch_tensor(data_, batch), Mode::Train);
  Tensor dlogits;
  entry.loss = loss_from_logits(logits, labels, config_.loss, &dlogits);
  model_.zero_grad();
  entry.loss.l2 = l2_penalty(params_, config_.loss, true);
  if (!std::isfinite(entry.loss.total())) {
    std::vector<std::string> ids;
    for (int i : batch) ids.push_back(data_.manifest.samples[static_cast<std::size_t>(i)].image_id);
    throw NonFiniteLossError(iteration, std::move(ids));
  }
  model_.backward(dlogits, !config_.freeze_backbone);
  adam_.step(entry.learning_rate);
  return entry;
}

TrainResult Trainer::run(const TrainOptions& options) {
  TrainResult result;
  const bool checkpoints = !options.checkpoint.empty();
  for (long it = 0; it < config_.iterations; ++it) {
    result.log.push_back(step(next_batch(), it));
    result.iterations = it + 1;
    const bool last = it + 1 == config_.iterations;
    if (options.log && (it % config_.log_interval == 0 || last))
      *options.log << format_log_entry(result.log.back()) << '\n' << std::flush;
    if (checkpoints && config_.checkpoint_interval > 0 && (it + 1) % config_.checkpoint_interval == 0 && !last) {
      auto periodic = options.checkpoint;
      periodic += "." + std::to_string(it + 1);
      save_checkpoint(periodic, config_, model_, static_cast<std::uint64_t>(it + 1));
    }
  }
  if (checkpoints) save_checkpoint(options.checkpoint, config_, model_, static_cast<std::uint64_t>(result.iterations));
  return result;
}

double annotated_gradient_share(PatchModel& model, const Tensor& images,
                                const std::vector<SupervisionLabel>& labels, const LossConfig& loss) {
  const Tensor logits = model.forward_logits(images, Mode::Train);
  double norm2[2] = {0.0, 0.0};
  const Branch branches[2] = {Branch::Annotated, Branch::Unannotated};
  for (int b = 0; b < 2; ++b) {
    Tensor d;
    loss_from_logits(logits, labels, loss, &d, branches[b]);
    model.zero_grad();
    model.backward(d, true);
    for (Parameter* p : model.trainable_parameters(false))
      for (float g : p->grad) norm2[b] += static_cast<double>(g) * g;
  }
  model.zero_grad();
  const double a = std::sqrt(norm2[0]), u = std::sqrt(norm2[1]);
  if (a + u == 0.0) return 0.0;
  return a / (a + u);
}

}  // namespace patchmil
