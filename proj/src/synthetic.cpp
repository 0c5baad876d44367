#include "patchmil/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "patchmil/error.hpp"
#include "patchmil/random.hpp"

namespace patchmil {

void SynthConfig::validate() const {
  if (num_classes < 1 || num_classes > static_cast<int>(shape_class_names().size()))
    throw ValidationError("synth: num_classes must be in [1, 8]");
  if (image_side < 16) throw ValidationError("synth: image_side must be >= 16");
  if (samples < 1) throw ValidationError("synth: samples must be >= 1");
  if (!(annotated_fraction >= 0.0 && annotated_fraction <= 1.0))
    throw ValidationError("synth: annotated_fraction must be in [0, 1]");
  if (max_shapes < 0 || max_shapes > 3) throw ValidationError("synth: max_shapes must be in [0, 3]");
  if (min_size < 6 || max_size < min_size || max_size > image_side)
    throw ValidationError("synth: need 6 <= min_size <= max_size <= image_side");
  if (!(noise_sigma >= 0.0)) throw ValidationError("synth: noise_sigma must be >= 0");
  if (max_retries < 1) throw ValidationError("synth: max_retries must be >= 1");
}

std::size_t SyntheticDataset::shape_count() const {
  std::size_t n = 0;
  for (const auto& l : log) n += l.shapes.size();
  return n;
}

namespace {

using Rgb = std::array<int, 3>;

// Base colour per class; each shape jitters it a little.
constexpr std::array<Rgb, 8> kTint{{{230, 60, 50},
                                    {60, 200, 70},
                                    {60, 90, 235},
                                    {235, 215, 50},
                                    {215, 70, 215},
                                    {60, 215, 225},
                                    {245, 140, 30},
                                    {245, 245, 245}}};

// Shape footprint: w x h cells, inside(x, y) says whether local pixel (x, y)
// is painted, and shade(x, y) scales the colour (checker cells go dark).
struct Footprint {
  int w = 0, h = 0;
  std::function<bool(int, int)> inside;
  std::function<double(int, int)> shade = [](int, int) { return 1.0; };
};

Footprint footprint(int shape, int s) {
  const double r = s / 2.0;
  auto dist2 = [r](int x, int y) {
    const double dx = x + 0.5 - r, dy = y + 0.5 - r;
    return dx * dx + dy * dy;
  };
  switch (shape) {
    case 0:  // disk
      return {s, s, [=](int x, int y) { return dist2(x, y) <= r * r; }};
    case 1:  // square
      return {s, s, [](int, int) { return true; }};
    case 2:  // horizontal bar
      return {s, std::max(4, s / 2), [](int, int) { return true; }};
    case 3:  // vertical bar
      return {std::max(4, s / 2), s, [](int, int) { return true; }};
    case 4: {  // ring
      const double inner = 0.55 * r;
      return {s, s, [=](int x, int y) {
                const double d = dist2(x, y);
                return d <= r * r && d >= inner * inner;
              }};
    }
    case 5:  // triangle, apex up
      return {s, s, [=](int x, int y) { return std::abs(x + 0.5 - r) <= 0.5 * (y + 0.5); }};
    case 6: {  // plus sign
      const double t = std::max(1.0, s / 6.0);
      return {s, s, [=](int x, int y) { return std::abs(x + 0.5 - r) <= t || std::abs(y + 0.5 - r) <= t; }};
    }
    default: {  // checker patch, 4 x 4 cells
      const int cell = std::max(2, s / 4);
      Footprint f{s, s, [](int, int) { return true; }};
      f.shade = [cell](int x, int y) { return ((x / cell + y / cell) % 2 == 0) ? 1.0 : 0.15; };
      return f;
    }
  }
}

bool overlaps(const BoundingBox& a, const BoundingBox& b, double margin) {
  return a.x < b.right() + margin && b.x < a.right() + margin && a.y < b.bottom() + margin &&
         b.y < a.bottom() + margin;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Paints one shape and returns its tight pixel box.
BoundingBox paint(Image& img, const Footprint& f, int ox, int oy, const Rgb& colour, int k) {
  int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      if (!f.inside(x, y)) continue;
      const int px = ox + x, py = oy + y;
      const double s = f.shade(x, y);
      for (int c = 0; c < 3; ++c) img.at(px, py, c) = to_byte(colour[static_cast<std::size_t>(c)] * s);
      x0 = std::min(x0, px), y0 = std::min(y0, py);
      x1 = std::max(x1, px), y1 = std::max(y1, py);
    }
  return BoundingBox{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
                     static_cast<double>(y1 - y0 + 1), k};
}

std::string image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/img_%05d.png", i);
  return buf;
}

std::vector<int> choose_annotated(const std::vector<SyntheticImageLog>& log, const SynthConfig& cfg) {
  std::vector<int> candidates;
  for (std::size_t i = 0; i < log.size(); ++i)
    if (!log[i].shapes.empty()) candidates.push_back(static_cast<int>(i));
  const auto wanted = static_cast<std::size_t>(std::llround(cfg.annotated_fraction * cfg.samples));
  const std::size_t count = std::min(wanted, candidates.size());

  // Separate stream so the images do not depend on the annotation settings.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(candidates.begin(), candidates.end());
  if (!cfg.stratified) {
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
  }
  // Round-robin over classes, each turn taking the next unused image that
  // contains that class.
  std::vector<int> picked;
  std::vector<std::uint8_t> used(log.size(), 0);
  std::vector<std::size_t> cursor(static_cast<std::size_t>(cfg.num_classes), 0);
  while (picked.size() < count) {
    bool progressed = false;
    for (int k = 0; k < cfg.num_classes && picked.size() < count; ++k) {
      auto& cur = cursor[static_cast<std::size_t>(k)];
      while (cur < candidates.size()) {
        const int i = candidates[cur++];
        if (used[static_cast<std::size_t>(i)]) continue;
        const auto& shapes = log[static_cast<std::size_t>(i)].shapes;
        if (std::none_of(shapes.begin(), shapes.end(), [k](const ShapeRecord& s) { return s.class_index == k; }))
          continue;
        used[static_cast<std::size_t>(i)] = 1;
        picked.push_back(i);
        progressed = true;
        break;
      }
    }
    if (!progressed) break;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  SyntheticDataset out;
  out.config = config;
  const auto& names = shape_class_names();
  out.manifest.class_names.assign(names.begin(), names.begin() + config.num_classes);

  Rng rng(config.seed);
  const int side = config.image_side;
  for (int i = 0; i < config.samples; ++i) {
    Image img(side, side, 3);
    const double base = rng.uniform(70.0, 130.0);
    for (auto& v : img.pixels) v = to_byte(base + config.noise_sigma * rng.normal());

    const int n = std::min(rng.range(0, config.max_shapes), config.num_classes);
    std::vector<int> classes(static_cast<std::size_t>(config.num_classes));
    for (int k = 0; k < config.num_classes; ++k) classes[static_cast<std::size_t>(k)] = k;
    rng.shuffle(classes.begin(), classes.end());
    classes.resize(static_cast<std::size_t>(n));
    std::sort(classes.begin(), classes.end());

    SyntheticImageLog entry;
    entry.image_id = image_name(i);
    std::vector<BoundingBox> placed;
    for (int k : classes) {
      bool done = false;
      for (int attempt = 0; attempt < config.max_retries && !done; ++attempt) {
        const int s = rng.range(config.min_size, config.max_size);
        const Footprint f = footprint(k, s);
        const int ox = rng.range(0, side - f.w);
        const int oy = rng.range(0, side - f.h);
        const BoundingBox outline{static_cast<double>(ox), static_cast<double>(oy), static_cast<double>(f.w),
                                  static_cast<double>(f.h), k};
        if (std::any_of(placed.begin(), placed.end(), [&](const BoundingBox& b) { return overlaps(b, outline, 2.0); }))
          continue;
        Rgb colour = kTint[static_cast<std::size_t>(k)];
        for (auto& c : colour) c += rng.range(-20, 20);
        const BoundingBox tight = paint(img, f, ox, oy, colour, k);
        placed.push_back(outline);
        entry.shapes.push_back({k, tight});
        done = true;
      }
      if (!done)
        throw ValidationError("synth: could not place shape " + names[static_cast<std::size_t>(k)] +
                              " in image " + std::to_string(i) + " after " + std::to_string(config.max_retries) +
                              " attempts");
    }

    ImageSample sample;
    sample.image_id = sample.path = entry.image_id;
    sample.labels.assign(static_cast<std::size_t>(config.num_classes), 0);
    for (const auto& s : entry.shapes) sample.labels[static_cast<std::size_t>(s.class_index)] = 1;
    out.manifest.samples.push_back(std::move(sample));
    out.images.push_back(std::move(img));
    out.log.push_back(std::move(entry));
  }

  for (int i : choose_annotated(out.log, config)) {
    auto& entry = out.log[static_cast<std::size_t>(i)];
    entry.annotated = true;
    for (const auto& s : entry.shapes) out.manifest.samples[static_cast<std::size_t>(i)].boxes.push_back(s.box);
  }
  return out;
}

std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < data.images.size(); ++i)
    write_png(dir / data.manifest.samples[i].path, data.images[i]);
  const fs::path manifest_path = dir / "manifest.csv";
  save_manifest(data.manifest, manifest_path);

  const auto& c = data.config;
  nlohmann::ordered_json prov;
  prov["generator"] = "patchmil-synth";
  prov["seed"] = c.seed;
  prov["config"] = {{"num_classes", c.num_classes},   {"image_side", c.image_side},
                    {"samples", c.samples},           {"annotated_fraction", c.annotated_fraction},
                    {"stratified", c.stratified},     {"max_shapes", c.max_shapes},
                    {"min_size", c.min_size},         {"max_size", c.max_size},
                    {"noise_sigma", c.noise_sigma},   {"max_retries", c.max_retries}};
  prov["classes"] = data.manifest.class_names;
  auto& images = prov["images"] = nlohmann::ordered_json::array();
  for (const auto& entry : data.log) {
    nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
    for (const auto& s : entry.shapes)
      shapes.push_back({{"class", data.manifest.class_names[static_cast<std::size_t>(s.class_index)]},
                        {"box", {s.box.x, s.box.y, s.box.w, s.box.h}}});
    images.push_back({{"id", entry.image_id}, {"annotated", entry.annotated}, {"shapes", shapes}});
  }
  std::ofstream os(dir / "provenance.json");
  if (!os) throw IoError("cannot write provenance file in " + dir.string());
  os << prov.dump(1) << '\n';
  return manifest_path;
}

}  // namespace patchmil
