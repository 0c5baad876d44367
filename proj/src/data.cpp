#include "patchmil/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "patchmil/error.hpp"
#include "patchmil/layers.hpp"

namespace patchmil {

std::vector<BoundingBox> ImageSample::boxes_of(int k) const {
  std::vector<BoundingBox> out;
  for (const auto& b : boxes)
    if (b.class_index == k) out.push_back(b);
  return out;
}

int DatasetManifest::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
}

std::filesystem::path DatasetManifest::resolve(const ImageSample& s) const {
  const std::filesystem::path p(s.path);
  return p.is_absolute() ? p : root / p;
}

const ImageSample* DatasetManifest::find(const std::string& image_id) const {
  for (const auto& s : samples)
    if (s.image_id == image_id) return &s;
  return nullptr;
}

std::size_t DatasetManifest::box_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.boxes.size();
  return n;
}

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "manifest has " + std::to_string(problems.size()) + " problem(s):";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size() && std::isfinite(out);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

ManifestError::ManifestError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root,
                               const ManifestOptions& options) {
  DatasetManifest m;
  m.root = root;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  std::set<std::string> seen;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";

    if (!have_header) {
      have_header = true;
      const auto comma = line.find(',');
      if (comma == std::string::npos || trim(line.substr(0, comma)) != "classes") {
        problems.push_back(where + "expected header 'classes,<name>;<name>;...'");
        break;
      }
      for (auto& name : split(line.substr(comma + 1), ';')) {
        name = trim(name);
        if (name.empty()) continue;
        if (m.class_index(name) >= 0) problems.push_back(where + "duplicate class '" + name + "'");
        m.class_names.push_back(name);
      }
      if (m.class_names.empty()) problems.push_back(where + "no class names declared");
      continue;
    }

    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      problems.push_back(where + "expected 'path,labels,boxes'");
      continue;
    }
    ImageSample s;
    s.path = trim(line.substr(0, c1));
    s.image_id = s.path;
    s.labels.assign(m.class_names.size(), 0);
    if (s.path.empty()) problems.push_back(where + "empty path");
    if (!seen.insert(s.image_id).second) problems.push_back(where + "duplicate image id '" + s.image_id + "'");

    for (auto& name : split(line.substr(c1 + 1, c2 - c1 - 1), ';')) {
      name = trim(name);
      if (name.empty()) continue;
      const int k = m.class_index(name);
      if (k < 0) {
        problems.push_back(where + "unknown class '" + name + "'");
        continue;
      }
      s.labels[static_cast<std::size_t>(k)] = 1;
    }

    for (auto& spec : split(line.substr(c2 + 1), ';')) {
      spec = trim(spec);
      if (spec.empty()) continue;
      const auto colon = spec.find(':');
      if (colon == std::string::npos) {
        problems.push_back(where + "box '" + spec + "' lacks 'class:'");
        continue;
      }
      const std::string name = trim(spec.substr(0, colon));
      const int k = m.class_index(name);
      if (k < 0) {
        problems.push_back(where + "box for unknown class '" + name + "'");
        continue;
      }
      const auto nums = split(spec.substr(colon + 1), ',');
      BoundingBox b;
      b.class_index = k;
      if (nums.size() != 4 || !parse_double(nums[0], b.x) || !parse_double(nums[1], b.y) ||
          !parse_double(nums[2], b.w) || !parse_double(nums[3], b.h)) {
        problems.push_back(where + "box '" + spec + "' is not class:x,y,w,h");
        continue;
      }
      if (!(b.w > 0.0) || !(b.h > 0.0)) {
        problems.push_back(where + "box '" + spec + "' has non-positive extent");
        continue;
      }
      if (!s.labels[static_cast<std::size_t>(k)]) {
        problems.push_back(where + "box for class '" + name + "' which is not among the labels");
        continue;
      }
      s.boxes.push_back(b);
    }

    if (options.verify_images && !s.path.empty() && !looks_like_png(m.resolve(s)))
      problems.push_back(where + "unreadable image '" + m.resolve(s).string() + "'");
    m.samples.push_back(std::move(s));
  }
  if (!have_header) problems.push_back("manifest is empty");
  if (!problems.empty()) throw ManifestError(std::move(problems));
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path(), options);
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "classes,";
  for (std::size_t k = 0; k < manifest.class_names.size(); ++k) os << (k ? ";" : "") << manifest.class_names[k];
  os << '\n';
  for (const auto& s : manifest.samples) {
    os << s.path << ',';
    bool first = true;
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      if (!s.labels[k]) continue;
      os << (first ? "" : ";") << manifest.class_names[k];
      first = false;
    }
    os << ',';
    for (std::size_t b = 0; b < s.boxes.size(); ++b) {
      const auto& box = s.boxes[b];
      os << (b ? ";" : "") << manifest.class_names[static_cast<std::size_t>(box.class_index)] << ':'
         << format_number(box.x) << ',' << format_number(box.y) << ',' << format_number(box.w) << ','
         << format_number(box.h);
    }
    os << '\n';
  }
  return os.str();
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest(manifest);
  if (!out) throw IoError("write failed: " + path.string());
}

BoundingBox scale_box(const BoundingBox& box, int from_w, int from_h, int to_w, int to_h) {
  const double sx = static_cast<double>(to_w) / from_w;
  const double sy = static_cast<double>(to_h) / from_h;
  return BoundingBox{box.x * sx, box.y * sy, box.w * sx, box.h * sy, box.class_index};
}

PreparedImage preprocess(const Image& image, const std::vector<BoundingBox>& boxes, int side,
                         ChannelPolicy policy) {
  if (side < 32 || side % 32 != 0) throw ValidationError("preprocess: side must be a positive multiple of 32");
  if (image.width < 1 || image.height < 1) throw ValidationError("preprocess: empty image");

  // Channel index to read for each of the three output channels.
  std::array<int, 3> src{0, 1, 2};
  switch (image.channels) {
    case 3:
    case 4:
      if (image.channels == 4 && policy == ChannelPolicy::Strict)
        throw ValidationError("preprocess: RGBA input rejected by strict channel policy");
      break;
    case 1:
    case 2:
      if (policy == ChannelPolicy::Strict)
        throw ValidationError("preprocess: grayscale input rejected by strict channel policy");
      src = {0, 0, 0};
      break;
    default:
      throw ValidationError("preprocess: unsupported channel count " + std::to_string(image.channels));
  }

  PreparedImage out;
  out.side = side;
  out.pixels.resize(static_cast<std::size_t>(3) * side * side);
  const auto ty = BilinearResize::taps(image.height, side);
  const auto tx = BilinearResize::taps(image.width, side);
  for (int c = 0; c < 3; ++c) {
    float* plane = out.pixels.data() + static_cast<std::size_t>(c) * side * side;
    for (int y = 0; y < side; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < side; ++x) {
        const auto& b = tx[static_cast<std::size_t>(x)];
        const int ch = src[static_cast<std::size_t>(c)];
        const double v00 = image.at(b.i0, a.i0, ch), v01 = image.at(b.i1, a.i0, ch);
        const double v10 = image.at(b.i0, a.i1, ch), v11 = image.at(b.i1, a.i1, ch);
        const double top = v00 + b.w1 * (v01 - v00);
        const double bot = v10 + b.w1 * (v11 - v10);
        const double v = top + a.w1 * (bot - top);
        plane[y * side + x] = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }
  for (const auto& b : boxes) {
    const BoundingBox clamped = clamp_box(b, image.width, image.height);
    if (!(clamped.w > 0.0) || !(clamped.h > 0.0)) continue;
    out.boxes.push_back(scale_box(clamped, image.width, image.height, side, side));
  }
  return out;
}

}  // namespace patchmil
