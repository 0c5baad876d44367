#include "patchmil/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "patchmil/error.hpp"

namespace patchmil {

namespace {

constexpr char kMagic[8] = {'P', 'M', 'I', 'L', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxString = 1ULL << 26;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint truncated reading " + what);
  return v;
}

std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get<std::uint64_t>(is, what);
  if (n > kMaxString) throw IoError("checkpoint: implausible length for " + what);
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint truncated reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, PatchModel& model,
                     std::uint64_t iteration) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put<std::uint64_t>(os, iteration);
    put_string(os, config.hash());
    put_string(os, config.to_json());
    const auto state = model.state();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, values] : state) {
      put_string(os, name);
      put<std::uint64_t>(os, values->size());
      os.write(reinterpret_cast<const char*>(values->data()),
               static_cast<std::streamsize>(values->size() * sizeof(float)));
    }
    os.flush();
    if (!os) throw IoError("checkpoint write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(path.string() + " is not a patchmil checkpoint");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw IoError("checkpoint version " + std::to_string(version) + " is not supported");
  Checkpoint ck;
  ck.iteration = get<std::uint64_t>(is, "iteration");
  ck.config_hash = get_string(is, "config hash");
  ck.config = RunConfig::from_json(get_string(is, "config"));
  if (ck.config.hash() != ck.config_hash) throw IoError("checkpoint config does not match its recorded hash");
  const auto count = get<std::uint32_t>(is, "array count");
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = get_string(is, "array name");
    const auto n = get<std::uint64_t>(is, name);
    if (n > kMaxString) throw IoError("checkpoint: implausible size for " + name);
    std::vector<float> values(n);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float))))
      throw IoError("checkpoint truncated reading " + name);
    ck.arrays.emplace_back(std::move(name), std::move(values));
  }
  return ck;
}

void restore(PatchModel& model, const Checkpoint& ckpt) {
  const ModelConfig& have = model.config();
  const ModelConfig& want = ckpt.config.model;
  auto mismatch = [](const std::string& what, int model_value, int ckpt_value) {
    throw ConfigError("checkpoint " + what + " is " + std::to_string(ckpt_value) + " but the model has " +
                      std::to_string(model_value));
  };
  if (have.grid_size != want.grid_size) mismatch("grid size P", have.grid_size, want.grid_size);
  if (have.num_classes != want.num_classes) mismatch("class count K", have.num_classes, want.num_classes);
  if (have.feature_channels() != want.feature_channels())
    mismatch("feature channels c'", have.feature_channels(), want.feature_channels());
  if (have.head_channels != want.head_channels) mismatch("head channels c*", have.head_channels, want.head_channels);

  auto state = model.state();
  if (state.size() != ckpt.arrays.size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.arrays.size()) + " arrays, model expects " +
                      std::to_string(state.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& [name, values] = ckpt.arrays[i];
    if (name != state[i].first) throw ConfigError("checkpoint array '" + name + "' where '" + state[i].first + "' expected");
    if (values.size() != state[i].second->size())
      throw ConfigError("checkpoint array '" + name + "' has the wrong size");
  }
  for (std::size_t i = 0; i < state.size(); ++i) *state[i].second = ckpt.arrays[i].second;
}

std::unique_ptr<PatchModel> load_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<PatchModel>(ckpt.config.model);
  restore(*model, ckpt);
  return model;
}

}  // namespace patchmil
