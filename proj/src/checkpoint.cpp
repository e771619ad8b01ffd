#include "destripe/checkpoint.hpp"

#include "destripe/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace destripe {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'S', 'T', 'R', 'I', 'P', 'E', '\0'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ValidationError("truncated checkpoint: " + path.string());
  }
  return value;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterLayout& layout,
                     std::span<const double> params, const nlohmann::json& extra) {
  if (Index(params.size()) != layout.size()) {
    throw ValidationError("parameter vector does not match the layout");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, std::uint32_t(layout.blocks().size()));
  nlohmann::json blocks = nlohmann::json::array();
  for (const ParamBlock& b : layout.blocks()) {
    put<std::uint32_t>(out, std::uint32_t(b.name.size()));
    out.write(b.name.data(), std::streamsize(b.name.size()));
    put<std::uint64_t>(out, std::uint64_t(b.rows));
    put<std::uint64_t>(out, std::uint64_t(b.cols));
    out.write(reinterpret_cast<const char*>(params.data() + b.offset),
              std::streamsize(sizeof(double) * std::size_t(b.rows * b.cols)));
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());

  nlohmann::json manifest = {{"format", "destripe-checkpoint"},
                             {"version", kCheckpointVersion},
                             {"parameter_count", layout.size()},
                             {"blocks", blocks},
                             {"extra", extra}};
  std::ofstream side(manifest_path(path));
  if (!side) throw IoError("cannot write checkpoint manifest for " + path.string());
  side << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  Checkpoint ck;
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), std::streamsize(name.size()))) {
      throw ValidationError("truncated checkpoint: " + path.string());
    }
    const auto rows = Index(get<std::uint64_t>(in, path));
    const auto cols = Index(get<std::uint64_t>(in, path));
    const Index offset = ck.layout.add(name, rows, cols);
    ck.params.resize(std::size_t(ck.layout.size()));
    if (!in.read(reinterpret_cast<char*>(ck.params.data() + offset),
                 std::streamsize(sizeof(double) * std::size_t(rows * cols)))) {
      throw ValidationError("truncated checkpoint: " + path.string());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("trailing bytes in checkpoint: " + path.string());
  }
  if (std::ifstream side(manifest_path(path)); side) {
    try {
      ck.manifest = nlohmann::json::parse(side);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bad checkpoint manifest: " + std::string(e.what()));
    }
  }
  return ck;
}

}  // namespace destripe
