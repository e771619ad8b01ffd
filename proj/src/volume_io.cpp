#include "destripe/volume_io.hpp"

#include "destripe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <vector>

namespace destripe {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json metadata_json(const Volume& v) {
  return {{"voxel_spacing", {v.spacing.z_um, v.spacing.y_um, v.spacing.x_um}},
          {"stripe_axis", to_string(v.stripe_axis)}};
}

void apply_metadata(const nlohmann::json& j, Volume& v) {
  try {
    if (auto it = j.find("voxel_spacing"); it != j.end()) {
      auto s = it->get<std::vector<double>>();
      if (s.size() != 3) throw ValidationError("voxel_spacing needs three entries");
      v.spacing = {s[0], s[1], s[2]};
    }
    if (auto it = j.find("stripe_axis"); it != j.end()) {
      v.stripe_axis = it->is_number() ? StripeAxis::at_angle(it->get<double>())
                                      : parse_stripe_axis(it->get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad volume metadata: ") + e.what());
  }
}

Shape3 sidecar_shape(const nlohmann::json& j, const std::string& dtype) {
  try {
    if (j.at("dtype").get<std::string>() != dtype) {
      throw ValidationError("sidecar dtype must be " + dtype);
    }
    if (j.value("order", std::string("zyx")) != "zyx") {
      throw ValidationError("sidecar order must be zyx");
    }
    auto s = j.at("shape").get<std::vector<long long>>();
    if (s.size() != 3 || s[0] < 1 || s[1] < 1 || s[2] < 1) {
      throw ValidationError("sidecar shape must be three positive integers");
    }
    return {s[0], s[1], s[2]};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad sidecar: ") + e.what());
  }
}

void check_finite(const RealGrid& g, const fs::path& path) {
  if (Index bad = count_non_finite(g); bad > 0) {
    throw ValidationError(path.string() + " contains " + std::to_string(bad) +
                          " non-finite voxels");
  }
}

// ---------------------------------------------------------------- raw f32

Volume load_raw(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  const fs::path meta = sidecar_path(path);
  if (!fs::exists(meta)) throw IoError("missing sidecar " + meta.string());
  const nlohmann::json j = read_json(meta);
  const Shape3 shape = sidecar_shape(j, "float32");
  const auto bytes = read_bytes(path);
  const auto expected = static_cast<std::size_t>(shape.size()) * sizeof(float);
  if (bytes.size() != expected) {
    throw ValidationError("shape mismatch: sidecar expects " + std::to_string(expected) +
                          " bytes, " + path.string() + " has " + std::to_string(bytes.size()));
  }
  Volume v;
  v.data = RealGrid(shape);
  for (Index n = 0; n < shape.size(); ++n) {
    float f;
    std::memcpy(&f, bytes.data() + n * sizeof(float), sizeof(float));
    v.data[n] = f;
  }
  apply_metadata(j, v);
  check_finite(v.data, path);
  return v;
}

void save_raw(const Volume& v, const fs::path& path) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(v.data.size()) * sizeof(float));
  for (Index n = 0; n < v.data.size(); ++n) {
    const float f = static_cast<float>(v.data[n]);
    std::memcpy(bytes.data() + n * sizeof(float), &f, sizeof(float));
  }
  write_bytes(path, bytes);
  nlohmann::json j = metadata_json(v);
  j["shape"] = {v.data.depth(), v.data.rows(), v.data.cols()};
  j["dtype"] = "float32";
  j["order"] = "zyx";
  write_json(sidecar_path(path), j);
}

// ---------------------------------------------------------------- TIFF

enum : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kImageDescription = 270,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kSampleFormat = 339,
};

class TiffReader {
 public:
  explicit TiffReader(std::vector<std::uint8_t> bytes) : b_(std::move(bytes)) {
    if (b_.size() < 8) throw ValidationError("TIFF too short");
    if (b_[0] == 'I' && b_[1] == 'I') {
      big_ = false;
    } else if (b_[0] == 'M' && b_[1] == 'M') {
      big_ = true;
    } else {
      throw ValidationError("not a TIFF file");
    }
    if (u16(2) != 42) throw ValidationError("unsupported TIFF variant (BigTIFF?)");
  }

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return big_ ? std::uint16_t(b_[at] << 8 | b_[at + 1]) : std::uint16_t(b_[at] | b_[at + 1] << 8);
  }
  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    std::uint32_t v = 0;
    for (int n = 0; n < 4; ++n) {
      const std::uint32_t byte = b_[at + n];
      v |= big_ ? byte << (8 * (3 - n)) : byte << (8 * n);
    }
    return v;
  }
  void need(std::size_t at, std::size_t len) const {
    if (at + len > b_.size()) throw ValidationError("truncated TIFF");
  }

  struct Entry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t value_at = 0;
  };

  std::vector<std::uint32_t> values(const Entry& e) const {
    std::vector<std::uint32_t> out;
    const std::size_t width = e.type == 3 ? 2 : e.type == 4 ? 4 : e.type == 1 || e.type == 2 ? 1 : 0;
    if (width == 0) throw ValidationError("unsupported TIFF field type");
    const std::size_t at = e.count * width <= 4 ? e.value_at : u32(e.value_at);
    for (std::uint32_t n = 0; n < e.count; ++n) {
      const std::size_t p = at + n * width;
      out.push_back(width == 2 ? u16(p) : width == 4 ? u32(p) : (need(p, 1), b_[p]));
    }
    return out;
  }

  std::string ascii(const Entry& e) const {
    const std::size_t at = e.count <= 4 ? e.value_at : u32(e.value_at);
    need(at, e.count);
    std::string s(reinterpret_cast<const char*>(b_.data() + at), e.count);
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
  }

  Volume read() const {
    std::vector<Plane<double>> pages;
    std::string description;
    std::size_t ifd = u32(4);
    while (ifd != 0) {
      if (pages.size() > 1'000'000) throw ValidationError("TIFF IFD chain loops");
      std::map<std::uint16_t, Entry> tags;
      const std::uint16_t count = u16(ifd);
      for (std::uint16_t n = 0; n < count; ++n) {
        const std::size_t at = ifd + 2 + 12 * n;
        tags[u16(at)] = Entry{u16(at + 2), u32(at + 4), at + 8};
      }
      auto scalar = [&](std::uint16_t tag, std::uint32_t fallback) {
        auto it = tags.find(tag);
        return it == tags.end() ? fallback : values(it->second).at(0);
      };
      const std::uint32_t width = scalar(kImageWidth, 0);
      const std::uint32_t height = scalar(kImageLength, 0);
      const std::uint32_t bits = scalar(kBitsPerSample, 1);
      const std::uint32_t format = scalar(kSampleFormat, 1);
      if (scalar(kCompression, 1) != 1) throw ValidationError("compressed TIFF not supported");
      if (scalar(kSamplesPerPixel, 1) != 1) throw ValidationError("only grayscale TIFF supported");
      const bool ok = (format == 1 && (bits == 8 || bits == 16)) || (format == 3 && bits == 32);
      if (!ok) throw ValidationError("TIFF sample type not supported (8/16-bit uint or 32-bit float)");
      if (!tags.count(kStripOffsets) || !tags.count(kStripByteCounts)) {
        throw ValidationError("TIFF page without strips");
      }
      if (pages.empty() && tags.count(kImageDescription)) {
        description = ascii(tags.at(kImageDescription));
      }
      const auto offsets = values(tags.at(kStripOffsets));
      const auto counts = values(tags.at(kStripByteCounts));
      if (offsets.size() != counts.size()) throw ValidationError("TIFF strip tables disagree");
      std::vector<std::uint8_t> pixels;
      for (std::size_t s = 0; s < offsets.size(); ++s) {
        need(offsets[s], counts[s]);
        pixels.insert(pixels.end(), b_.begin() + offsets[s], b_.begin() + offsets[s] + counts[s]);
      }
      const std::size_t bytes_per = bits / 8;
      if (pixels.size() < std::size_t(width) * height * bytes_per) {
        throw ValidationError("TIFF strips shorter than image");
      }
      Plane<double> page(height, width);
      for (std::size_t n = 0; n < std::size_t(width) * height; ++n) {
        const std::size_t p = n * bytes_per;
        double value = 0;
        if (bits == 8) {
          value = pixels[p] / 255.0;
        } else if (bits == 16) {
          const std::uint16_t raw = big_ ? std::uint16_t(pixels[p] << 8 | pixels[p + 1])
                                         : std::uint16_t(pixels[p] | pixels[p + 1] << 8);
          value = raw / 65535.0;
        } else {
          std::uint32_t raw = 0;
          for (int k = 0; k < 4; ++k) {
            const std::uint32_t byte = pixels[p + k];
            raw |= big_ ? byte << (8 * (3 - k)) : byte << (8 * k);
          }
          value = std::bit_cast<float>(raw);
        }
        page(n / width, n % width) = value;
      }
      if (!pages.empty() && (page.rows() != pages[0].rows() || page.cols() != pages[0].cols())) {
        throw ValidationError("TIFF pages differ in size");
      }
      pages.push_back(std::move(page));
      ifd = u32(ifd + 2 + 12 * count);
    }
    if (pages.empty()) throw ValidationError("TIFF has no pages");
    Volume v;
    v.data = RealGrid({Index(pages.size()), pages[0].rows(), pages[0].cols()});
    for (std::size_t k = 0; k < pages.size(); ++k) v.data.slice(Index(k)) = pages[k];
    if (!description.empty()) {
      try {
        apply_metadata(nlohmann::json::parse(description), v);
      } catch (const nlohmann::json::parse_error&) {
        // foreign description text, keep default metadata
      }
    }
    return v;
  }

 private:
  std::vector<std::uint8_t> b_;
  bool big_ = false;
};

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    b.push_back(std::uint8_t(v & 0xff));
    b.push_back(std::uint8_t(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int n = 0; n < 4; ++n) b.push_back(std::uint8_t((v >> (8 * n)) & 0xff));
  }
  void patch32(std::size_t at, std::uint32_t v) {
    for (int n = 0; n < 4; ++n) b[at + n] = std::uint8_t((v >> (8 * n)) & 0xff);
  }
  std::vector<std::uint8_t> b;
};

void save_tiff(const Volume& v, const fs::path& path) {
  ByteWriter w;
  w.b = {'I', 'I'};
  w.u16(42);
  std::size_t next_ifd_slot = w.b.size();
  w.u32(0);
  const std::string description = metadata_json(v).dump();
  const auto rows = std::uint32_t(v.data.rows());
  const auto cols = std::uint32_t(v.data.cols());
  const std::uint32_t page_bytes = rows * cols * 4;
  for (Index k = 0; k < v.data.depth(); ++k) {
    std::uint32_t desc_at = 0;
    if (k == 0) {
      desc_at = std::uint32_t(w.b.size());
      w.b.insert(w.b.end(), description.begin(), description.end());
      w.b.push_back(0);
    }
    if (w.b.size() % 2) w.b.push_back(0);
    const auto data_at = std::uint32_t(w.b.size());
    const auto plane = v.data.slice(k);
    for (Index i = 0; i < plane.rows(); ++i) {
      for (Index j = 0; j < plane.cols(); ++j) {
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(plane(i, j))));
      }
    }
    const auto ifd_at = std::uint32_t(w.b.size());
    w.patch32(next_ifd_slot, ifd_at);
    struct Tag {
      std::uint16_t tag, type;
      std::uint32_t count, value;
    };
    std::vector<Tag> tags = {{kImageWidth, 4, 1, cols},      {kImageLength, 4, 1, rows},
                             {kBitsPerSample, 3, 1, 32},     {kCompression, 3, 1, 1},
                             {kPhotometric, 3, 1, 1},        {kStripOffsets, 4, 1, data_at},
                             {kSamplesPerPixel, 3, 1, 1},    {kRowsPerStrip, 4, 1, rows},
                             {kStripByteCounts, 4, 1, page_bytes}, {kSampleFormat, 3, 1, 3}};
    if (k == 0) {
      tags.push_back({kImageDescription, 2, std::uint32_t(description.size() + 1), desc_at});
      std::sort(tags.begin(), tags.end(), [](const Tag& a, const Tag& b) { return a.tag < b.tag; });
    }
    w.u16(std::uint16_t(tags.size()));
    for (const Tag& t : tags) {
      w.u16(t.tag);
      w.u16(t.type);
      w.u32(t.count);
      if (t.type == 3) {
        w.u16(std::uint16_t(t.value));
        w.u16(0);
      } else {
        w.u32(t.value);
      }
    }
    next_ifd_slot = w.b.size();
    w.u32(0);
  }
  write_bytes(path, w.b);
}

}  // namespace

VolumeFormat format_from_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".tif" || ext == ".tiff" ? VolumeFormat::tiff_multipage : VolumeFormat::raw_f32;
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

Volume load_volume(const fs::path& path, VolumeFormat format) {
  if (format == VolumeFormat::raw_f32) return load_raw(path);
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  Volume v = TiffReader(read_bytes(path)).read();
  check_finite(v.data, path);
  return v;
}

Volume load_volume(const fs::path& path) { return load_volume(path, format_from_path(path)); }

void save_volume(const Volume& volume, const fs::path& path, VolumeFormat format) {
  if (format == VolumeFormat::raw_f32) {
    save_raw(volume, path);
  } else {
    save_tiff(volume, path);
  }
}

void save_volume(const Volume& volume, const fs::path& path) {
  save_volume(volume, path, format_from_path(path));
}

void save_mask(const MaskGrid& mask, const fs::path& path) {
  std::vector<std::uint8_t> bytes(mask.data(), mask.data() + mask.size());
  write_bytes(path, bytes);
  write_json(sidecar_path(path), {{"shape", {mask.depth(), mask.rows(), mask.cols()}},
                                  {"dtype", "uint8"},
                                  {"order", "zyx"}});
}

MaskGrid load_mask(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  const Shape3 shape = sidecar_shape(read_json(sidecar_path(path)), "uint8");
  const auto bytes = read_bytes(path);
  if (bytes.size() != std::size_t(shape.size())) {
    throw ValidationError("shape mismatch in mask " + path.string());
  }
  MaskGrid mask(shape);
  std::copy(bytes.begin(), bytes.end(), mask.data());
  return mask;
}

}  // namespace destripe
