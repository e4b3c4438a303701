#include "cdm/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdm/error.hpp"

namespace cdm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path base_of(const fs::path& p) {
  if (p.extension() == ".json" || p.extension() == ".raw") {
    fs::path b = p;
    b.replace_extension();
    return b;
  }
  return p;
}

fs::path with_suffix(const fs::path& base, const char* suffix) {
  fs::path out = base;
  out += suffix;
  return out;
}

template <class T>
T from_little(const unsigned char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                    (std::uint32_t(p[3]) << 24);
  T out;
  std::memcpy(&out, &u, 4);
  return out;
}

template <class T>
void to_little(T value, unsigned char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t u;
  std::memcpy(&u, &value, 4);
  p[0] = static_cast<unsigned char>(u & 0xFF);
  p[1] = static_cast<unsigned char>((u >> 8) & 0xFF);
  p[2] = static_cast<unsigned char>((u >> 16) & 0xFF);
  p[3] = static_cast<unsigned char>((u >> 24) & 0xFF);
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes_atomic(const fs::path& p, const void* data, std::size_t n) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for '" + p.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
}

struct Header {
  Dims dims;
  Spacing spacing;
  std::string dtype;
  std::string kind;
  double unit_scale = 1.0;
  std::vector<std::string> roi_names;
};

Header parse_header(const fs::path& hp) {
  json j;
  try {
    j = json::parse(read_text_file(hp));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed volume header '" + hp.string() + "': " + e.what());
  }
  Header h;
  try {
    const auto& d = j.at("dims");
    const auto& s = j.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3) throw ValidationError("dims and spacing_mm must have 3 entries");
    for (const auto& v : d) {
      if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) throw ValidationError("dims must be positive integers");
    }
    h.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    h.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    h.dtype = j.at("dtype").get<std::string>();
    h.kind = j.at("kind").get<std::string>();
    if (j.at("order").get<std::string>() != "zyx") throw ValidationError("only z-major \"zyx\" order is supported");
    if (j.at("endian").get<std::string>() != "little") throw ValidationError("only little-endian payloads are supported");
    h.unit_scale = j.value("unit_scale", 1.0);
    if (h.kind == "bitmask") {
      const auto& table = j.at("roi_table");
      if (!table.is_object()) throw ValidationError("roi_table must be an object");
      h.roi_names.assign(table.size(), "");
      for (auto it = table.begin(); it != table.end(); ++it) {
        const int bit = it.value().get<int>();
        if (bit < 1 || bit > static_cast<int>(table.size())) {
          throw ValidationError("roi_table bit indices must be contiguous from 1, got " + std::to_string(bit));
        }
        if (!h.roi_names[static_cast<std::size_t>(bit - 1)].empty()) {
          throw ValidationError("roi_table bit index " + std::to_string(bit) + " used twice");
        }
        h.roi_names[static_cast<std::size_t>(bit - 1)] = it.key();
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("invalid volume header '" + hp.string() + "': " + e.what());
  }
  return h;
}

std::string header_text(const Dims& dims, const Spacing& sp, const char* dtype, const char* kind, double unit_scale,
                        const std::vector<std::string>* rois) {
  json j;
  j["dims"] = {dims.nx, dims.ny, dims.nz};
  j["spacing_mm"] = {sp.sx, sp.sy, sp.sz};
  j["dtype"] = dtype;
  j["order"] = "zyx";
  j["endian"] = "little";
  j["unit_scale"] = unit_scale;
  j["kind"] = kind;
  if (rois) {
    json table = json::object();
    for (std::size_t i = 0; i < rois->size(); ++i) table[(*rois)[i]] = i + 1;
    j["roi_table"] = table;
  }
  return j.dump(2) + "\n";
}

}  // namespace

fs::path header_path(const fs::path& path) { return with_suffix(base_of(path), ".json"); }
fs::path payload_path(const fs::path& path) { return with_suffix(base_of(path), ".raw"); }

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

AnyVolume load_volume(const fs::path& path, VolumeKind expected_kind) {
  const fs::path hp = header_path(path);
  const fs::path pp = payload_path(path);
  if (!fs::exists(hp)) throw IoError("missing volume header '" + hp.string() + "'");
  if (!fs::exists(pp)) throw IoError("missing volume payload '" + pp.string() + "'");
  const Header h = parse_header(hp);
  const bool want_dose = expected_kind == VolumeKind::dose;
  if (h.kind != (want_dose ? "dose" : "bitmask")) {
    throw ValidationError("'" + hp.string() + "' holds a " + h.kind + " volume, expected " +
                          (want_dose ? "dose" : "bitmask"));
  }
  if (h.dtype != (want_dose ? "f32" : "u32")) {
    throw ValidationError("dtype '" + h.dtype + "' does not match kind '" + h.kind + "'");
  }
  const auto bytes = read_bytes(pp);
  const std::size_t n = h.dims.count();
  if (bytes.size() != n * 4) {
    throw ValidationError("payload '" + pp.string() + "' has " + std::to_string(bytes.size()) + " bytes, dims " +
                          to_string(h.dims) + " need " + std::to_string(n * 4));
  }
  if (want_dose) {
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(from_little<float>(&bytes[4 * i]));
    return DoseGrid(h.dims, h.spacing, std::move(values), h.unit_scale);
  }
  std::vector<std::uint32_t> words(n);
  for (std::size_t i = 0; i < n; ++i) words[i] = from_little<std::uint32_t>(&bytes[4 * i]);
  return BitMaskVolume(h.dims, std::move(words), h.roi_names, h.spacing);
}

DoseGrid load_dose(const fs::path& path) { return std::get<DoseGrid>(load_volume(path, VolumeKind::dose)); }

BitMaskVolume load_bitmask(const fs::path& path) {
  return std::get<BitMaskVolume>(load_volume(path, VolumeKind::bitmask));
}

void save_volume(const DoseGrid& g, const fs::path& path) {
  std::vector<unsigned char> bytes(g.size() * 4);
  for (std::size_t i = 0; i < g.size(); ++i) to_little(static_cast<float>(g[i]), &bytes[4 * i]);
  write_bytes_atomic(payload_path(path), bytes.data(), bytes.size());
  write_text_file(header_path(path), header_text(g.dims(), g.spacing(), "f32", "dose", g.unit_scale(), nullptr));
}

void save_volume(const BitMaskVolume& b, const fs::path& path) {
  const auto words = b.words();
  std::vector<unsigned char> bytes(words.size() * 4);
  for (std::size_t i = 0; i < words.size(); ++i) to_little(words[i], &bytes[4 * i]);
  write_bytes_atomic(payload_path(path), bytes.data(), bytes.size());
  write_text_file(header_path(path), header_text(b.dims(), b.spacing(), "u32", "bitmask", 1.0, &b.roi_names()));
}

}  // namespace cdm
