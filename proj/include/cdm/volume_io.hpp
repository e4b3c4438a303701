#pragma once

#include <filesystem>
#include <variant>

#include "cdm/bitmask.hpp"
#include "cdm/volume.hpp"

namespace cdm {

enum class VolumeKind { dose, bitmask };

using AnyVolume = std::variant<DoseGrid, BitMaskVolume>;

// Container layout: `<base>.json` header + `<base>.raw` little-endian payload in
// z-major order. `path` may name the base, the header or the payload.
AnyVolume load_volume(const std::filesystem::path& path, VolumeKind expected_kind);
DoseGrid load_dose(const std::filesystem::path& path);
BitMaskVolume load_bitmask(const std::filesystem::path& path);

// Writes both files through temporaries renamed into place, so a failed write
// never leaves a partial volume behind. Dose values are stored as f32.
void save_volume(const DoseGrid& g, const std::filesystem::path& path);
void save_volume(const BitMaskVolume& b, const std::filesystem::path& path);

std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

// Writes text through a temporary + rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cdm
