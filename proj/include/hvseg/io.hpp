#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hvseg/raster.hpp"

namespace hvseg::io {

// Float raster file: 16-byte header (magic "HVF1", then width, height and
// channel count as little-endian uint32) followed by channel-planar
// little-endian float32 samples, row-major within each channel.
inline constexpr char kFloatRasterMagic[4] = {'H', 'V', 'F', '1'};
inline constexpr std::size_t kFloatRasterHeaderBytes = 16;

void write_float_raster(const std::filesystem::path& path,
                        const std::vector<Raster<float>>& channels);
std::vector<Raster<float>> read_float_raster(const std::filesystem::path& path);

// .png / .tif(f) (8- or 16-bit, single channel) or .f32 (float raster, exact
// up to 2^24).
LabelMap read_label_map(const std::filesystem::path& path);
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);

// 8-bit image via the system codecs, channels in RGB(A) order.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_image(const std::vector<std::uint8_t>& bytes);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

// FNV-1a, 64-bit, as 16 lowercase hex digits.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace hvseg::io
