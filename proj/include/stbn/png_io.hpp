#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stbn {

/// 8-bit interleaved image (1 or 3 channels).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG, expanding palettes, dropping alpha and reducing 16-bit samples to 8 bits.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace stbn
