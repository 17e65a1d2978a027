#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace deitfake {

// Planar RGB image, channel values in [0,1]. Layout is [channel][row][col].
struct ImageBuffer {
  static constexpr std::size_t kChannels = 3;

  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), data(kChannels * w * h, fill) {}

  std::size_t plane() const noexcept { return width * height; }
  bool empty() const noexcept { return width == 0 || height == 0; }

  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data[c * plane() + y * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept { return data[c * plane() + y * width + x]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Reads PNG (8/16 bit), JPEG, or binary PPM (P6). Throws IoError.
ImageBuffer load_image(const std::filesystem::path& path);
// 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void save_png(const std::filesystem::path& path, const ImageBuffer& image);
// 16-bit binary PPM.
void save_ppm16(const std::filesystem::path& path, const ImageBuffer& image);

}  // namespace deitfake
