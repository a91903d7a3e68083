#ifndef DIFFCAP_IMAGE_H_
#define DIFFCAP_IMAGE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "diffcap/tensor.h"

namespace diffcap {

// 8-bit RGB, row-major, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  static Image filled(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g,
                      std::uint8_t b);
  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
  bool operator==(const Image&) const = default;
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);

Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width,
           std::size_t height);
// Bilinear with pixel-center alignment; identity when the size is unchanged.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);
Image flip_horizontal(const Image& image);

// [3, H, W] with values 2 * (v / 255) - 1.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

}  // namespace diffcap

#endif  // DIFFCAP_IMAGE_H_
