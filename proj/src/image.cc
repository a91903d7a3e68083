#include "diffcap/image.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "binary_io.h"

namespace diffcap {

Image Image::filled(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b) {
  Image img{width, height, std::vector<std::uint8_t>(width * height * 3)};
  for (std::size_t i = 0; i < width * height; ++i) {
    img.rgb[3 * i] = r;
    img.rgb[3 * i + 1] = g;
    img.rgb[3 * i + 2] = b;
  }
  return img;
}

Image read_ppm(const std::string& path) {
  const std::string bytes = io::read_file(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> void {
    throw io::FormatError(path + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos, value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > 1u << 20) fail("header value too large");
      ++pos;
    }
    if (pos == start) fail("malformed PPM header");
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("not a binary PPM (P6)");
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (w == 0 || h == 0) fail("zero image extent");
  if (maxval != 255) fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail("malformed PPM header");
  }
  ++pos;
  if (bytes.size() - pos < w * h * 3) fail("truncated pixel data");
  Image img{w, h, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + w * h * 3)};
  return img;
}

void write_ppm(const std::string& path, const Image& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  io::write_file(path, out);
}

Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width,
           std::size_t height) {
  if (width == 0 || height == 0 || x0 + width > image.width || y0 + height > image.height) {
    throw std::invalid_argument("crop window outside image");
  }
  Image out{width, height, std::vector<std::uint8_t>(width * height * 3)};
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(image.pixel(x0, y0 + y), width * 3, out.pixel(0, y));
  }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (width == image.width && height == image.height) return image;
  Image out{width, height, std::vector<std::uint8_t>(width * height * 3)};
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.pixel(x0, y0)[c] * (1 - wx) + image.pixel(x1, y0)[c] * wx;
        const double bottom = image.pixel(x0, y1)[c] * (1 - wx) + image.pixel(x1, y1)[c] * wx;
        out.pixel(x, y)[c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      std::copy_n(image.pixel(image.width - 1 - x, y), 3, out.pixel(x, y));
    }
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  const std::size_t hw = image.width * image.height;
  std::vector<T> v(3 * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      v[c * hw + i] = static_cast<T>(image.rgb[3 * i + c]) * static_cast<T>(2.0 / 255.0) - T(1);
    }
  }
  return Tensor<T>::from({3, image.height, image.width}, std::move(v));
}

template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);

}  // namespace diffcap
