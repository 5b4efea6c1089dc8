// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvksr/tensor.hpp"

namespace mvksr {

/// H x W x C raster of doubles, nominally in [0,1], channel-interleaved.
/// Single-channel images double as grayscale maps (depth, transmission, ...).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Decodes an 8-bit (or 16-bit, reduced) PNG into [0,1] values v/255.
/// Gray, gray+alpha, RGB and RGBA inputs are accepted; alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG with round(clamp(v,0,1)*255). 1 channel -> gray,
/// 3 -> RGB. The file appears atomically (temp file + rename).
void write_png(const Image& img, const std::filesystem::path& path);

/// Quantizes every value to the 8-bit grid v -> round(v*255)/255.
Image quantize8(const Image& img);

/// Stacks same-shaped images into an NCHW tensor.
Tensor images_to_tensor(const std::vector<Image>& images, bool requires_grad = false);
Tensor image_to_tensor(const Image& img, bool requires_grad = false);
/// Extracts batch item `index` of an NCHW tensor as an image.
Image tensor_to_image(const Tensor& t, int index = 0);

/// Reflect-pads (mirror without edge repeat) bottom/right so both dims are
/// multiples of `multiple`.
Image pad_reflect_to_multiple(const Image& img, int multiple);
Image crop(const Image& img, int y0, int x0, int height, int width);
Image extract_channel(const Image& img, int channel);

}  // namespace mvksr
