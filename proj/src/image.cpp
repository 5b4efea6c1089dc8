// SPDX-License-Identifier: Apache-2.0
#include "mvksr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/fs_util.hpp"

namespace mvksr {

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::kIo, "cannot open image '" + path.string() + "'");
  const std::string bytes = read_file(path);
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size()))
    fail(ErrorCode::kFormat, "'" + path.string() + "' is not a readable PNG: " + pi.message);
  // Gray stays gray; everything else (palette, alpha, 16-bit) becomes 8-bit RGB.
  const bool gray = (pi.format & PNG_FORMAT_FLAG_COLOR) == 0;
  pi.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int c = gray ? 1 : 3;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&pi);
    fail(ErrorCode::kFormat, "corrupt PNG '" + path.string() + "': " + pi.message);
  }
  Image img(static_cast<int>(pi.height), static_cast<int>(pi.width), c);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  require(img.channels == 1 || img.channels == 3,
          "write_png: only 1- or 3-channel images are supported");
  require(img.height > 0 && img.width > 0, "write_png: empty image");
  std::vector<unsigned char> pixels(img.data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(img.data[i]);

  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, pixels.data(), 0, nullptr))
    fail(ErrorCode::kIo, "PNG encoding failed: " + std::string(pi.message));
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, pixels.data(), 0, nullptr))
    fail(ErrorCode::kIo, "PNG encoding failed: " + std::string(pi.message));
  out.resize(size);
  write_bytes_atomic(path, out);
}

Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

Tensor images_to_tensor(const std::vector<Image>& images, bool requires_grad) {
  require(!images.empty(), "images_to_tensor: no images");
  const Image& f = images.front();
  const std::size_t plane = f.pixels();
  std::vector<double> data(images.size() * f.channels * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    require(im.same_shape(f), "images_to_tensor: images differ in shape");
    for (int c = 0; c < f.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p)
        data[(n * f.channels + c) * plane + p] = im.data[p * f.channels + c];
  }
  return Tensor({static_cast<int>(images.size()), f.channels, f.height, f.width}, std::move(data),
                requires_grad);
}

Tensor image_to_tensor(const Image& img, bool requires_grad) {
  return images_to_tensor({img}, requires_grad);
}

Image tensor_to_image(const Tensor& t, int index) {
  require(t.rank() == 4, "tensor_to_image: expected NCHW, got " + to_string(t.shape()));
  require(index >= 0 && index < t.dim(0), "tensor_to_image: batch index out of range");
  Image img(t.dim(2), t.dim(3), t.dim(1));
  const std::size_t plane = img.pixels();
  const double* src = t.data().data() + static_cast<std::size_t>(index) * img.channels * plane;
  for (int c = 0; c < img.channels; ++c)
    for (std::size_t p = 0; p < plane; ++p) img.data[p * img.channels + c] = src[c * plane + p];
  return img;
}

Image pad_reflect_to_multiple(const Image& img, int multiple) {
  require(img.height > 0 && img.width > 0, "cannot pad an empty image");
  const int h = (img.height + multiple - 1) / multiple * multiple;
  const int w = (img.width + multiple - 1) / multiple * multiple;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Image out(h, w, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(reflect(y, img.height), reflect(x, img.width), c);
  return out;
}

Image crop(const Image& img, int y0, int x0, int height, int width) {
  require(y0 >= 0 && x0 >= 0 && height > 0 && width > 0 && y0 + height <= img.height &&
              x0 + width <= img.width,
          "crop window outside the image");
  Image out(height, width, img.channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Image extract_channel(const Image& img, int channel) {
  require(channel >= 0 && channel < img.channels, "extract_channel: bad channel");
  Image out(img.height, img.width, 1);
  for (std::size_t p = 0; p < img.pixels(); ++p)
    out.data[p] = img.data[p * img.channels + channel];
  return out;
}

}  // namespace mvksr
