#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0;
  std::size_t j = 0;
  auto is_digit = [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  };
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i;
      std::size_t je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      std::size_t is = i;
      std::size_t js = j;
      while (is + 1 < ie && a[is] == '0') ++is;
      while (js + 1 < je && b[js] == '0') ++js;
      const std::string_view da(a.data() + is, ie - is);
      const std::string_view db(b.data() + js, je - js);
      if (da.size() != db.size()) return da.size() < db.size();
      if (da != db) return da < db;
      i = ie;
      j = je;
      continue;
    }
    if (a[i] != b[j]) return a[i] < b[j];
    ++i;
    ++j;
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

Frame read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(
        fmt::format("cannot decode '{}': {}", path.string(), image.message));
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(
        fmt::format("cannot decode '{}': {}", path.string(), image.message));
  }
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  Frame frame(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        frame.at(c, y, x) = buffer[(y * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return frame;
}

void write_png(const Frame& rgb, const std::filesystem::path& path) {
  if (rgb.channels() != 3) {
    throw ShapeError("write_png expects a 3-channel frame");
  }
  const std::size_t h = rgb.height();
  const std::size_t w = rgb.width();
  std::vector<png_byte> buffer(h * w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        buffer[(y * w + x) * 3 + c] = quantize_u8(rgb.at(c, y, x) * 255.0);
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    throw IoError(
        fmt::format("cannot write '{}': {}", path.string(), image.message));
  }
}

VideoClip load_frame_dir(const std::filesystem::path& dir,
                         const std::string& pattern) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw NotFoundError(fmt::format("'{}' is not a directory", dir.string()));
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) names.push_back(name);
  }
  if (names.empty()) {
    throw NotFoundError(fmt::format("no files in '{}' match '{}'",
                                    dir.string(), pattern));
  }
  std::sort(names.begin(), names.end(), natural_less);

  VideoClip clip;
  clip.source_id = dir.filename().string();
  for (const std::string& name : names) {
    Frame frame = read_png(dir / name);
    if (!clip.frames.empty() && !frame.same_shape(clip.frames.front())) {
      throw ShapeError(fmt::format(
          "frame '{}' has shape {} but '{}' has shape {}", name,
          frame.shape_string(), names.front(),
          clip.frames.front().shape_string()));
    }
    clip.frames.push_back(std::move(frame));
  }
  validate_clip(clip);
  return clip;
}

}  // namespace ic2vqa
