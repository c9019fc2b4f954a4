#include "recurnet/overlay.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include "recurnet/metrics.hpp"

namespace recurnet {

namespace {

// 3x5 glyphs, one row per entry, high bit = left column.
const std::map<char, std::array<std::uint8_t, 5>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 5>> g = {
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
      {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
      {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'S', {7, 4, 7, 1, 7}},
      {'P', {7, 5, 7, 4, 4}}, {'-', {0, 0, 7, 0, 0}}, {' ', {0, 0, 0, 0, 0}}, {'n', {0, 0, 6, 5, 5}},
      {'/', {1, 1, 2, 4, 4}}, {'a', {0, 6, 1, 7, 7}}};
  return g;
}

void draw_text(RgbImage& img, std::size_t y0, std::size_t x0, const std::string& text, Color color) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto it = glyphs().find(text[i]);
    if (it == glyphs().end()) continue;
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t y = y0 + r, x = x0 + i * 4 + c;
        if (y < img.height && x < img.width && ((it->second[r] >> (2 - c)) & 1)) img.put(y, x, color);
      }
    }
  }
}

void fill_box(RgbImage& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w, Color color) {
  for (std::size_t y = y0; y < std::min(img.height, y0 + h); ++y)
    for (std::size_t x = x0; x < std::min(img.width, x0 + w); ++x) img.put(y, x, color);
}

bool any(const Mask& m) {
  return std::any_of(m.pixels.begin(), m.pixels.end(), [](std::uint8_t v) { return v != 0; });
}

void draw_contour(RgbImage& img, const Mask& m, Color color) {
  if (!any(m)) return;
  for (const auto& p : surface_points(m)) img.put(std::size_t(p.row), std::size_t(p.col), color);
}

std::string dsc_label(char tag, const Mask& pred, const Mask& truth) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c %.1f", tag, 100.0 * dsc(confusion_counts(pred, truth)));
  return buf;
}

}  // namespace

RgbImage compose_overlay(const Slice& flair, const Mask& tumor_truth, const Mask& recurrence_truth,
                         const Slice& seg_map, const std::optional<Slice>& pred_map, const OverlayOptions& options) {
  const bool shapes_ok = flair.same_shape(tumor_truth) && flair.same_shape(recurrence_truth) &&
                         flair.same_shape(seg_map) && (!pred_map || flair.same_shape(*pred_map));
  if (!shapes_ok) fail(ErrorKind::kShapeMismatch, "overlay inputs must share one shape");
  require(flair.size() > 0, "overlay needs a non-empty image");

  RgbImage img(flair.height, flair.width);
  const auto [lo, hi] = std::minmax_element(flair.pixels.begin(), flair.pixels.end());
  const double span = double(*hi) - double(*lo);
  for (std::size_t y = 0; y < flair.height; ++y) {
    for (std::size_t x = 0; x < flair.width; ++x) {
      const double t = span > 0 ? (double(flair.at(y, x)) - *lo) / span : 0.0;
      const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
      img.put(y, x, {v, v, v});
    }
  }

  const Mask seg = binarize(seg_map, options.threshold);
  std::optional<Mask> pred;
  if (pred_map) pred = binarize(*pred_map, options.threshold);

  draw_contour(img, tumor_truth, kTumorTruthColor);
  if (pred) draw_contour(img, recurrence_truth, kRecurrenceTruthColor);
  if (pred) draw_contour(img, *pred, kPredictionColor);
  draw_contour(img, seg, kSegmentationColor);

  if (options.labels) {
    std::vector<std::pair<std::string, Color>> lines = {{dsc_label('S', seg, tumor_truth), kSegmentationColor}};
    if (pred) lines.push_back({dsc_label('P', *pred, recurrence_truth), kPredictionColor});
    std::size_t width = 0;
    for (const auto& l : lines) width = std::max(width, l.first.size() * 4 + 1);
    fill_box(img, 0, 0, lines.size() * 6 + 1, width + 1, {0, 0, 0});
    for (std::size_t i = 0; i < lines.size(); ++i) draw_text(img, 1 + i * 6, 1, lines[i].first, lines[i].second);
  }
  return img;
}

// --- PNG --------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw Error(ErrorKind::kIo, std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  require(image.height > 0 && image.width > 0, "write_png: empty image");
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorKind::kIo, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "libpng initialisation failed");
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(&image.rgb[y * image.width * 3]));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorKind::kMissingFile, "cannot read " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kIo, "libpng initialisation failed");
  }
  RgbImage img;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    img = RgbImage(png_get_image_height(png, info), png_get_image_width(png, info));
    if (png_get_rowbytes(png, info) != img.width * 3) fail(ErrorKind::kFormat, "unexpected PNG row layout");
    for (std::size_t y = 0; y < img.height; ++y) png_read_row(png, &img.rgb[y * img.width * 3], nullptr);
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace recurnet
