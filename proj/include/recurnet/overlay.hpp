#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recurnet/data_model.hpp"

namespace recurnet {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
  std::array<std::uint8_t, 3> at(std::size_t y, std::size_t x) const {
    const auto* p = &rgb[(y * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void put(std::size_t y, std::size_t x, std::array<std::uint8_t, 3> c) {
    auto* p = &rgb[(y * width + x) * 3];
    p[0] = c[0], p[1] = c[1], p[2] = c[2];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kTumorTruthColor = {255, 220, 0};
inline constexpr Color kRecurrenceTruthColor = {0, 200, 0};
inline constexpr Color kPredictionColor = {0, 140, 255};
inline constexpr Color kSegmentationColor = {255, 0, 0};

struct OverlayOptions {
  bool labels = true;  // DSC text in the top-left corner
  double threshold = 0.5;
};

// FLAIR in gray; contours of ground truth first, then the prediction, then
// the segmentation on top. Contours are surface_points of the binarized maps.
// Empty maps draw nothing.
RgbImage compose_overlay(const Slice& flair, const Mask& tumor_truth, const Mask& recurrence_truth,
                         const Slice& seg_map, const std::optional<Slice>& pred_map,
                         const OverlayOptions& options = {});

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

}  // namespace recurnet
