#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recurnet/error.hpp"

namespace recurnet {

// Row-major H x W pixel grid.
template <typename T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, T fill = T(0)) : height(h), width(w), pixels(h * w, fill) {}
  Image(std::size_t h, std::size_t w, std::vector<T> p) : height(h), width(w), pixels(std::move(p)) {
    require(pixels.size() == h * w, "image pixel count does not match its shape");
  }

  std::size_t size() const noexcept { return pixels.size(); }
  T& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  const T& at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool same_shape(const auto& other) const { return height == other.height && width == other.width; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Intensity image: scanner units before normalization, dimensionless after.
using Slice = Image<float>;
// Binary mask, 1 = tumor or recurrence.
using Mask = Image<std::uint8_t>;
// Multi-class annotation before label unification.
using LabelMap = Image<std::uint8_t>;

struct Case {
  std::string id;
  Slice flair_t1;
  Slice t1c_t1;
  Mask tumor_mask_t1;
  Mask recurrence_mask_t2;

  friend bool operator==(const Case&, const Case&) = default;
};

// Throws kShapeMismatch / kNonBinaryMask / kValidation on violated invariants.
void validate_case(const Case& c);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

// Zero mean, unit population standard deviation. Constant input maps to zeros.
Slice normalize_intensity(const Slice& s);

// Bilinear resize (pixel-center aligned, edge clamped).
Slice resize_slice(const Slice& s, std::size_t height, std::size_t width);
// Nearest-neighbor resize; the output stays binary.
Mask resize_mask(const Mask& m, std::size_t height, std::size_t width);

inline constexpr std::size_t kNetworkSize = 128;

// BraTS-style label codes accepted by unify_labels.
enum class TumorLabel : std::uint8_t {
  kBackground = 0,
  kNecrosis = 1,
  kEdema = 2,
  kNonEnhancing = 3,
  kEnhancing = 4,
};

// Enhancing and necrosis -> 1, everything else -> 0.
Mask unify_labels(const LabelMap& labels);

// Train count is round-half-up(0.8 N). Ids are sorted before shuffling so
// the result depends only on the id set and the seed.
DatasetSplit split_dataset(const std::vector<std::string>& case_ids, std::uint64_t seed);
// Last `fraction` of the ids in sorted order; at least one id when fraction > 0.
std::vector<std::string> validation_carveout(std::vector<std::string> ids, double fraction);

// --- On-disk raw container ("MMRS") ---------------------------------------
//
// 16-byte little-endian header:
//   0..3   magic "MMRS"
//   4      version (1)
//   5      dtype (0 = float32, 1 = uint8)
//   6..7   reserved, zero
//   8..11  height (u32)
//   12..15 width (u32)
// followed by row-major pixel data.

inline constexpr std::uint8_t kRawVersion = 1;
enum class RawDtype : std::uint8_t { kFloat32 = 0, kUint8 = 1 };

void write_raw(const std::filesystem::path& path, const Slice& s);
void write_raw(const std::filesystem::path& path, const Mask& m);
Slice read_raw_slice(const std::filesystem::path& path);
Mask read_raw_mask(const std::filesystem::path& path);

inline constexpr const char* kFlairFile = "flair_1";
inline constexpr const char* kT1cFile = "t1c_1";
inline constexpr const char* kSegFile = "seg_1";
inline constexpr const char* kRecFile = "rec_2";
inline constexpr const char* kManifestFile = "manifest.tsv";

void save_case(const std::filesystem::path& case_dir, const Case& c);
// Errors: kMissingModality (flair_1 / t1c_1 absent), kMissingFile (mask
// absent), kShapeMismatch, kNonBinaryMask, kFormat.
Case load_case(const std::filesystem::path& case_dir);

void save_dataset(const std::filesystem::path& root, const std::vector<Case>& cases);
std::vector<std::string> read_manifest(const std::filesystem::path& root);
// Cases are returned sorted by id.
std::vector<Case> load_dataset(const std::filesystem::path& root);

// Network-ready case: resized to `size` x `size`, then intensity normalized.
struct PreparedCase {
  std::string id;
  Slice flair;
  Slice t1c;
  Mask tumor;
  Mask recurrence;
};

PreparedCase prepare_case(const Case& c, std::size_t size = kNetworkSize);
std::vector<PreparedCase> prepare_cases(const std::vector<Case>& cases, std::size_t size = kNetworkSize);

}  // namespace recurnet
