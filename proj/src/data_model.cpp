#include "recurnet/data_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "recurnet/random.hpp"

namespace recurnet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kMissingFile: return "missing file";
    case ErrorKind::kMissingModality: return "missing modality";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kNonBinaryMask: return "non-binary mask";
    case ErrorKind::kUnknownLabel: return "unknown label";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

namespace {

void check_binary(const Mask& m, const std::string& what) {
  for (auto v : m.pixels) {
    if (v > 1) {
      fail(ErrorKind::kNonBinaryMask,
           "non-binary mask: " + what + " contains value " + std::to_string(int(v)));
    }
  }
}

void check_finite(const Slice& s, const std::string& what) {
  for (auto v : s.pixels) {
    if (!std::isfinite(v)) fail(ErrorKind::kValidation, what + " contains a non-finite value");
  }
}

}  // namespace

void validate_case(const Case& c) {
  require(!c.id.empty(), "case id must not be empty");
  require(c.flair_t1.height > 0 && c.flair_t1.width > 0, "case " + c.id + " has an empty image");
  const bool same = c.flair_t1.same_shape(c.t1c_t1) && c.flair_t1.same_shape(c.tumor_mask_t1) &&
                    c.flair_t1.same_shape(c.recurrence_mask_t2);
  if (!same) fail(ErrorKind::kShapeMismatch, "shape mismatch between arrays of case " + c.id);
  check_finite(c.flair_t1, "flair_1 of case " + c.id);
  check_finite(c.t1c_t1, "t1c_1 of case " + c.id);
  check_binary(c.tumor_mask_t1, "seg_1 of case " + c.id);
  check_binary(c.recurrence_mask_t2, "rec_2 of case " + c.id);
}

Slice normalize_intensity(const Slice& s) {
  check_finite(s, "slice");
  const double n = static_cast<double>(s.size());
  require(n > 0, "cannot normalize an empty slice");
  double mean = 0.0;
  for (float v : s.pixels) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : s.pixels) var += (v - mean) * (v - mean);
  var /= n;
  Slice out(s.height, s.width, 0.0f);
  const double sd = std::sqrt(var);
  // Relative threshold: float rounding of a constant image leaves tiny spread.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) return out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.pixels[i] = static_cast<float>((s.pixels[i] - mean) / sd);
  }
  return out;
}

Slice resize_slice(const Slice& s, std::size_t height, std::size_t width) {
  require(s.height >= 2 && s.width >= 2, "resize input must be at least 2x2");
  require(height > 0 && width > 0, "resize target must be positive");
  if (s.height == height && s.width == width) return s;
  Slice out(height, width);
  const double sy = double(s.height) / double(height);
  const double sx = double(s.width) / double(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(s.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - double(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(s.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - double(x0);
      const double top = (1.0 - wx) * s.at(y0, x0) + wx * s.at(y0, x1);
      const double bottom = (1.0 - wx) * s.at(y1, x0) + wx * s.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

Mask resize_mask(const Mask& m, std::size_t height, std::size_t width) {
  require(m.height >= 2 && m.width >= 2, "resize input must be at least 2x2");
  require(height > 0 && width > 0, "resize target must be positive");
  Mask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(m.height - 1, (2 * y + 1) * m.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(m.width - 1, (2 * x + 1) * m.width / (2 * width));
      out.at(y, x) = m.at(sy, sx) ? 1 : 0;
    }
  }
  return out;
}

Mask unify_labels(const LabelMap& labels) {
  Mask out(labels.height, labels.width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (static_cast<TumorLabel>(labels.pixels[i])) {
      case TumorLabel::kNecrosis:
      case TumorLabel::kEnhancing: out.pixels[i] = 1; break;
      case TumorLabel::kBackground:
      case TumorLabel::kEdema:
      case TumorLabel::kNonEnhancing: out.pixels[i] = 0; break;
      default:
        fail(ErrorKind::kUnknownLabel,
             "unknown label value " + std::to_string(int(labels.pixels[i])));
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<std::string>& case_ids, std::uint64_t seed) {
  require(case_ids.size() >= 2, "split_dataset needs at least 2 cases");
  std::vector<std::string> ids = case_ids;
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "duplicate case id");
  Rng rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::swap(ids[i], ids[rng.below(i + 1)]);
  }
  // round-half-up(0.8 N) == floor((4 N + 2) / 5) in integers.
  const std::size_t n_train = (4 * ids.size() + 2) / 5;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.test.assign(ids.begin() + n_train, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::string> validation_carveout(std::vector<std::string> ids, double fraction) {
  std::sort(ids.begin(), ids.end());
  if (fraction <= 0.0 || ids.empty()) return {};
  auto n = static_cast<std::size_t>(std::floor(fraction * double(ids.size()) + 0.5));
  n = std::clamp<std::size_t>(n, 1, ids.size());
  return {ids.end() - static_cast<std::ptrdiff_t>(n), ids.end()};
}

// --- raw container -------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'M', 'R', 'S'};

void put_u32(unsigned char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint32_t get_u32(const unsigned char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[i]) << (8 * i);
  return v;
}

template <typename T>
void write_raw_impl(const std::filesystem::path& path, const Image<T>& img, RawDtype dtype) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  unsigned char header[16] = {};
  std::memcpy(header, kMagic.data(), 4);
  header[4] = kRawVersion;
  header[5] = static_cast<unsigned char>(dtype);
  put_u32(header + 8, static_cast<std::uint32_t>(img.height));
  put_u32(header + 12, static_cast<std::uint32_t>(img.width));
  out.write(reinterpret_cast<const char*>(header), 16);
  if constexpr (std::is_same_v<T, float>) {
    static_assert(sizeof(float) == 4);
    std::vector<unsigned char> bytes(img.size() * 4);
    for (std::size_t i = 0; i < img.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &img.pixels[i], 4);
      put_u32(bytes.data() + 4 * i, bits);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  } else {
    out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.size()));
  }
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

struct RawPayload {
  RawDtype dtype;
  std::size_t height;
  std::size_t width;
  std::vector<unsigned char> bytes;
};

RawPayload read_raw_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kMissingFile, "missing file " + path.string());
  unsigned char header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16)) {
    fail(ErrorKind::kFormat, path.string() + ": truncated header");
  }
  if (std::memcmp(header, kMagic.data(), 4) != 0) fail(ErrorKind::kFormat, path.string() + ": bad magic");
  if (header[4] != kRawVersion) {
    fail(ErrorKind::kFormat, path.string() + ": unsupported version " + std::to_string(header[4]));
  }
  if (header[5] > 1) fail(ErrorKind::kFormat, path.string() + ": unknown dtype code");
  RawPayload p;
  p.dtype = static_cast<RawDtype>(header[5]);
  p.height = get_u32(header + 8);
  p.width = get_u32(header + 12);
  const std::size_t elem = p.dtype == RawDtype::kFloat32 ? 4 : 1;
  p.bytes.resize(p.height * p.width * elem);
  if (!in.read(reinterpret_cast<char*>(p.bytes.data()), std::streamsize(p.bytes.size()))) {
    fail(ErrorKind::kFormat, path.string() + ": truncated pixel data");
  }
  return p;
}

}  // namespace

void write_raw(const std::filesystem::path& path, const Slice& s) {
  write_raw_impl(path, s, RawDtype::kFloat32);
}

void write_raw(const std::filesystem::path& path, const Mask& m) {
  write_raw_impl(path, m, RawDtype::kUint8);
}

Slice read_raw_slice(const std::filesystem::path& path) {
  auto p = read_raw_payload(path);
  if (p.dtype != RawDtype::kFloat32) fail(ErrorKind::kFormat, path.string() + ": expected float32 data");
  Slice s(p.height, p.width);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::uint32_t bits = get_u32(p.bytes.data() + 4 * i);
    std::memcpy(&s.pixels[i], &bits, 4);
  }
  return s;
}

Mask read_raw_mask(const std::filesystem::path& path) {
  auto p = read_raw_payload(path);
  Mask m(p.height, p.width);
  if (p.dtype == RawDtype::kUint8) {
    std::copy(p.bytes.begin(), p.bytes.end(), m.pixels.begin());
    return m;
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::uint32_t bits = get_u32(p.bytes.data() + 4 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    if (v != 0.0f && v != 1.0f) {
      fail(ErrorKind::kNonBinaryMask, "non-binary mask: " + path.string() + " contains value " +
                                          std::to_string(v));
    }
    m.pixels[i] = v == 1.0f ? 1 : 0;
  }
  return m;
}

void save_case(const std::filesystem::path& case_dir, const Case& c) {
  validate_case(c);
  std::filesystem::create_directories(case_dir);
  write_raw(case_dir / kFlairFile, c.flair_t1);
  write_raw(case_dir / kT1cFile, c.t1c_t1);
  write_raw(case_dir / kSegFile, c.tumor_mask_t1);
  write_raw(case_dir / kRecFile, c.recurrence_mask_t2);
}

Case load_case(const std::filesystem::path& case_dir) {
  for (const char* modality : {kFlairFile, kT1cFile}) {
    if (!std::filesystem::exists(case_dir / modality)) {
      fail(ErrorKind::kMissingModality,
           "missing modality " + std::string(modality) + " in " + case_dir.string());
    }
  }
  Case c;
  c.id = case_dir.filename().string();
  if (c.id.empty()) c.id = case_dir.parent_path().filename().string();
  c.flair_t1 = read_raw_slice(case_dir / kFlairFile);
  c.t1c_t1 = read_raw_slice(case_dir / kT1cFile);
  c.tumor_mask_t1 = read_raw_mask(case_dir / kSegFile);
  c.recurrence_mask_t2 = read_raw_mask(case_dir / kRecFile);
  validate_case(c);
  return c;
}

void save_dataset(const std::filesystem::path& root, const std::vector<Case>& cases) {
  std::filesystem::create_directories(root);
  std::vector<std::string> ids;
  for (const auto& c : cases) {
    save_case(root / c.id, c);
    ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "duplicate case id in dataset");
  std::ofstream manifest(root / kManifestFile);
  if (!manifest) fail(ErrorKind::kIo, "cannot write manifest in " + root.string());
  manifest << "case_id\n";
  for (const auto& id : ids) manifest << id << '\n';
}

std::vector<std::string> read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / kManifestFile);
  if (!in) fail(ErrorKind::kMissingFile, "missing " + (root / kManifestFile).string());
  std::vector<std::string> ids;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line == "case_id") continue;
    }
    if (line.empty() || line.front() == '#') continue;
    ids.push_back(line.substr(0, line.find('\t')));
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    fail(ErrorKind::kValidation, "duplicate case id in manifest");
  }
  return ids;
}

std::vector<Case> load_dataset(const std::filesystem::path& root) {
  std::vector<Case> cases;
  for (const auto& id : read_manifest(root)) {
    cases.push_back(load_case(root / id));
    cases.back().id = id;
  }
  return cases;
}

PreparedCase prepare_case(const Case& c, std::size_t size) {
  validate_case(c);
  PreparedCase p;
  p.id = c.id;
  p.flair = normalize_intensity(resize_slice(c.flair_t1, size, size));
  p.t1c = normalize_intensity(resize_slice(c.t1c_t1, size, size));
  p.tumor = resize_mask(c.tumor_mask_t1, size, size);
  p.recurrence = resize_mask(c.recurrence_mask_t2, size, size);
  return p;
}

std::vector<PreparedCase> prepare_cases(const std::vector<Case>& cases, std::size_t size) {
  std::vector<PreparedCase> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(prepare_case(c, size));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

}  // namespace recurnet
