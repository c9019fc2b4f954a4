#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "recurnet/data_model.hpp"
#include "recurnet/synthetic.hpp"
#include "support.hpp"

using namespace recurnet;

TEST_SUITE("data_model") {

TEST_CASE("normalize_intensity: constant input maps to zeros") {
  Slice s(4, 4, 5.0f);
  auto n = normalize_intensity(s);
  for (float v : n.pixels) CHECK(v == 0.0f);
}

TEST_CASE("normalize_intensity: two-level input becomes -1 and +1") {
  Slice s(2, 2, std::vector<float>{0, 2, 0, 2});
  auto n = normalize_intensity(s);
  CHECK(n.pixels == std::vector<float>{-1, 1, -1, 1});
}

TEST_CASE("normalize_intensity: random slice has zero mean and unit deviation") {
  Rng rng(7);
  Slice s(128, 128);
  for (auto& v : s.pixels) v = float(3.0 + 10.0 * rng.uniform());
  auto n = normalize_intensity(s);
  // Two-pass moments, accumulated in long double.
  long double mean = 0;
  for (float v : n.pixels) mean += v;
  mean /= n.size();
  long double var = 0;
  for (float v : n.pixels) var += (v - mean) * (v - mean);
  var /= n.size();
  CHECK(std::abs(double(mean)) < 1e-5);
  CHECK(std::abs(std::sqrt(double(var)) - 1.0) < 1e-4);
}

TEST_CASE("normalize_intensity: non-finite input is rejected") {
  Slice s(2, 2, 1.0f);
  s.pixels[1] = std::nanf("");
  CHECK_THROWS_AS(normalize_intensity(s), Error);
}

TEST_CASE("resize: same size is the identity") {
  Rng rng(1);
  Slice s(128, 128);
  for (auto& v : s.pixels) v = float(rng.normal());
  CHECK(resize_slice(s, 128, 128) == s);
  Mask m = test::random_mask(128, 128, rng);
  CHECK(resize_mask(m, 128, 128) == m);
}

TEST_CASE("resize: constant mask stays constant") {
  Mask m(256, 256, 1);
  auto r = resize_mask(m, 128, 128);
  CHECK(r.height == 128);
  CHECK(std::all_of(r.pixels.begin(), r.pixels.end(), [](auto v) { return v == 1; }));
}

TEST_CASE("resize: 240x240 checkerboard matches a direct bilinear oracle") {
  const std::size_t n = 240, m = 128;
  Slice s(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) s.at(y, x) = float(((y / 3) + (x / 5)) % 2) + 0.25f * float(x % 7);
  const auto r = resize_slice(s, m, m);
  const double scale = double(n) / double(m);
  double worst = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double sy = std::clamp((i + 0.5) * scale - 0.5, 0.0, double(n - 1));
      const double sx = std::clamp((j + 0.5) * scale - 0.5, 0.0, double(n - 1));
      const auto y0 = std::size_t(sy), x0 = std::size_t(sx);
      const auto y1 = std::min(y0 + 1, n - 1), x1 = std::min(x0 + 1, n - 1);
      const double fy = sy - y0, fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * s.at(y0, x0) + fx * s.at(y0, x1)) +
                       fy * ((1 - fx) * s.at(y1, x0) + fx * s.at(y1, x1));
      worst = std::max(worst, std::abs(v - r.at(i, j)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("unify_labels") {
  SUBCASE("all background") {
    LabelMap l(8, 8, 0);
    auto m = unify_labels(l);
    CHECK(std::all_of(m.pixels.begin(), m.pixels.end(), [](auto v) { return v == 0; }));
  }
  SUBCASE("enhancing and necrosis both map to 1") {
    LabelMap l(8, 8, 0);
    l.at(3, 4) = 4;
    l.at(5, 6) = 1;
    auto m = unify_labels(l);
    CHECK(m.at(3, 4) == 1);
    CHECK(m.at(5, 6) == 1);
    CHECK(std::accumulate(m.pixels.begin(), m.pixels.end(), 0) == 2);
  }
  SUBCASE("hand-enumerated four-class toy map") {
    LabelMap l(3, 3, std::vector<std::uint8_t>{0, 1, 2, 3, 4, 0, 2, 4, 1});
    CHECK(unify_labels(l).pixels == std::vector<std::uint8_t>{0, 1, 0, 0, 1, 0, 0, 1, 1});
  }
  SUBCASE("unknown label is named in the error") {
    LabelMap l(2, 2, 0);
    l.at(1, 1) = 7;
    try {
      unify_labels(l);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUnknownLabel);
      CHECK(std::string(e.what()).find('7') != std::string::npos);
    }
  }
}

TEST_CASE("split_dataset") {
  auto ids = [](std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(synth_case_id(i));
    return v;
  };
  SUBCASE("10 cases give 8/2 for any seed") {
    for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
      auto s = split_dataset(ids(10), seed);
      CHECK(s.train.size() == 8);
      CHECK(s.test.size() == 2);
    }
  }
  SUBCASE("67 cases give 54/13") {
    auto s = split_dataset(ids(67), 3);
    CHECK(s.train.size() == 54);
    CHECK(s.test.size() == 13);
  }
  SUBCASE("deterministic, disjoint, exhaustive, independent of input order") {
    auto v = ids(20);
    auto a = split_dataset(v, 5);
    std::reverse(v.begin(), v.end());
    auto b = split_dataset(v, 5);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    std::set<std::string> all(a.train.begin(), a.train.end());
    for (const auto& t : a.test) CHECK(all.insert(t).second);
    CHECK(all.size() == 20);
    CHECK(split_dataset(ids(20), 6).test != a.test);
  }
  SUBCASE("fewer than two cases is an error") { CHECK_THROWS_AS(split_dataset(ids(1), 0), Error); }
}

TEST_CASE("validation_carveout takes the last ids in sorted order") {
  std::vector<std::string> ids = {"d", "a", "c", "b", "e", "f", "g", "h", "i", "j"};
  CHECK(validation_carveout(ids, 0.1) == std::vector<std::string>{"j"});
  CHECK(validation_carveout(ids, 0.2) == std::vector<std::string>{"i", "j"});
  CHECK(validation_carveout({"a", "b", "c"}, 0.1) == std::vector<std::string>{"c"});
  CHECK(validation_carveout(ids, 0.0).empty());
}

TEST_CASE("raw container round trip and header layout") {
  test::TempDir dir("raw");
  Rng rng(2);
  Slice s(5, 7);
  for (auto& v : s.pixels) v = float(rng.normal());
  write_raw(dir.path() / "s", s);
  CHECK(read_raw_slice(dir.path() / "s") == s);
  Mask m = test::random_mask(6, 3, rng);
  write_raw(dir.path() / "m", m);
  CHECK(read_raw_mask(dir.path() / "m") == m);

  std::ifstream in(dir.path() / "s", std::ios::binary);
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  CHECK(std::string(reinterpret_cast<char*>(header), 4) == "MMRS");
  CHECK(header[4] == 1);
  CHECK(header[5] == 0);
  CHECK(header[8] == 5);
  CHECK(header[12] == 7);
  CHECK(std::filesystem::file_size(dir.path() / "s") == 16 + 5 * 7 * 4);
}

TEST_CASE("raw container rejects bad files") {
  test::TempDir dir("rawbad");
  {
    std::ofstream out(dir.path() / "junk", std::ios::binary);
    out << "NOPE and some bytes";
  }
  CHECK_THROWS_AS(read_raw_slice(dir.path() / "junk"), Error);
  CHECK_THROWS_AS(read_raw_slice(dir.path() / "absent"), Error);
  Slice s(2, 2, std::vector<float>{0, 1, 2, 1});
  write_raw(dir.path() / "float_mask", s);
  try {
    read_raw_mask(dir.path() / "float_mask");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonBinaryMask);
  }
}

TEST_CASE("case and dataset round trip") {
  test::TempDir dir("dataset");
  SynthConfig cfg;
  cfg.seed = 4;
  const auto cases = generate_dataset(cfg, 3);
  save_dataset(dir.path(), cases);
  CHECK(read_manifest(dir.path()) == std::vector<std::string>{"synth-0000", "synth-0001", "synth-0002"});
  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 3);
  CHECK(loaded == cases);
  CHECK(loaded[0].flair_t1.height == 128);
}

TEST_CASE("load_case errors") {
  test::TempDir dir("caseerr");
  SynthConfig cfg;
  const auto c = generate_case(cfg, 0);
  const auto case_dir = dir.path() / c.id;

  auto expect_kind = [&](ErrorKind kind, const std::string& fragment) {
    try {
      load_case(case_dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == kind);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };

  SUBCASE("missing modality") {
    save_case(case_dir, c);
    std::filesystem::remove(case_dir / kT1cFile);
    expect_kind(ErrorKind::kMissingModality, "missing modality");
  }
  SUBCASE("missing mask") {
    save_case(case_dir, c);
    std::filesystem::remove(case_dir / kRecFile);
    expect_kind(ErrorKind::kMissingFile, kRecFile);
  }
  SUBCASE("mask with value 2") {
    Case bad = c;
    bad.tumor_mask_t1.pixels[10] = 2;
    CHECK_THROWS_AS(validate_case(bad), Error);
    std::filesystem::create_directories(case_dir);
    write_raw(case_dir / kFlairFile, c.flair_t1);
    write_raw(case_dir / kT1cFile, c.t1c_t1);
    write_raw(case_dir / kSegFile, bad.tumor_mask_t1);
    write_raw(case_dir / kRecFile, c.recurrence_mask_t2);
    expect_kind(ErrorKind::kNonBinaryMask, "non-binary mask");
  }
  SUBCASE("shape mismatch between modalities") {
    std::filesystem::create_directories(case_dir);
    write_raw(case_dir / kFlairFile, c.flair_t1);
    write_raw(case_dir / kT1cFile, Slice(64, 64));
    write_raw(case_dir / kSegFile, c.tumor_mask_t1);
    write_raw(case_dir / kRecFile, c.recurrence_mask_t2);
    expect_kind(ErrorKind::kShapeMismatch, "");
  }
}

TEST_CASE("prepare_case resizes then normalizes") {
  SynthConfig cfg;
  cfg.image_size = 96;
  cfg.tumor_radius_min = 6;
  cfg.tumor_radius_max = 14;
  const auto c = generate_case(cfg, 1);
  const auto p = prepare_case(c, 64);
  CHECK(p.flair.height == 64);
  CHECK(p.tumor.width == 64);
  double mean = 0;
  for (float v : p.t1c.pixels) mean += v;
  CHECK(std::abs(mean / p.t1c.size()) < 1e-5);
  CHECK(p.flair == normalize_intensity(resize_slice(c.flair_t1, 64, 64)));
}

}  // TEST_SUITE
