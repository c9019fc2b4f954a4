#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "recurnet/synthetic.hpp"

using namespace recurnet;

namespace {

std::size_t area(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.pixels) n += v != 0;
  return n;
}

}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("planted relation by direct substitution") {
  QuadraticRelation r;
  CHECK(r(0.6) == doctest::Approx(0.46).epsilon(1e-12));
}

TEST_CASE("same seed and index give bit-identical cases") {
  SynthConfig cfg;
  cfg.seed = 42;
  CHECK(generate_case(cfg, 5) == generate_case(cfg, 5));
  CHECK(!(generate_case(cfg, 5) == generate_case(cfg, 6)));
  auto other = cfg;
  other.seed = 43;
  CHECK(!(generate_case(cfg, 5) == generate_case(other, 5)));
}

TEST_CASE("dataset ids and manifest determinism") {
  SynthConfig cfg;
  CHECK(generate_dataset(cfg, 1).size() == 1);
  auto a = generate_dataset(cfg, 32), b = generate_dataset(cfg, 32);
  REQUIRE(a.size() == 32);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
  CHECK(a.front().id == "synth-0000");
  CHECK(a.back().id == "synth-0031");
  CHECK_THROWS_AS(generate_dataset(cfg, 0), Error);
}

TEST_CASE("32 cases: nonempty tumors, recurrence area in [20, 600], anchored near the tumor") {
  SynthConfig cfg;
  cfg.seed = 3;
  for (const auto& c : generate_dataset(cfg, 32)) {
    CAPTURE(c.id);
    CHECK(area(c.tumor_mask_t1) > 0);
    const auto rec = area(c.recurrence_mask_t2);
    CHECK(rec >= 20);
    CHECK(rec <= 600);
    // Some recurrence pixel lies within 5 px of some tumor pixel.
    double best = 1e9;
    const auto n = cfg.image_size;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        if (!c.recurrence_mask_t2.at(y, x)) continue;
        for (std::size_t ty = 0; ty < n; ++ty)
          for (std::size_t tx = 0; tx < n; ++tx)
            if (c.tumor_mask_t1.at(ty, tx)) best = std::min(best, std::hypot(double(y) - ty, double(x) - tx));
        if (best <= 5.0) break;
      }
    CHECK(best <= 5.0);
  }
}

TEST_CASE("noise-free least-squares fit recovers the planted coefficients") {
  SynthConfig cfg;
  cfg.noise_std = 0.0;
  cfg.relation = {0.7, -0.2, 0.35};
  for (std::size_t index : {0u, 1u, 2u}) {
    const auto c = generate_case(cfg, index);
    std::vector<double> f, t;
    for (std::size_t i = 0; i < c.flair_t1.size(); ++i) {
      if (c.tumor_mask_t1.pixels[i]) {
        f.push_back(c.flair_t1.pixels[i]);
        t.push_back(c.t1c_t1.pixels[i]);
      }
    }
    REQUIRE(f.size() > 10);
    Eigen::MatrixXd a(f.size(), 3);
    Eigen::VectorXd b(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      a(i, 0) = f[i] * f[i];
      a(i, 1) = f[i];
      a(i, 2) = 1.0;
      b(i) = t[i];
    }
    const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(b);
    CHECK(std::abs(coef(0) - 0.7) < 1e-6);
    CHECK(std::abs(coef(1) + 0.2) < 1e-6);
    CHECK(std::abs(coef(2) - 0.35) < 1e-6);
  }
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.tumor_radius_max = 64;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.noise_std = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.tumor_radius_min = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

}  // TEST_SUITE
