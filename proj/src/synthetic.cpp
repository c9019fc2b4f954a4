#include "recurnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "recurnet/random.hpp"

namespace recurnet {

void SynthConfig::validate() const {
  require(image_size >= 8, "synth image_size must be at least 8");
  const double half = double(image_size) / 2.0;
  require(tumor_radius_min > 0 && tumor_radius_max >= tumor_radius_min,
          "synth tumor radius range must be positive and ordered");
  require(tumor_radius_max < half, "synth tumor radii must be below image_size/2");
  require(recurrence_offset_min >= 0 && recurrence_offset_max >= recurrence_offset_min,
          "synth recurrence offset range must be nonnegative and ordered");
  require(noise_std >= 0, "synth noise_std must be nonnegative");
}

std::string synth_case_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%04zu", index);
  return buf;
}

namespace {

struct Ellipse {
  double cy, cx;
  double major, minor;  // semi-axes
  double uy, ux;        // unit major-axis direction

  // Coordinates in the ellipse frame, normalized so the boundary is at 1.
  double along(double y, double x) const { return ((y - cy) * uy + (x - cx) * ux) / major; }
  double across(double y, double x) const { return (-(y - cy) * ux + (x - cx) * uy) / minor; }
  bool contains(double y, double x) const {
    const double a = along(y, x), b = across(y, x);
    return a * a + b * b <= 1.0;
  }
};

// Axis-aligned bounding half-extents of a rotated ellipse.
double extent_y(const Ellipse& e) { return std::hypot(e.major * e.uy, e.minor * e.ux); }
double extent_x(const Ellipse& e) { return std::hypot(e.major * e.ux, e.minor * e.uy); }

bool fits(const Ellipse& e, double size) {
  const double ey = extent_y(e), ex = extent_x(e);
  return e.cy - ey >= 1.0 && e.cy + ey <= size - 2.0 && e.cx - ex >= 1.0 && e.cx + ex <= size - 2.0;
}

struct Background {
  double base, amp, fy, fx, py, px;

  static Background draw(Rng& rng, double base) {
    return {base, rng.uniform(0.03, 0.08), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
            rng.uniform(0.0, 2 * std::numbers::pi), rng.uniform(0.0, 2 * std::numbers::pi)};
  }
  double operator()(double y, double x, double size) const {
    const double w = 2 * std::numbers::pi / size;
    return base + amp * std::sin(w * fy * y + py) * std::cos(w * fx * x + px);
  }
};

}  // namespace

Case generate_case(const SynthConfig& config, std::size_t index) {
  config.validate();
  Rng rng(mix_seed(config.seed, index));
  const double size = double(config.image_size);

  Ellipse tumor{};
  Ellipse rec{};
  {
    double r1 = rng.uniform(config.tumor_radius_min, config.tumor_radius_max);
    double r2 = rng.uniform(config.tumor_radius_min, config.tumor_radius_max);
    tumor.major = std::max(r1, r2);
    tumor.minor = std::min(r1, r2);
    const double theta = rng.uniform(0.0, 2 * std::numbers::pi);
    tumor.uy = std::sin(theta);
    tumor.ux = std::cos(theta);

    const double offset = rng.uniform(config.recurrence_offset_min, config.recurrence_offset_max);
    rec.uy = tumor.uy;
    rec.ux = tumor.ux;
    rec.major = 0.5 * offset + rng.uniform(0.3, 0.5) * tumor.minor;
    rec.minor = rng.uniform(0.3, 0.5) * tumor.minor;
    const double reach = tumor.major + offset;

    // Rejection-sample a tumor centre that keeps both ellipses inside the frame.
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      tumor.cy = rng.uniform(0.0, size);
      tumor.cx = rng.uniform(0.0, size);
      rec.cy = tumor.cy + reach * tumor.uy;
      rec.cx = tumor.cx + reach * tumor.ux;
      placed = fits(tumor, size) && fits(rec, size);
    }
    if (!placed) {
      // Centre the pair in the frame.
      tumor.cy = size / 2 - reach * tumor.uy / 2;
      tumor.cx = size / 2 - reach * tumor.ux / 2;
      rec.cy = tumor.cy + reach * tumor.uy;
      rec.cx = tumor.cx + reach * tumor.ux;
    }
  }

  const Background flair_bg = Background::draw(rng, rng.uniform(0.15, 0.25));
  const Background t1c_bg = Background::draw(rng, rng.uniform(0.1, 0.2));

  const std::size_t n = config.image_size;
  Case c;
  c.id = synth_case_id(index);
  c.flair_t1 = Slice(n, n);
  c.t1c_t1 = Slice(n, n);
  c.tumor_mask_t1 = Mask(n, n);
  c.recurrence_mask_t2 = Mask(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double py = double(y), px = double(x);
      double flair, t1c;
      if (tumor.contains(py, px)) {
        c.tumor_mask_t1.at(y, x) = 1;
        // Brightest at the end facing the recurrence.
        const double clean =
            static_cast<float>(0.7 + 0.25 * std::clamp(tumor.along(py, px), -1.0, 1.0));
        flair = clean;
        t1c = config.relation(clean);
      } else {
        flair = flair_bg(py, px, size);
        t1c = t1c_bg(py, px, size);
      }
      if (config.noise_std > 0) {
        flair += config.noise_std * rng.normal();
        t1c += config.noise_std * rng.normal();
      }
      c.flair_t1.at(y, x) = static_cast<float>(flair);
      c.t1c_t1.at(y, x) = static_cast<float>(t1c);
      if (rec.contains(py, px)) c.recurrence_mask_t2.at(y, x) = 1;
    }
  }
  return c;
}

std::vector<Case> generate_dataset(const SynthConfig& config, std::size_t n) {
  require(n >= 1, "generate_dataset needs n >= 1");
  config.validate();
  std::vector<Case> cases;
  cases.reserve(n);
  for (std::size_t i = 0; i < n; ++i) cases.push_back(generate_case(config, i));
  return cases;
}

}  // namespace recurnet
