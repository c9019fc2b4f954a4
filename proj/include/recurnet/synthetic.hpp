#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recurnet/data_model.hpp"

namespace recurnet {

struct QuadraticRelation {
  double a = 0.5;
  double b = 0.3;
  double c = 0.1;

  double operator()(double flair) const { return a * flair * flair + b * flair + c; }
};

struct SynthConfig {
  std::size_t image_size = 128;
  double tumor_radius_min = 8.0;
  double tumor_radius_max = 20.0;
  double recurrence_offset_min = 4.0;
  double recurrence_offset_max = 12.0;
  double noise_std = 0.05;
  QuadraticRelation relation;
  std::uint64_t seed = 0;

  void validate() const;
};

// One case per (seed, index). The tumor is a filled rotated ellipse whose
// FLAIR intensity ramps along its major axis; T1c inside the tumor follows
// `relation` applied to the noise-free FLAIR value. The recurrence region is a
// smaller ellipse centred beyond the brighter end of the major axis, at a
// distance drawn from the offset range measured from the tumor boundary.
Case generate_case(const SynthConfig& config, std::size_t index);

// Ids "synth-0000", "synth-0001", ...
std::vector<Case> generate_dataset(const SynthConfig& config, std::size_t n);

std::string synth_case_id(std::size_t index);

}  // namespace recurnet
