#pragma once

#include <array>
#include <string>
#include <vector>

#include "recurnet/binder.hpp"

namespace recurnet {

// Kernel sizes of the three spatial-attention convolutions.
inline constexpr std::array<std::size_t, 3> kSpatialAttentionKernels = {1, 3, 5};

struct LeafSpec {
  std::string name;
  Shape shape;
  // Standard deviation of the initial normal draw; 0 means constant `fill`.
  double init_std = 0.0;
  float fill = 0.0f;
};

// Leaves of one MMFF instance over `channels` input channels:
// <prefix>.spatial.k{1,3,5}.kernel (1, C, k, k) and .bias (1).
// The channel-attention branch has no parameters.
std::vector<LeafSpec> mmff_leaf_specs(const std::string& prefix, std::size_t channels);

// (1/3) sum_k sigmoid(conv_k(F)) * F
template <typename T>
Var multiscale_spatial_attention(ParamBinder<T>& params, const std::string& prefix, Var f,
                                 std::vector<Var>* attention_maps = nullptr);

// sigmoid(GAP(F) + GMP(F)) * F
template <typename T>
Var multichannel_attention(Graph<T>& g, Var f, Var* channel_weights = nullptr);

// Spatial branch + channel branch; shape preserving.
template <typename T>
Var mmff_fuse(ParamBinder<T>& params, const std::string& prefix, Var f);

}  // namespace recurnet
