#include "recurnet/mmff.hpp"

#include <cmath>

namespace recurnet {

std::vector<LeafSpec> mmff_leaf_specs(const std::string& prefix, std::size_t channels) {
  std::vector<LeafSpec> specs;
  for (std::size_t k : kSpatialAttentionKernels) {
    const std::string base = prefix + ".spatial.k" + std::to_string(k);
    const double fan_in = double(channels * k * k);
    specs.push_back({base + ".kernel", Shape{1, channels, k, k}, 1.0 / std::sqrt(fan_in)});
    specs.push_back({base + ".bias", Shape{1}});
  }
  return specs;
}

template <typename T>
Var multiscale_spatial_attention(ParamBinder<T>& params, const std::string& prefix, Var f,
                                 std::vector<Var>* attention_maps) {
  auto& g = params.graph();
  Var sum{};
  bool first = true;
  for (std::size_t k : kSpatialAttentionKernels) {
    const std::string base = prefix + ".spatial.k" + std::to_string(k);
    Var logits = g.conv2d(f, params(base + ".kernel"), params(base + ".bias"), ConvGeometry{k, 1, 1});
    Var attention = g.sigmoid(logits);
    if (attention_maps) attention_maps->push_back(attention);
    Var branch = g.mul_spatial(f, attention);
    sum = first ? branch : g.add(sum, branch);
    first = false;
  }
  return g.scale(sum, 1.0 / double(kSpatialAttentionKernels.size()));
}

template <typename T>
Var multichannel_attention(Graph<T>& g, Var f, Var* channel_weights) {
  Var weights = g.sigmoid(g.add(g.global_avg_pool(f), g.global_max_pool(f)));
  if (channel_weights) *channel_weights = weights;
  return g.mul_channel(f, weights);
}

template <typename T>
Var mmff_fuse(ParamBinder<T>& params, const std::string& prefix, Var f) {
  auto& g = params.graph();
  Var spatial = multiscale_spatial_attention(params, prefix, f);
  Var channel = multichannel_attention(g, f);
  return g.add(spatial, channel);
}

template Var multiscale_spatial_attention(ParamBinder<float>&, const std::string&, Var, std::vector<Var>*);
template Var multiscale_spatial_attention(ParamBinder<double>&, const std::string&, Var, std::vector<Var>*);
template Var multichannel_attention(Graph<float>&, Var, Var*);
template Var multichannel_attention(Graph<double>&, Var, Var*);
template Var mmff_fuse(ParamBinder<float>&, const std::string&, Var);
template Var mmff_fuse(ParamBinder<double>&, const std::string&, Var);

}  // namespace recurnet
