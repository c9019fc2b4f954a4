#pragma once

#include <optional>
#include <string>
#include <vector>

#include "recurnet/binder.hpp"
#include "recurnet/correlation.hpp"
#include "recurnet/data_model.hpp"
#include "recurnet/losses.hpp"
#include "recurnet/mmff.hpp"

namespace recurnet {

// Architecture settings. Everything that changes the parameter-tree layout
// lives here, so the tree is a function of this struct alone.
struct NetworkConfig {
  std::size_t levels = 4;
  std::size_t base_channels = 16;
  std::vector<std::size_t> dilation_rates = {1, 2, 4};
  std::size_t input_size = 128;
  std::size_t modality_count = 2;
  // 2 = segmentation + prediction decoders; 1 = segmentation only (pretraining).
  std::size_t decoder_count = 2;
  // MMFF at the bottleneck and in every decoder level.
  bool fusion = true;
  CorrelationForm correlation = CorrelationForm::kNonlinear;
  // Adds the correlated features into the fused bottleneck.
  bool correlation_inject = false;

  void validate() const;
  std::size_t channels(std::size_t level) const { return base_channels << level; }
  std::size_t spatial(std::size_t level) const { return input_size >> level; }
  std::size_t deepest() const { return levels - 1; }
  // Canonical one-line description of the layout-relevant fields.
  std::string canonical() const;
  std::string fingerprint() const;
};

inline constexpr const char* kEncoderFlair = "encoder_flair";
inline constexpr const char* kEncoderT1c = "encoder_t1c";
inline constexpr const char* kFusion = "fusion";
inline constexpr const char* kCorrelation = "correlation";
inline constexpr const char* kDecoderSeg = "decoder_seg";
inline constexpr const char* kDecoderPred = "decoder_pred";

// A C x H x W activation with its resolution level (0 = full resolution).
template <typename T>
struct FeatureMap {
  Tensor<T> values;
  std::size_t scale_level = 0;
};

// Every leaf of the tree implied by `config`, in a fixed order.
std::vector<LeafSpec> network_leaf_specs(const NetworkConfig& config);

// Kernels ~ N(0, 2 / fan_in) in convolution blocks, N(0, 1 / fan_in) in
// attention, heads and fully connected layers; biases and shifts 0, gains 1.
// Each leaf's draw depends only on (seed, leaf name).
ParamTree<float> init_params(const NetworkConfig& config, std::uint64_t seed);

// Effective span of the parallel dilated group (largest rate dominates).
std::size_t dilated_group_span(const std::vector<std::size_t>& rates, std::size_t kernel = 3);

// sum_r conv_r(x) -> instance norm -> SiLU, under `prefix`.
template <typename T>
Var dilated_group(ParamBinder<T>& params, const NetworkConfig& config, const std::string& prefix, Var x);

// Outputs per level, shallow to deep; level l is (base * 2^l, size / 2^l, size / 2^l).
template <typename T>
std::vector<Var> encoder_forward(ParamBinder<T>& params, const NetworkConfig& config,
                                 const std::string& prefix, Var input);

// `skips` are the per-level skip features, shallow to deep, excluding the
// bottleneck level (levels - 1 entries). `cross` optionally holds the
// matching segmentation-decoder level outputs. Returns a (1, H, W) map in (0, 1).
template <typename T>
Var decoder_forward(ParamBinder<T>& params, const NetworkConfig& config, const std::string& prefix,
                    Var bottleneck, std::span<const Var> skips, std::span<const Var> cross = {},
                    std::vector<Var>* level_outputs = nullptr);

template <typename T>
struct ForwardResult {
  Var seg_map;
  std::optional<Var> pred_map;
  Var f_flair, f_t1c;
  std::optional<Var> g_flair, g_t1c;
  Var bottleneck;
  // (stage name, shape) in evaluation order.
  std::vector<std::pair<std::string, Shape>> trace;
};

// Inputs are (1, H, W) normalized slices.
template <typename T>
ForwardResult<T> forward(ParamBinder<T>& params, const NetworkConfig& config, Var flair, Var t1c,
                         TrainMode mode);

template <typename T>
struct ObjectiveTerms {
  Var total;
  Var seg_dice;
  std::optional<Var> pred_dice;
  std::optional<Var> correlation;
};

// L_total = L_dice(seg) + phi * L_cor + w * L_dice(pred); terms are omitted
// when the mode or configuration has no such branch.
template <typename T>
ObjectiveTerms<T> objective(Graph<T>& g, const ForwardResult<T>& out, const Tensor<T>& seg_target,
                            const Tensor<T>* pred_target, const LossConfig& loss, Divergence divergence,
                            TrainMode mode);

template <typename T>
Tensor<T> slice_tensor(const Slice& s);
template <typename T>
Tensor<T> mask_tensor(const Mask& m);

// Convenience inference for one prepared case.
struct Prediction {
  Slice seg_map;
  std::optional<Slice> pred_map;
};
Prediction predict(const ParamTree<float>& params, const NetworkConfig& config, const PreparedCase& c,
                   TrainMode mode);

}  // namespace recurnet
