#include "recurnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "recurnet/random.hpp"

namespace recurnet {

void NetworkConfig::validate() const {
  require(levels >= 2, "network.levels must be at least 2");
  require(base_channels >= 1, "network.base_channels must be positive");
  require(!dilation_rates.empty(), "network.dilation_rates must not be empty");
  for (auto r : dilation_rates) require(r >= 1, "dilation rates must be positive");
  require(modality_count == 2, "exactly two modalities (FLAIR, T1c) are supported");
  require(decoder_count == 1 || decoder_count == 2, "network.decoder_count must be 1 or 2");
  const std::size_t factor = std::size_t{1} << (levels - 1);
  require(input_size % factor == 0,
          "network.input_size must be divisible by 2^(levels-1) = " + std::to_string(factor));
  require(input_size / factor >= 2, "deepest level must be at least 2x2");
  require(!(correlation_inject && correlation == CorrelationForm::kOff),
          "correlation.inject requires correlation.form != off");
}

std::string NetworkConfig::canonical() const {
  std::ostringstream os;
  os << "levels=" << levels << ";base=" << base_channels << ";rates=";
  for (std::size_t i = 0; i < dilation_rates.size(); ++i) os << (i ? "," : "") << dilation_rates[i];
  os << ";input=" << input_size << ";modalities=" << modality_count << ";decoders=" << decoder_count
     << ";fusion=" << (fusion ? "on" : "off") << ";correlation=" << to_string(correlation)
     << ";inject=" << (correlation_inject ? "on" : "off");
  return os.str();
}

std::string NetworkConfig::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

std::size_t dilated_group_span(const std::vector<std::size_t>& rates, std::size_t kernel) {
  std::size_t span = 0;
  for (auto r : rates) span = std::max(span, ConvGeometry{kernel, 1, r}.span());
  return span;
}

// --- parameter layout -------------------------------------------------------

namespace {

void add_conv(std::vector<LeafSpec>& specs, const std::string& prefix, std::size_t cout, std::size_t cin,
              std::size_t k, double gain) {
  const double fan_in = double(cin * k * k);
  specs.push_back({prefix + ".kernel", Shape{cout, cin, k, k}, std::sqrt(gain / fan_in)});
  specs.push_back({prefix + ".bias", Shape{cout}});
}

void add_norm(std::vector<LeafSpec>& specs, const std::string& prefix, std::size_t c) {
  specs.push_back({prefix + ".gain", Shape{c}, 0.0, 1.0f});
  specs.push_back({prefix + ".shift", Shape{c}});
}

void add_group(std::vector<LeafSpec>& specs, const NetworkConfig& cfg, const std::string& prefix,
               std::size_t cout, std::size_t cin) {
  for (auto r : cfg.dilation_rates) add_conv(specs, prefix + ".conv_d" + std::to_string(r), cout, cin, 3, 2.0);
  add_norm(specs, prefix + ".norm", cout);
}

void add_fc(std::vector<LeafSpec>& specs, const std::string& prefix, std::size_t out, std::size_t in) {
  specs.push_back({prefix + ".weight", Shape{out, in}, std::sqrt(1.0 / double(in))});
  specs.push_back({prefix + ".bias", Shape{out}});
}

std::string level_name(const std::string& prefix, std::size_t level) {
  return prefix + ".level" + std::to_string(level);
}

void add_encoder(std::vector<LeafSpec>& specs, const NetworkConfig& cfg, const std::string& prefix) {
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string lv = level_name(prefix, l);
    add_group(specs, cfg, lv, cfg.channels(l), l == 0 ? 1 : cfg.channels(l));
    if (l + 1 < cfg.levels) {
      add_conv(specs, lv + ".down", cfg.channels(l + 1), cfg.channels(l), 3, 2.0);
      add_norm(specs, lv + ".down_norm", cfg.channels(l + 1));
    }
  }
}

std::size_t decoder_input_channels(const NetworkConfig& cfg, std::size_t level, bool cross) {
  const std::size_t up = level + 2 == cfg.levels ? 2 * cfg.channels(cfg.deepest()) : cfg.channels(level + 1);
  return up + 2 * cfg.channels(level) + (cross ? cfg.channels(level) : 0);
}

void add_decoder(std::vector<LeafSpec>& specs, const NetworkConfig& cfg, const std::string& prefix, bool cross) {
  for (std::size_t l = cfg.levels - 1; l-- > 0;) {
    const std::string lv = level_name(prefix, l);
    const std::size_t in = decoder_input_channels(cfg, l, cross);
    if (cfg.fusion) {
      auto m = mmff_leaf_specs(lv + ".mmff", in);
      specs.insert(specs.end(), m.begin(), m.end());
    }
    add_group(specs, cfg, lv, cfg.channels(l), in);
  }
  add_conv(specs, prefix + ".head", 1, cfg.channels(0), 1, 1.0);
}

}  // namespace

std::vector<LeafSpec> network_leaf_specs(const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<LeafSpec> specs;
  add_encoder(specs, cfg, kEncoderFlair);
  add_encoder(specs, cfg, kEncoderT1c);
  const std::size_t deep = cfg.channels(cfg.deepest());
  if (cfg.fusion) {
    auto m = mmff_leaf_specs(kFusion, 2 * deep);
    specs.insert(specs.end(), m.begin(), m.end());
  }
  if (cfg.correlation != CorrelationForm::kOff) {
    for (const char* modality : {"flair", "t1c"}) {
      const std::string base = std::string(kCorrelation) + "." + modality;
      add_fc(specs, base + ".fc1", deep, deep);
      add_fc(specs, base + ".fc2", 3 * deep, deep);
    }
  }
  add_decoder(specs, cfg, kDecoderSeg, false);
  if (cfg.decoder_count == 2) add_decoder(specs, cfg, kDecoderPred, true);
  return specs;
}

ParamTree<float> init_params(const NetworkConfig& config, std::uint64_t seed) {
  ParamTree<float> tree;
  for (const auto& spec : network_leaf_specs(config)) {
    Tensor<float> t(spec.shape, spec.fill);
    if (spec.init_std > 0) {
      Rng rng(mix_seed(seed, fnv1a64(spec.name)));
      for (auto& v : t.values()) v = static_cast<float>(spec.init_std * rng.normal());
    }
    tree.set(spec.name, std::move(t));
  }
  return tree;
}

// --- forward ----------------------------------------------------------------

template <typename T>
Var dilated_group(ParamBinder<T>& params, const NetworkConfig& config, const std::string& prefix, Var x) {
  auto& g = params.graph();
  Var sum{};
  bool first = true;
  for (auto r : config.dilation_rates) {
    const std::string conv = prefix + ".conv_d" + std::to_string(r);
    Var y = g.conv2d(x, params(conv + ".kernel"), params(conv + ".bias"), ConvGeometry{3, 1, r});
    sum = first ? y : g.add(sum, y);
    first = false;
  }
  return g.silu(g.instance_norm(sum, params(prefix + ".norm.gain"), params(prefix + ".norm.shift")));
}

template <typename T>
std::vector<Var> encoder_forward(ParamBinder<T>& params, const NetworkConfig& config,
                                 const std::string& prefix, Var input) {
  auto& g = params.graph();
  const auto& in = g.value(input);
  if (in.rank() != 3 || in.channels() != 1 || in.height() != config.input_size ||
      in.width() != config.input_size) {
    fail(ErrorKind::kShapeMismatch, "encoder input " + shape_string(in.shape()) + " does not match (1," +
                                        std::to_string(config.input_size) + "," +
                                        std::to_string(config.input_size) + ")");
  }
  std::vector<Var> outputs;
  Var x = input;
  for (std::size_t l = 0; l < config.levels; ++l) {
    const std::string lv = level_name(prefix, l);
    Var features = dilated_group(params, config, lv, x);
    outputs.push_back(features);
    if (l + 1 < config.levels) {
      Var down = g.conv2d(features, params(lv + ".down.kernel"), params(lv + ".down.bias"), ConvGeometry{3, 2, 1});
      x = g.silu(g.instance_norm(down, params(lv + ".down_norm.gain"), params(lv + ".down_norm.shift")));
    }
  }
  return outputs;
}

template <typename T>
Var decoder_forward(ParamBinder<T>& params, const NetworkConfig& config, const std::string& prefix,
                    Var bottleneck, std::span<const Var> skips, std::span<const Var> cross,
                    std::vector<Var>* level_outputs) {
  auto& g = params.graph();
  if (skips.size() + 1 != config.levels) {
    fail(ErrorKind::kValidation, "decoder expects " + std::to_string(config.levels - 1) + " skip features, got " +
                                     std::to_string(skips.size()));
  }
  if (!cross.empty() && cross.size() != skips.size()) {
    fail(ErrorKind::kValidation, "decoder cross-skip count mismatch");
  }
  std::vector<Var> outs(skips.size());
  Var x = bottleneck;
  for (std::size_t l = config.levels - 1; l-- > 0;) {
    const std::string lv = level_name(prefix, l);
    std::vector<Var> parts = {g.upsample2(x), skips[l]};
    if (!cross.empty()) parts.push_back(cross[l]);
    Var merged = g.concat_channels(parts);
    if (config.fusion) merged = mmff_fuse(params, lv + ".mmff", merged);
    x = dilated_group(params, config, lv, merged);
    outs[l] = x;
  }
  if (level_outputs) *level_outputs = outs;
  Var logits = g.conv2d(x, params(prefix + ".head.kernel"), params(prefix + ".head.bias"), ConvGeometry{1, 1, 1});
  return g.sigmoid(logits);
}

template <typename T>
ForwardResult<T> forward(ParamBinder<T>& params, const NetworkConfig& config, Var flair, Var t1c,
                         TrainMode mode) {
  config.validate();
  auto& g = params.graph();
  const bool full = mode == TrainMode::kFull;
  if (full && !params.params().has_subtree(kDecoderPred)) {
    fail(ErrorKind::kValidation, "full mode needs decoder_pred parameters; got a segmentation-only tree");
  }
  ForwardResult<T> r;
  auto note = [&](const std::string& stage, Var v) { r.trace.emplace_back(stage, g.value(v).shape()); };

  const auto enc_flair = encoder_forward(params, config, kEncoderFlair, flair);
  const auto enc_t1c = encoder_forward(params, config, kEncoderT1c, t1c);
  for (std::size_t l = 0; l < config.levels; ++l) note(level_name(kEncoderFlair, l), enc_flair[l]);
  for (std::size_t l = 0; l < config.levels; ++l) note(level_name(kEncoderT1c, l), enc_t1c[l]);
  r.f_flair = enc_flair.back();
  r.f_t1c = enc_t1c.back();

  const Var deep[] = {r.f_flair, r.f_t1c};
  Var fused = g.concat_channels(deep);
  if (config.fusion) fused = mmff_fuse(params, kFusion, fused);

  if (config.correlation != CorrelationForm::kOff) {
    auto weights_for = [&](const char* modality, Var f) {
      const CorrelationEstimatorNames n(std::string(kCorrelation) + "." + modality);
      return estimate_correlation_weights(g, f, params(n.fc1_weight), params(n.fc1_bias), params(n.fc2_weight),
                                          params(n.fc2_bias));
    };
    r.g_flair = map_correlated_feature(g, r.f_flair, weights_for("flair", r.f_flair), config.correlation);
    r.g_t1c = map_correlated_feature(g, r.f_t1c, weights_for("t1c", r.f_t1c), config.correlation);
    note("correlation.flair", *r.g_flair);
    note("correlation.t1c", *r.g_t1c);
    if (config.correlation_inject) {
      const Var correlated[] = {*r.g_flair, *r.g_t1c};
      fused = g.add(fused, g.concat_channels(correlated));
    }
  }
  r.bottleneck = fused;
  note(kFusion, fused);

  std::vector<Var> skips;
  for (std::size_t l = 0; l + 1 < config.levels; ++l) {
    const Var pair[] = {enc_flair[l], enc_t1c[l]};
    skips.push_back(g.concat_channels(pair));
  }
  std::vector<Var> seg_levels;
  r.seg_map = decoder_forward(params, config, kDecoderSeg, fused, skips, {}, &seg_levels);
  for (std::size_t l = seg_levels.size(); l-- > 0;) note(level_name(kDecoderSeg, l), seg_levels[l]);
  note("seg_map", r.seg_map);
  if (full) {
    std::vector<Var> pred_levels;
    r.pred_map = decoder_forward(params, config, kDecoderPred, fused, skips, seg_levels, &pred_levels);
    for (std::size_t l = pred_levels.size(); l-- > 0;) note(level_name(kDecoderPred, l), pred_levels[l]);
    note("pred_map", *r.pred_map);
  }
  return r;
}

template <typename T>
ObjectiveTerms<T> objective(Graph<T>& g, const ForwardResult<T>& out, const Tensor<T>& seg_target,
                            const Tensor<T>* pred_target, const LossConfig& loss, Divergence divergence,
                            TrainMode mode) {
  ObjectiveTerms<T> terms;
  std::vector<std::pair<Var, double>> parts;
  terms.seg_dice = g.dice_loss(out.seg_map, seg_target, loss.epsilon);
  parts.emplace_back(terms.seg_dice, 1.0);
  if (out.g_flair && out.g_t1c) {
    terms.correlation = correlation_loss(g, out.f_flair, out.f_t1c, *out.g_flair, *out.g_t1c, divergence);
    parts.emplace_back(*terms.correlation, loss.phi);
  }
  if (mode == TrainMode::kFull) {
    require(out.pred_map.has_value() && pred_target != nullptr, "full-mode objective needs a prediction map and target");
    terms.pred_dice = g.dice_loss(*out.pred_map, *pred_target, loss.epsilon);
    parts.emplace_back(*terms.pred_dice, loss.prediction_weight);
  }
  terms.total = g.weighted_sum(parts);
  return terms;
}

template <typename T>
Tensor<T> slice_tensor(const Slice& s) {
  return Tensor<T>(chw(1, s.height, s.width), std::vector<T>(s.pixels.begin(), s.pixels.end()));
}

template <typename T>
Tensor<T> mask_tensor(const Mask& m) {
  return Tensor<T>(chw(1, m.height, m.width), std::vector<T>(m.pixels.begin(), m.pixels.end()));
}

namespace {

Slice to_slice(const Tensor<float>& t) {
  return Slice(t.height(), t.width(), std::vector<float>(t.values().begin(), t.values().end()));
}

}  // namespace

Prediction predict(const ParamTree<float>& params, const NetworkConfig& config, const PreparedCase& c,
                   TrainMode mode) {
  Graph<float> g;
  ParamBinder<float> binder(g, params, [](const std::string&) { return false; });
  Var flair = g.constant(slice_tensor<float>(c.flair));
  Var t1c = g.constant(slice_tensor<float>(c.t1c));
  auto out = forward(binder, config, flair, t1c, mode);
  Prediction p;
  p.seg_map = to_slice(g.value(out.seg_map));
  if (out.pred_map) p.pred_map = to_slice(g.value(*out.pred_map));
  return p;
}

#define RECURNET_INSTANTIATE(T)                                                                          \
  template Var dilated_group(ParamBinder<T>&, const NetworkConfig&, const std::string&, Var);            \
  template std::vector<Var> encoder_forward(ParamBinder<T>&, const NetworkConfig&, const std::string&,   \
                                            Var);                                                        \
  template Var decoder_forward(ParamBinder<T>&, const NetworkConfig&, const std::string&, Var,           \
                               std::span<const Var>, std::span<const Var>, std::vector<Var>*);          \
  template ForwardResult<T> forward(ParamBinder<T>&, const NetworkConfig&, Var, Var, TrainMode);         \
  template ObjectiveTerms<T> objective(Graph<T>&, const ForwardResult<T>&, const Tensor<T>&,             \
                                       const Tensor<T>*, const LossConfig&, Divergence, TrainMode);      \
  template Tensor<T> slice_tensor<T>(const Slice&);                                                      \
  template Tensor<T> mask_tensor<T>(const Mask&);

RECURNET_INSTANTIATE(float)
RECURNET_INSTANTIATE(double)

#undef RECURNET_INSTANTIATE

}  // namespace recurnet
