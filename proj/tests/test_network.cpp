#include <doctest.h>

#include <map>

#include "recurnet/network.hpp"
#include "support.hpp"

using namespace recurnet;
using test::random_tensor;

namespace {

NetworkConfig tiny(std::size_t size = 8) {
  NetworkConfig n;
  n.levels = 2;
  n.base_channels = 2;
  n.dilation_rates = {1, 2};
  n.input_size = size;
  return n;
}

ParamTree<double> with_leaves(const std::vector<LeafSpec>& specs, std::uint64_t seed) {
  ParamTree<double> t;
  Rng rng(seed);
  for (const auto& s : specs) {
    auto v = random_tensor(s.shape, rng, s.init_std > 0 ? s.init_std : 0.3);
    if (s.init_std == 0.0 && s.fill != 0.0f)
      for (auto& x : v.values()) x += s.fill;
    t.set(s.name, v);
  }
  return t;
}

// Random direction for projecting tensor outputs onto a scalar.
Var project(Graph<double>& g, Var v, std::uint64_t seed = 99) {
  Rng rng(seed);
  return g.dot(v, random_tensor(g.value(v).shape(), rng));
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("leaf count for levels=2, base=4 with every module on") {
  NetworkConfig n;
  n.levels = 2;
  n.base_channels = 4;
  n.input_size = 16;
  // Per encoder: two groups of 3 dilated convs (kernel, bias) + norm (gain, shift)
  // = 2 * 8, plus down conv and down norm = 4  -> 20, twice -> 40.
  // Bottleneck fusion: 3 spatial convs -> 6. Correlation: 2 * (fc1, fc2) * 2 -> 8.
  // Each decoder: one MMFF (6) + one group (8) + head (2) -> 16, twice -> 32.
  CHECK(network_leaf_specs(n).size() == 86);
  CHECK(init_params(n, 0).leaf_count() == 86);

  n.fusion = false;
  CHECK(network_leaf_specs(n).size() == 86 - 18);
  n.correlation = CorrelationForm::kOff;
  CHECK(network_leaf_specs(n).size() == 86 - 18 - 8);
  n.decoder_count = 1;
  CHECK(network_leaf_specs(n).size() == 40 + 10);
}

TEST_CASE("config validation") {
  auto n = tiny();
  CHECK_NOTHROW(n.validate());
  auto bad = n;
  bad.input_size = 10;
  bad.levels = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = n;
  bad.dilation_rates = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = n;
  bad.correlation = CorrelationForm::kOff;
  bad.correlation_inject = true;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = n;
  bad.decoder_count = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("fingerprint tracks the layout") {
  auto a = tiny(), b = tiny();
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  b.correlation = CorrelationForm::kLinear;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("init is deterministic per leaf and follows the fill rules") {
  auto n = tiny(16);
  const auto a = init_params(n, 4), b = init_params(n, 4), c = init_params(n, 5);
  CHECK(a == b);
  CHECK(!(a == c));
  for (const auto& [name, t] : a.leaves()) {
    CAPTURE(name);
    if (name.ends_with(".gain")) CHECK(std::all_of(t.values().begin(), t.values().end(), [](float v) { return v == 1; }));
    if (name.ends_with(".bias") || name.ends_with(".shift"))
      CHECK(std::all_of(t.values().begin(), t.values().end(), [](float v) { return v == 0; }));
  }
  // A leaf's draw does not depend on which other leaves exist.
  auto m = n;
  m.fusion = false;
  CHECK(init_params(m, 4).at("encoder_flair.level0.conv_d1.kernel") == a.at("encoder_flair.level0.conv_d1.kernel"));
}

TEST_CASE("forward trace shapes through a 3-level network") {
  NetworkConfig n;
  n.levels = 3;
  n.base_channels = 4;
  n.input_size = 16;
  const auto params = init_params(n, 1);
  Graph<float> g;
  ParamBinder<float> b(g, params);
  Rng rng(2);
  auto out = forward(b, n, g.constant(random_tensor(chw(1, 16, 16), rng).cast<float>()),
                     g.constant(random_tensor(chw(1, 16, 16), rng).cast<float>()), TrainMode::kFull);
  std::map<std::string, Shape> trace(out.trace.begin(), out.trace.end());
  CHECK(trace.at("encoder_flair.level0") == chw(4, 16, 16));
  CHECK(trace.at("encoder_t1c.level2") == chw(16, 4, 4));
  CHECK(trace.at("correlation.flair") == chw(16, 4, 4));
  CHECK(trace.at("fusion") == chw(32, 4, 4));
  CHECK(trace.at("decoder_seg.level1") == chw(8, 8, 8));
  CHECK(trace.at("decoder_pred.level0") == chw(4, 16, 16));
  CHECK(trace.at("seg_map") == chw(1, 16, 16));
  CHECK(trace.at("pred_map") == chw(1, 16, 16));
  for (float v : g.value(*out.pred_map).values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(out.trace.front().first == "encoder_flair.level0");
  CHECK(out.trace.back().first == "pred_map");
}

TEST_CASE("pretrain trees lack decoder_pred and refuse full mode") {
  auto n = tiny();
  n.decoder_count = 1;
  n.correlation = CorrelationForm::kOff;
  const auto params = init_params(n, 0);
  CHECK(!params.has_subtree(kDecoderPred));
  Graph<float> g;
  ParamBinder<float> b(g, params);
  Var x = g.constant(Tensor<float>(chw(1, 8, 8), 0.5f));
  CHECK_THROWS_AS(forward(b, n, x, x, TrainMode::kFull), Error);
  auto out = forward(b, n, x, x, TrainMode::kPretrain);
  CHECK(!out.pred_map);
  CHECK(!out.g_flair);
}

TEST_CASE("wrong input shape is rejected") {
  auto n = tiny();
  const auto params = init_params(n, 0);
  Graph<float> g;
  ParamBinder<float> b(g, params);
  Var x = g.constant(Tensor<float>(chw(1, 16, 16)));
  try {
    forward(b, n, x, x, TrainMode::kFull);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShapeMismatch);
  }
}

TEST_CASE("mmff preserves shape and its attention stays in (0, 1)") {
  Rng rng(3);
  const auto params = with_leaves(mmff_leaf_specs("m", 3), 4);
  Graph<double> g;
  ParamBinder<double> b(g, params);
  Var f = g.constant(random_tensor(chw(3, 6, 5), rng));
  std::vector<Var> maps;
  multiscale_spatial_attention(b, "m", f, &maps);
  CHECK(maps.size() == 3);
  for (Var m : maps) {
    CHECK(g.value(m).shape() == chw(1, 6, 5));
    for (double v : g.value(m).values()) CHECK((v > 0.0 && v < 1.0));
  }
  Var w;
  multichannel_attention(g, f, &w);
  CHECK(g.value(w).shape() == Shape{3});
  CHECK(g.value(mmff_fuse(b, "m", f)).shape() == chw(3, 6, 5));
}

TEST_CASE("mmff with zero kernels is 0.5 F + sigmoid(avg + max) F") {
  const auto specs = mmff_leaf_specs("m", 2);
  ParamTree<double> params;
  for (const auto& s : specs) params.set(s.name, Tensor<double>(s.shape));
  Tensor<double> f(chw(2, 1, 2), std::vector<double>{1, 3, -2, 0});
  Graph<double> g;
  ParamBinder<double> b(g, params);
  const auto y = g.value(mmff_fuse(b, "m", g.constant(f)));
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  const double w0 = sig(2.0 + 3.0), w1 = sig(-1.0 + 0.0);
  const std::vector<double> want = {0.5 * 1 + w0 * 1, 0.5 * 3 + w0 * 3, 0.5 * -2 + w1 * -2, 0.0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("gradient: mmff in isolation") {
  Rng rng(5);
  const auto f = random_tensor(chw(3, 5, 5), rng);
  auto rep = test::check_param_gradients(with_leaves(mmff_leaf_specs("m", 3), 6), [&](ParamBinder<double>& b) {
    return project(b.graph(), mmff_fuse(b, "m", b.graph().constant(f)));
  });
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_error < 1e-3);
  auto in = test::check_input_gradients({f}, [&](Graph<double>& g, const std::vector<Var>& v) {
    const auto params = with_leaves(mmff_leaf_specs("m", 3), 6);
    ParamBinder<double> b(g, params);
    return project(g, mmff_fuse(b, "m", v[0]));
  });
  CAPTURE(in.worst);
  CHECK(in.max_rel_error < 1e-3);
}

TEST_CASE("gradient: dilated group, encoder and decoder blocks") {
  const auto net = tiny();
  const auto params = init_params(net, 7).cast<double>();
  Rng rng(8);
  const auto x = random_tensor(chw(1, 8, 8), rng);

  SUBCASE("dilated group") {
    auto rep = test::check_param_gradients(params.subtree(kEncoderFlair), [&](ParamBinder<double>& b) {
      return project(b.graph(), dilated_group(b, net, "encoder_flair.level0", b.graph().constant(x)));
    });
    CAPTURE(rep.worst);
    CHECK(rep.max_rel_error < 1e-3);
  }
  SUBCASE("encoder") {
    auto rep = test::check_param_gradients(params.subtree(kEncoderFlair), [&](ParamBinder<double>& b) {
      auto levels = encoder_forward(b, net, kEncoderFlair, b.graph().constant(x));
      const std::pair<Var, double> terms[] = {{project(b.graph(), levels[0], 1), 1.0},
                                              {project(b.graph(), levels[1], 2), 1.0}};
      return b.graph().weighted_sum(terms);
    });
    CAPTURE(rep.worst);
    CHECK(rep.max_rel_error < 1e-3);
  }
  SUBCASE("decoder with cross inputs") {
    const auto bottleneck = random_tensor(chw(8, 4, 4), rng);
    const auto skip = random_tensor(chw(4, 8, 8), rng);
    const auto cross = random_tensor(chw(2, 8, 8), rng);
    auto rep = test::check_param_gradients(params.subtree(kDecoderPred), [&](ParamBinder<double>& b) {
      auto& g = b.graph();
      const Var skips[] = {g.constant(skip)};
      const Var crosses[] = {g.constant(cross)};
      return project(g, decoder_forward(b, net, kDecoderPred, g.constant(bottleneck), skips, crosses));
    });
    CAPTURE(rep.worst);
    CHECK(rep.max_rel_error < 1e-3);
  }
}

TEST_CASE("gradient: assembled tiny network end to end") {
  auto net = tiny();
  net.correlation_inject = true;
  Rng rng(9);
  const auto flair = random_tensor(chw(1, 8, 8), rng), t1c = random_tensor(chw(1, 8, 8), rng);
  Tensor<double> seg(chw(1, 8, 8)), rec(chw(1, 8, 8));
  for (std::size_t i : {18u, 19u, 26u, 27u, 35u}) seg[i] = 1;
  for (std::size_t i : {28u, 29u, 37u}) rec[i] = 1;
  auto rep = test::check_param_gradients(init_params(net, 10).cast<double>(), [&](ParamBinder<double>& b) {
    auto& g = b.graph();
    auto out = forward(b, net, g.constant(flair), g.constant(t1c), TrainMode::kFull);
    return objective(g, out, seg, &rec, LossConfig{}, Divergence::kJeffreys, TrainMode::kFull).total;
  }, 3);
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_error < 1e-3);
}

TEST_CASE("predict returns maps of the input size") {
  auto net = tiny(16);
  PreparedCase c;
  c.id = "x";
  c.flair = Slice(16, 16, 0.3f);
  c.t1c = Slice(16, 16, -0.2f);
  c.tumor = Mask(16, 16);
  c.recurrence = Mask(16, 16);
  const auto p = predict(init_params(net, 0), net, c, TrainMode::kFull);
  CHECK(p.seg_map.height == 16);
  REQUIRE(p.pred_map);
  CHECK(p.pred_map->width == 16);
  CHECK(!predict(init_params(net, 0), net, c, TrainMode::kPretrain).pred_map);
}

}  // TEST_SUITE
