#include <doctest.h>

#include <cmath>

#include "recurnet/synthetic.hpp"
#include "recurnet/training.hpp"
#include "support.hpp"

using namespace recurnet;

namespace {

std::vector<PreparedCase> small_cases(std::size_t n, std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.image_size = 32;
  cfg.tumor_radius_min = 4;
  cfg.tumor_radius_max = 7;
  cfg.recurrence_offset_min = 2;
  cfg.recurrence_offset_max = 5;
  cfg.seed = seed;
  return prepare_cases(generate_dataset(cfg, n), 16);
}

TrainSetup small_setup() {
  TrainSetup s;
  s.network.levels = 2;
  s.network.base_channels = 2;
  s.network.dilation_rates = {1, 2};
  s.network.input_size = 16;
  s.schedule.batch_size = 2;
  s.schedule.max_epochs = 3;
  s.schedule.validation_fraction = 0.25;
  s.schedule.seed = 3;
  return s;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adam first steps match a hand computation") {
  ParamTree<float> p;
  p.set("w", Tensor<float>(Shape{2}, std::vector<float>{1.0f, -2.0f}));
  ParamTree<double> g;
  g.set("w", Tensor<double>(Shape{2}, std::vector<double>{0.5, -4.0}));
  Adam adam;
  adam.step(p, g, 0.1);
  // Step 1: mhat = g, vhat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(p.at("w")[0] == float(1.0 - 0.1 * 0.5 / (0.5 + 1e-7)));
  CHECK(p.at("w")[1] == float(-2.0 - 0.1 * -4.0 / (4.0 + 1e-7)));
  g.at("w")[0] = -0.5;
  const double before = p.at("w")[0];
  adam.step(p, g, 0.1);
  const double m = 0.9 * (0.1 * 0.5) + 0.1 * -0.5, v = 0.999 * (0.001 * 0.25) + 0.001 * 0.25;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(p.at("w")[0] == doctest::Approx(before - 0.1 * mhat / (std::sqrt(vhat) + 1e-7)).epsilon(1e-6));
  CHECK(adam.steps() == 2);
}

TEST_CASE("global norm clipping") {
  ParamTree<double> g;
  g.set("a", Tensor<double>(Shape{2}, std::vector<double>{3, 0}));
  g.set("b", Tensor<double>(Shape{1}, std::vector<double>{4}));
  CHECK(clip_global_norm(g, 10.0) == 5.0);
  CHECK(g.at("a")[0] == 3.0);
  CHECK(clip_global_norm(g, 2.5) == 5.0);
  CHECK(g.at("a")[0] == doctest::Approx(1.5));
  CHECK(g.at("b")[0] == doctest::Approx(2.0));
  CHECK(clip_global_norm(g, 0.0) == doctest::Approx(2.5));
}

TEST_CASE("plateau schedule on a constant loss") {
  TrainSchedule s;
  PlateauSchedule p(s);
  CHECK(p.observe(1.0));
  std::size_t epoch = 1;
  std::vector<double> lrs;
  while (!p.should_stop()) {
    ++epoch;
    CHECK(!p.observe(1.0));
    lrs.push_back(p.lr());
  }
  CHECK(epoch == 51);
  // Halved at epochs 11, 21, 31, 41; not at 51, where training stops.
  CHECK(p.lr() == 5e-4 / 16);
  CHECK(lrs[8] == 5e-4);
  CHECK(lrs[9] == 2.5e-4);
  CHECK(p.best() == 1.0);
}

TEST_CASE("plateau schedule resets on strict improvement only") {
  TrainSchedule s;
  s.plateau_patience = 2;
  s.early_stop_patience = 3;
  PlateauSchedule p(s);
  CHECK(p.observe(1.0));
  CHECK(!p.observe(1.0));
  CHECK(p.observe(0.9));
  CHECK(!p.observe(0.95));
  CHECK(!p.observe(0.9));
  CHECK(p.lr() == s.initial_lr / 2);
  CHECK(!p.observe(0.91));
  CHECK(p.should_stop());
}

TEST_CASE("epoch log json round trip") {
  EpochRecord r{7, 2.5e-4, 0.123456789, 0.3, 0.91, 0.77};
  CHECK(epoch_from_json(to_json_line(r)) == r);
  r.val_dsc_pred.reset();
  CHECK(epoch_from_json(to_json_line(r)) == r);
  CHECK_THROWS_AS(epoch_from_json("{}"), Error);
  TrainLog log;
  log.epochs = {{1, 1e-3, 1, 1, 0.5, 0.2}, {2, 1e-3, 1, 1, 0.85, 0.6}, {3, 1e-3, 1, 1, 0.95, 0.9}};
  CHECK(log.epochs_to(0.8) == 2u);
  CHECK(log.epochs_to(0.8, 0.8) == 3u);
  CHECK(!log.epochs_to(0.99));
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  CHECK_NOTHROW(s.validate());
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.validation_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.plateau_factor = 1.0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("train: one epoch, logged record, returned best parameters") {
  const auto cases = small_cases(4);
  auto setup = small_setup();
  setup.schedule.max_epochs = 1;
  std::vector<EpochRecord> seen;
  const auto init = init_params(setup.network, 0);
  const auto r = train(cases, init, setup, [&](const EpochRecord& e) { seen.push_back(e); });
  REQUIRE(r.log.epochs.size() == 1);
  CHECK(seen == r.log.epochs);
  CHECK(r.log.best_epoch == 1);
  CHECK(r.log.stop_reason == "max_epochs");
  CHECK(!(r.params == init));
  CHECK(r.log.epochs[0].val_dsc_pred.has_value());
  // The returned parameters score exactly the logged validation loss.
  const auto val = validation_cases(cases, setup.schedule.validation_fraction);
  CHECK(val.size() == 1);
  CHECK(validation_score(val, r.params, setup).loss == r.log.epochs[0].val_loss);
}

TEST_CASE("train is deterministic for a fixed seed") {
  const auto cases = small_cases(4);
  const auto setup = small_setup();
  const auto a = train(cases, init_params(setup.network, 0), setup);
  const auto b = train(cases, init_params(setup.network, 0), setup);
  CHECK(a.log.to_jsonl() == b.log.to_jsonl());
  CHECK(a.params == b.params);
  auto other = setup;
  other.schedule.seed = 4;
  CHECK(train(cases, init_params(setup.network, 0), other).log.to_jsonl() != a.log.to_jsonl());
}

TEST_CASE("freeze_encoders leaves encoder leaves untouched") {
  const auto cases = small_cases(4);
  auto setup = small_setup();
  setup.schedule.max_epochs = 1;
  setup.schedule.freeze_encoders = true;
  const auto init = init_params(setup.network, 0);
  const auto r = train(cases, init, setup);
  CHECK(r.params.subtree(kEncoderFlair) == init.subtree(kEncoderFlair));
  CHECK(r.params.subtree(kEncoderT1c) == init.subtree(kEncoderT1c));
  CHECK(!(r.params.subtree(kDecoderSeg) == init.subtree(kDecoderSeg)));
}

TEST_CASE("train rejects mismatched initial parameters and case sizes") {
  const auto cases = small_cases(4);
  auto setup = small_setup();
  auto wide = setup.network;
  wide.base_channels = 4;
  CHECK_THROWS_AS(train(cases, init_params(wide, 0), setup), Error);
  auto big = setup;
  big.network.input_size = 32;
  CHECK_THROWS_AS(train(cases, init_params(big.network, 0), big), Error);
}

TEST_CASE("pretrain then transfer: encoders copied bit for bit, decoders fresh") {
  const auto cases = small_cases(4);
  auto setup = small_setup();
  setup.schedule.max_epochs = 1;
  const auto pre = pretrain(cases, setup);
  CHECK(!pre.params.has_subtree(kDecoderPred));
  CHECK(!pre.params.has_subtree(kCorrelation));
  CHECK(pre.log.epochs.front().val_dsc_pred == std::nullopt);

  const auto t = transfer(pre.params, setup.network, 9);
  CHECK(t.subtree(kEncoderFlair) == pre.params.subtree(kEncoderFlair));
  CHECK(t.subtree(kEncoderT1c) == pre.params.subtree(kEncoderT1c));
  CHECK(t.subtree(kFusion) == pre.params.subtree(kFusion));
  CHECK(!(t.subtree(kDecoderSeg) == pre.params.subtree(kDecoderSeg)));
  CHECK(t.subtree(kDecoderPred) == init_params(setup.network, 9).subtree(kDecoderPred));
  CHECK(!(transfer(pre.params, setup.network, 9, false).subtree(kFusion) == pre.params.subtree(kFusion)));

  auto wide = setup.network;
  wide.base_channels = 4;
  CHECK_THROWS_AS(transfer(pre.params, wide, 9), Error);
}

TEST_CASE("evaluate returns one case row per input with both tasks") {
  const auto cases = small_cases(3);
  const auto setup = small_setup();
  const auto r = evaluate(cases, init_params(setup.network, 0), setup.network, TrainMode::kFull, "m");
  CHECK(r.method == "m");
  CHECK(r.cases.size() == 3);
  CHECK(r.prediction.has_value());
  CHECK(!evaluate(cases, init_params(setup.network, 0), setup.network, TrainMode::kPretrain, "m").prediction);
}

}  // TEST_SUITE
