#include "recurnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "recurnet/random.hpp"

namespace recurnet {

using nlohmann::json;

void TrainSchedule::validate() const {
  require(initial_lr > 0 && std::isfinite(initial_lr), "train.lr must be positive");
  require(plateau_factor > 0 && plateau_factor < 1, "train.plateau_factor must lie in (0, 1)");
  require(plateau_patience > 0, "train.plateau_patience must be positive");
  require(early_stop_patience > 0, "train.early_stop_patience must be positive");
  require(batch_size > 0, "train.batch_size must be positive");
  require(validation_fraction >= 0 && validation_fraction < 1, "train.validation_fraction must lie in [0, 1)");
  require(clip_norm >= 0, "train.clip_norm must be non-negative");
  require(stop_seg_dsc >= 0 && stop_seg_dsc <= 1 && stop_pred_dsc >= 0 && stop_pred_dsc <= 1,
          "stop DSC targets must lie in [0, 1]");
}

void Adam::step(ParamTree<float>& params, const ParamTree<double>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (const auto& [name, g] : grads.leaves()) {
    auto& p = params.at(name);
    require(p.size() == g.size(), "Adam: gradient shape differs for " + name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0), v.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p[i] = static_cast<float>(double(p[i]) - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

bool PlateauSchedule::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    plateau_wait_ = stop_wait_ = 0;
    return true;
  }
  ++plateau_wait_;
  ++stop_wait_;
  if (plateau_wait_ >= plateau_patience_ && !should_stop()) {
    lr_ *= factor_;
    plateau_wait_ = 0;
  }
  return false;
}

double clip_global_norm(ParamTree<double>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads.leaves())
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads.leaves())
      for (double& v : g.values()) v *= s;
  }
  return norm;
}

// --- log --------------------------------------------------------------------

std::string to_json_line(const EpochRecord& r) {
  json j{{"epoch", r.epoch},       {"lr", r.lr},           {"train_loss", r.train_loss},
         {"val_loss", r.val_loss}, {"val_dsc_seg", r.val_dsc_seg}};
  j["val_dsc_pred"] = r.val_dsc_pred ? json(*r.val_dsc_pred) : json(nullptr);
  return j.dump();
}

EpochRecord epoch_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.lr = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.val_dsc_seg = j.at("val_dsc_seg").get<double>();
    if (!j.at("val_dsc_pred").is_null()) r.val_dsc_pred = j.at("val_dsc_pred").get<double>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed log line: ") + e.what());
  }
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : epochs) out += to_json_line(r) + "\n";
  return out;
}

std::optional<std::size_t> TrainLog::epochs_to(double seg_dsc, double pred_dsc) const {
  for (const auto& r : epochs) {
    const bool seg_ok = r.val_dsc_seg >= seg_dsc;
    const bool pred_ok = pred_dsc <= 0 || (r.val_dsc_pred && *r.val_dsc_pred >= pred_dsc);
    if (seg_ok && pred_ok) return r.epoch;
  }
  return std::nullopt;
}

// --- data selection ---------------------------------------------------------

namespace {

std::vector<std::string> sorted_ids(const std::vector<PreparedCase>& cases) {
  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<PreparedCase> select(const std::vector<PreparedCase>& cases, const std::vector<std::string>& ids,
                                 bool keep) {
  std::vector<PreparedCase> out;
  for (const auto& c : cases)
    if (std::binary_search(ids.begin(), ids.end(), c.id) == keep) out.push_back(c);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

}  // namespace

std::vector<PreparedCase> validation_cases(const std::vector<PreparedCase>& cases, double fraction) {
  if (fraction <= 0) return select(cases, {}, false);
  auto held = validation_carveout(sorted_ids(cases), fraction);
  std::sort(held.begin(), held.end());
  return select(cases, held, true);
}

std::vector<PreparedCase> training_cases(const std::vector<PreparedCase>& cases, double fraction) {
  if (fraction <= 0) return select(cases, {}, false);
  auto held = validation_carveout(sorted_ids(cases), fraction);
  std::sort(held.begin(), held.end());
  return select(cases, held, false);
}

// --- training ---------------------------------------------------------------

namespace {

bool is_encoder_leaf(const std::string& name) {
  return path_in_subtree(name, kEncoderFlair) || path_in_subtree(name, kEncoderT1c);
}

struct SampleTensors {
  Tensor<float> flair, t1c, tumor, recurrence;
};

SampleTensors tensors_of(const PreparedCase& c) {
  return {slice_tensor<float>(c.flair), slice_tensor<float>(c.t1c), mask_tensor<float>(c.tumor),
          mask_tensor<float>(c.recurrence)};
}

void check_case_size(const PreparedCase& c, const NetworkConfig& network) {
  if (c.flair.height != network.input_size || c.flair.width != network.input_size) {
    fail(ErrorKind::kShapeMismatch, "case " + c.id + " is " + std::to_string(c.flair.height) + "x" +
                                        std::to_string(c.flair.width) + " but the network expects " +
                                        std::to_string(network.input_size));
  }
}

}  // namespace

ValidationScore validation_score(const std::vector<PreparedCase>& cases, const ParamTree<float>& params,
                                 const TrainSetup& setup) {
  require(!cases.empty(), "validation_score needs at least one case");
  const bool full = setup.mode == TrainMode::kFull;
  double loss = 0, seg = 0, pred = 0;
  for (const auto& c : cases) {
    check_case_size(c, setup.network);
    const auto t = tensors_of(c);
    Graph<float> g;
    ParamBinder<float> binder(g, params, [](const std::string&) { return false; });
    auto out = forward(binder, setup.network, g.constant(t.flair), g.constant(t.t1c), setup.mode);
    auto terms = objective(g, out, t.tumor, full ? &t.recurrence : nullptr, setup.loss, setup.divergence, setup.mode);
    loss += double(g.value(terms.total)[0]);
    auto to_slice = [&](Var v) {
      const auto& m = g.value(v);
      return Slice(m.height(), m.width(), std::vector<float>(m.values().begin(), m.values().end()));
    };
    seg += dsc(confusion_counts(binarize(to_slice(out.seg_map)), c.tumor));
    if (full) pred += dsc(confusion_counts(binarize(to_slice(*out.pred_map)), c.recurrence));
  }
  const double n = double(cases.size());
  ValidationScore s{loss / n, seg / n, std::nullopt};
  if (full) s.dsc_pred = pred / n;
  return s;
}

TrainResult train(const std::vector<PreparedCase>& cases, ParamTree<float> init, const TrainSetup& setup,
                  const EpochCallback& on_epoch) {
  setup.network.validate();
  setup.loss.validate();
  setup.schedule.validate();
  const auto& sched = setup.schedule;
  const bool full = setup.mode == TrainMode::kFull;
  require(!cases.empty(), "training needs at least one case");
  const auto train_set = training_cases(cases, sched.validation_fraction);
  const auto val_set = validation_cases(cases, sched.validation_fraction);
  require(!train_set.empty(), "validation carve-out leaves no training cases; lower train.validation_fraction");
  for (const auto& c : train_set) check_case_size(c, setup.network);
  {
    const auto expected = init_params(setup.network, 0);
    for (const auto& [name, t] : expected.leaves()) {
      if (!init.contains(name) || init.at(name).shape() != t.shape()) {
        fail(ErrorKind::kShapeMismatch, "initial parameters do not match the network layout at " + name);
      }
    }
  }

  std::vector<SampleTensors> samples;
  for (const auto& c : train_set) samples.push_back(tensors_of(c));

  TrainResult result;
  result.params = init;
  ParamTree<float> params = std::move(init);
  Adam adam;
  auto trainable = [&](const std::string& name) { return !(sched.freeze_encoders && is_encoder_leaf(name)); };

  PlateauSchedule plateau(sched);
  result.log.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= sched.max_epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(sched.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
      const std::size_t end = std::min(order.size(), start + sched.batch_size);
      ParamTree<double> grads;
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = samples[order[b]];
        Graph<float> g;
        ParamBinder<float> binder(g, params, trainable);
        auto out = forward(binder, setup.network, g.constant(s.flair), g.constant(s.t1c), setup.mode);
        auto terms = objective(g, out, s.tumor, full ? &s.recurrence : nullptr, setup.loss, setup.divergence,
                               setup.mode);
        const double loss = double(g.value(terms.total)[0]);
        if (!std::isfinite(loss)) {
          fail(ErrorKind::kDivergence, "non-finite training loss at epoch " + std::to_string(epoch) + " on case " +
                                           train_set[order[b]].id + "; try a lower train.lr or train.clip_norm");
        }
        loss_sum += loss;
        g.backward(terms.total);
        for (auto& [name, grad] : g.parameter_gradients()) {
          auto as_double = grad.template cast<double>();
          if (!grads.contains(name)) {
            grads.set(name, std::move(as_double));
            continue;
          }
          auto& acc = grads.at(name);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += as_double[i];
        }
      }
      const double inv = 1.0 / double(end - start);
      for (auto& [name, g] : grads.leaves())
        for (double& v : g.values()) v *= inv;
      clip_global_norm(grads, sched.clip_norm);
      adam.step(params, grads, plateau.lr());
      if (!params.all_finite()) {
        fail(ErrorKind::kDivergence, "parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }

    const auto score = validation_score(val_set, params, setup);
    if (!std::isfinite(score.loss)) {
      fail(ErrorKind::kDivergence, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, plateau.lr(), loss_sum / double(samples.size()), score.loss, score.dsc_seg, score.dsc_pred};
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (plateau.observe(score.loss)) {
      result.params = params;
      result.log.best_epoch = epoch;
    } else if (plateau.should_stop()) {
      result.log.stop_reason = "early_stop";
      break;
    }
    const bool seg_hit = sched.stop_seg_dsc > 0 && score.dsc_seg >= sched.stop_seg_dsc;
    const bool pred_needed = full && sched.stop_pred_dsc > 0;
    const bool pred_hit = !pred_needed || (score.dsc_pred && *score.dsc_pred >= sched.stop_pred_dsc);
    if ((sched.stop_seg_dsc > 0 || pred_needed) && (sched.stop_seg_dsc <= 0 || seg_hit) && pred_hit) {
      result.log.stop_reason = "target_reached";
      break;
    }
  }
  return result;
}

NetworkConfig pretrain_network(NetworkConfig network) {
  network.decoder_count = 1;
  network.correlation = CorrelationForm::kOff;
  network.correlation_inject = false;
  return network;
}

TrainResult pretrain(const std::vector<PreparedCase>& source, const TrainSetup& setup, const EpochCallback& on_epoch) {
  TrainSetup s = setup;
  s.network = pretrain_network(setup.network);
  s.mode = TrainMode::kPretrain;
  return train(source, init_params(s.network, setup.schedule.seed), s, on_epoch);
}

ParamTree<float> transfer(const ParamTree<float>& source, const NetworkConfig& target, std::uint64_t seed,
                          bool copy_fusion) {
  auto params = init_params(target, seed);
  std::vector<std::string> roots = {kEncoderFlair, kEncoderT1c};
  if (copy_fusion && target.fusion && source.has_subtree(kFusion)) roots.push_back(kFusion);
  restore_subtrees(params, source, roots);
  return params;
}

MetricReport evaluate(const std::vector<PreparedCase>& cases, const ParamTree<float>& params,
                      const NetworkConfig& network, TrainMode mode, const std::string& method) {
  std::vector<CaseMetrics> rows;
  for (const auto& c : cases) {
    check_case_size(c, network);
    const auto p = predict(params, network, c, mode);
    CaseMetrics m;
    m.id = c.id;
    m.segmentation = task_metrics(binarize(p.seg_map), c.tumor);
    if (p.pred_map) m.prediction = task_metrics(binarize(*p.pred_map), c.recurrence);
    rows.push_back(std::move(m));
  }
  return aggregate_report(method, std::move(rows));
}

}  // namespace recurnet
