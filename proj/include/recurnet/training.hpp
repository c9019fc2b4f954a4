#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "recurnet/metrics.hpp"
#include "recurnet/network.hpp"

namespace recurnet {

struct TrainSchedule {
  double initial_lr = 5e-4;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 10;
  std::size_t early_stop_patience = 50;
  std::size_t max_epochs = 500;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  // Share of the sorted training ids held out for validation. 0 validates on
  // the training cases themselves.
  double validation_fraction = 0.1;
  // Global gradient-norm ceiling; 0 disables clipping.
  double clip_norm = 5.0;
  bool freeze_encoders = false;
  // Stop as soon as validation DSC reaches these values (0 = unused).
  double stop_seg_dsc = 0.0;
  double stop_pred_dsc = 0.0;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One bias-corrected update of every leaf present in `grads`.
  void step(ParamTree<float>& params, const ParamTree<double>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Learning-rate halving on plateau plus early stopping, both driven by the
// validation loss. Improvement means strictly lower than the best so far.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainSchedule& schedule)
      : factor_(schedule.plateau_factor),
        plateau_patience_(schedule.plateau_patience),
        stop_patience_(schedule.early_stop_patience),
        lr_(schedule.initial_lr) {}

  // Records one epoch; returns true on a new best.
  bool observe(double val_loss);
  double lr() const { return lr_; }
  bool should_stop() const { return stop_wait_ >= stop_patience_; }
  double best() const { return best_; }

 private:
  double factor_;
  std::size_t plateau_patience_, stop_patience_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t plateau_wait_ = 0, stop_wait_ = 0;
};

// Scales `grads` in place so the global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_global_norm(ParamTree<double>& grads, double max_norm);

// Everything that defines a training run besides data and initial weights.
struct TrainSetup {
  NetworkConfig network;
  LossConfig loss;
  Divergence divergence = Divergence::kKl;
  TrainSchedule schedule;
  TrainMode mode = TrainMode::kFull;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dsc_seg = 0.0;
  std::optional<double> val_dsc_pred;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

std::string to_json_line(const EpochRecord& r);
EpochRecord epoch_from_json(const std::string& line);

struct TrainLog {
  std::vector<EpochRecord> epochs;
  // 1-based epoch whose parameters were returned; 0 if no epoch ran.
  std::size_t best_epoch = 0;
  std::string stop_reason;

  std::string to_jsonl() const;
  // First epoch whose validation DSC reached the targets, if any.
  std::optional<std::size_t> epochs_to(double seg_dsc, double pred_dsc = 0.0) const;
};

struct TrainResult {
  ParamTree<float> params;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Cases are split into train / validation with validation_carveout.
// Returns the parameters with the lowest validation loss.
TrainResult train(const std::vector<PreparedCase>& cases, ParamTree<float> init, const TrainSetup& setup,
                  const EpochCallback& on_epoch = {});

struct ValidationScore {
  double loss = 0.0;
  double dsc_seg = 0.0;
  std::optional<double> dsc_pred;
};

// Mean objective and mean binarized DSC over `cases`.
ValidationScore validation_score(const std::vector<PreparedCase>& cases, const ParamTree<float>& params,
                                 const TrainSetup& setup);

// Validation cases as train() selects them.
std::vector<PreparedCase> validation_cases(const std::vector<PreparedCase>& cases, double fraction);
std::vector<PreparedCase> training_cases(const std::vector<PreparedCase>& cases, double fraction);

// Segmentation-only variant of `network`: one decoder, no correlation module.
NetworkConfig pretrain_network(NetworkConfig network);

// Trains pretrain_network(setup.network) in pretrain mode from a fresh init.
TrainResult pretrain(const std::vector<PreparedCase>& source, const TrainSetup& setup,
                     const EpochCallback& on_epoch = {});

// Fresh parameters for `target` with encoder leaves (and fusion leaves when
// requested and present on both sides) copied from `source`.
ParamTree<float> transfer(const ParamTree<float>& source, const NetworkConfig& target, std::uint64_t seed,
                          bool copy_fusion = true);

// Forward, binarize at 0.5 and score both tasks.
MetricReport evaluate(const std::vector<PreparedCase>& cases, const ParamTree<float>& params,
                      const NetworkConfig& network, TrainMode mode, const std::string& method);

}  // namespace recurnet
