#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recurnet/synthetic.hpp"
#include "recurnet/training.hpp"

namespace recurnet {

// Every tunable of a run. Text form is flat "key = value" lines; '#' starts a
// comment. Unknown keys are rejected.
struct RunConfig {
  NetworkConfig network;
  LossConfig loss;
  Divergence divergence = Divergence::kKl;
  TrainSchedule train;
  // transfer.copy_fusion: also copy the bottleneck fusion leaves.
  bool copy_fusion = true;
  SynthConfig synth;

  void validate() const;
};

// All keys in the order to_text writes them.
const std::vector<std::string>& config_keys();

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Applies the lines of `text` on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Every key with its effective value; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

inline constexpr const char* kResolvedConfigFile = "resolved-config.txt";

TrainSetup train_setup(const RunConfig& config, TrainMode mode);

}  // namespace recurnet
