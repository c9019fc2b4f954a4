#include "recurnet/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "recurnet/metrics.hpp"

namespace recurnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[128];
  const double a = std::abs(v);
  const bool plain = a == 0 || (a >= 1e-6 && a < 1e15);
  auto r = plain ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                 : std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

double parse_double(const std::string& key, const std::string& text) {
  double v = 0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    fail(ErrorKind::kValidation, key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    fail(ErrorKind::kValidation, key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  fail(ErrorKind::kValidation, key + ": expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) fail(ErrorKind::kValidation, key + ": empty list");
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

using Table = std::vector<std::pair<std::string, Field>>;

const Table& table() {
  static const Table t = [] {
    Table t;
    auto add_size = [&](const std::string& key, auto ref) {
      t.push_back({key, {[ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                         [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_uint(key, v); }}});
    };
    auto add_double = [&](const std::string& key, auto ref) {
      t.push_back({key, {[ref](const RunConfig& c) { return fmt(double(ref(const_cast<RunConfig&>(c)))); },
                         [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_double(key, v); }}});
    };
    auto add_bool = [&](const std::string& key, auto ref) {
      t.push_back({key, {[ref](const RunConfig& c) { return fmt(bool(ref(const_cast<RunConfig&>(c)))); },
                         [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); }}});
    };

    add_size("network.levels", [](RunConfig& c) -> auto& { return c.network.levels; });
    add_size("network.base_channels", [](RunConfig& c) -> auto& { return c.network.base_channels; });
    t.push_back({"network.dilation_rates",
                 {[](const RunConfig& c) { return fmt_list(c.network.dilation_rates); },
                  [](RunConfig& c, const std::string& v) {
                    c.network.dilation_rates = parse_list("network.dilation_rates", v);
                  }}});
    add_size("network.input_size", [](RunConfig& c) -> auto& { return c.network.input_size; });
    add_bool("network.fusion", [](RunConfig& c) -> auto& { return c.network.fusion; });
    t.push_back({"correlation.form",
                 {[](const RunConfig& c) { return std::string(to_string(c.network.correlation)); },
                  [](RunConfig& c, const std::string& v) {
                    const auto f = parse_correlation_form(v);
                    if (!f) fail(ErrorKind::kValidation, "correlation.form: expected nonlinear, linear or off, got '" + v + "'");
                    c.network.correlation = *f;
                  }}});
    t.push_back({"correlation.divergence",
                 {[](const RunConfig& c) { return std::string(to_string(c.divergence)); },
                  [](RunConfig& c, const std::string& v) {
                    const auto d = parse_divergence(v);
                    if (!d) fail(ErrorKind::kValidation, "correlation.divergence: expected kl, jeffreys or hellinger2, got '" + v + "'");
                    c.divergence = *d;
                  }}});
    add_bool("correlation.inject", [](RunConfig& c) -> auto& { return c.network.correlation_inject; });
    add_double("loss.epsilon", [](RunConfig& c) -> auto& { return c.loss.epsilon; });
    add_double("loss.phi", [](RunConfig& c) -> auto& { return c.loss.phi; });
    add_double("loss.prediction_weight", [](RunConfig& c) -> auto& { return c.loss.prediction_weight; });
    add_double("train.lr", [](RunConfig& c) -> auto& { return c.train.initial_lr; });
    add_double("train.plateau_factor", [](RunConfig& c) -> auto& { return c.train.plateau_factor; });
    add_size("train.plateau_patience", [](RunConfig& c) -> auto& { return c.train.plateau_patience; });
    add_size("train.early_stop_patience", [](RunConfig& c) -> auto& { return c.train.early_stop_patience; });
    add_size("train.max_epochs", [](RunConfig& c) -> auto& { return c.train.max_epochs; });
    add_size("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    add_size("train.seed", [](RunConfig& c) -> auto& { return c.train.seed; });
    add_double("train.validation_fraction", [](RunConfig& c) -> auto& { return c.train.validation_fraction; });
    add_double("train.clip_norm", [](RunConfig& c) -> auto& { return c.train.clip_norm; });
    add_bool("train.freeze_encoders", [](RunConfig& c) -> auto& { return c.train.freeze_encoders; });
    add_double("train.stop_seg_dsc", [](RunConfig& c) -> auto& { return c.train.stop_seg_dsc; });
    add_double("train.stop_pred_dsc", [](RunConfig& c) -> auto& { return c.train.stop_pred_dsc; });
    add_bool("transfer.copy_fusion", [](RunConfig& c) -> auto& { return c.copy_fusion; });
    add_size("synth.image_size", [](RunConfig& c) -> auto& { return c.synth.image_size; });
    add_double("synth.tumor_radius_min", [](RunConfig& c) -> auto& { return c.synth.tumor_radius_min; });
    add_double("synth.tumor_radius_max", [](RunConfig& c) -> auto& { return c.synth.tumor_radius_max; });
    add_double("synth.recurrence_offset_min", [](RunConfig& c) -> auto& { return c.synth.recurrence_offset_min; });
    add_double("synth.recurrence_offset_max", [](RunConfig& c) -> auto& { return c.synth.recurrence_offset_max; });
    add_double("synth.noise_std", [](RunConfig& c) -> auto& { return c.synth.noise_std; });
    add_double("synth.relation_a", [](RunConfig& c) -> auto& { return c.synth.relation.a; });
    add_double("synth.relation_b", [](RunConfig& c) -> auto& { return c.synth.relation.b; });
    add_double("synth.relation_c", [](RunConfig& c) -> auto& { return c.synth.relation.c; });
    add_size("synth.seed", [](RunConfig& c) -> auto& { return c.synth.seed; });
    return t;
  }();
  return t;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : table())
    if (k == key) return f;
  fail(ErrorKind::kValidation, "unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  loss.validate();
  train.validate();
  synth.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, f] : table()) k.push_back(key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return field(key).get(config); }

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kValidation, "config line " + std::to_string(number) + ": expected 'key = value'");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return parse_config(read_text(path), std::move(base));
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [key, f] : table()) out += key + " = " + f.get(config) + "\n";
  return out;
}

TrainSetup train_setup(const RunConfig& config, TrainMode mode) {
  TrainSetup s;
  s.network = config.network;
  s.loss = config.loss;
  s.divergence = config.divergence;
  s.schedule = config.train;
  s.mode = mode;
  if (mode == TrainMode::kPretrain) s.network = pretrain_network(s.network);
  return s;
}

}  // namespace recurnet
