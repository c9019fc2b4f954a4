#include "cli.hpp"

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "recurnet/config.hpp"
#include "recurnet/experiments.hpp"
#include "recurnet/overlay.hpp"

namespace recurnet::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelFile = "model.ckpt";
constexpr const char* kLogFile = "train-log.jsonl";

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override one config key, e.g. --set train.lr=1e-3");
  cmd->add_option("--out", c.out, "Output directory (default: $RECURNET_OUT/<command>)");
  cmd->add_option("--seed", c.seed, "Seed (synth.seed for synth, train.seed otherwise)");
  cmd->add_option("--epochs", c.epochs, "Shorthand for train.max_epochs");
}

fs::path out_dir(const Common& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("RECURNET_OUT");
  return fs::path(root && *root ? root : "recurnet-out") / command;
}

RunConfig resolve(const Common& c, bool synth_seed, RunConfig base = {}) {
  RunConfig cfg = c.config_path.empty() ? std::move(base) : load_config(c.config_path, std::move(base));
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kValidation, "--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) (synth_seed ? cfg.synth.seed : cfg.train.seed) = *c.seed;
  if (c.epochs) cfg.train.max_epochs = *c.epochs;
  cfg.validate();
  return cfg;
}

void write_resolved(const fs::path& dir, const RunConfig& cfg) { write_text(dir / kResolvedConfigFile, to_text(cfg)); }

// Checkpoint plus the network that produced it.
struct Model {
  Checkpoint checkpoint;
  RunConfig config;
  NetworkConfig network;
  TrainMode mode = TrainMode::kFull;
};

Model load_model(const fs::path& path) {
  Model m;
  m.checkpoint = load_checkpoint(path);
  m.config = parse_config(m.checkpoint.config_text);
  m.network = m.config.network;
  m.network.decoder_count = m.checkpoint.params.has_subtree(kDecoderPred) ? 2 : 1;
  m.mode = m.network.decoder_count == 2 ? TrainMode::kFull : TrainMode::kPretrain;
  if (m.network.fingerprint() != m.checkpoint.fingerprint) {
    fail(ErrorKind::kValidation, "checkpoint " + path.string() + " has fingerprint " + m.checkpoint.fingerprint +
                                     " but its stored config describes " + m.network.fingerprint());
  }
  return m;
}

void save_model(const fs::path& path, RunConfig cfg, const NetworkConfig& network, const ParamTree<float>& params) {
  cfg.network = network;
  save_checkpoint(path, Checkpoint{network.fingerprint(), to_text(cfg), params});
}

enum class Split { kTrain, kTest, kAll };

std::vector<PreparedCase> load_split(const fs::path& data, Split split, std::uint64_t seed, std::size_t size) {
  auto cases = load_dataset(data);
  if (split != Split::kAll) {
    std::vector<std::string> ids;
    for (const auto& c : cases) ids.push_back(c.id);
    const auto s = split_dataset(ids, seed);
    const auto& keep = split == Split::kTrain ? s.train : s.test;
    std::erase_if(cases, [&](const Case& c) { return std::find(keep.begin(), keep.end(), c.id) == keep.end(); });
  }
  return prepare_cases(cases, size);
}

const std::map<std::string, Split> kSplitNames = {{"train", Split::kTrain}, {"test", Split::kTest}, {"all", Split::kAll}};

EpochCallback echo(std::ostream& out) {
  return [&out](const EpochRecord& r) { out << to_json_line(r) << '\n' << std::flush; };
}

void write_report(const fs::path& dir, const MetricReport& report) {
  write_text(dir / "report.tsv", format_table_tsv({report}));
  write_text(dir / "report.json", report_to_json(report));
  write_text(dir / "cases.jsonl", report_cases_jsonl(report));
}

std::vector<PreparedCase> pick_cases(std::vector<PreparedCase> cases, const std::vector<std::string>& ids) {
  if (ids.empty()) return cases;
  std::vector<PreparedCase> out;
  for (const auto& id : ids) {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.id == id; });
    if (it == cases.end()) fail(ErrorKind::kValidation, "no case with id '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint tumor segmentation and recurrence-location prediction on paired FLAIR/T1c slices"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Common common;
  std::string data, source, checkpoint, split_name, mode_name = "auto", tables = "2,3,4";
  std::size_t count = 0;
  bool freeze = false;
  std::vector<std::string> case_ids;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth, common);
  synth->add_option("--n", count, "Number of cases")->required()->check(CLI::PositiveNumber);

  auto* pre = app.add_subcommand("pretrain", "Train the segmentation-only network on a source dataset");
  add_common(pre, common);
  pre->add_option("--data", data, "Source dataset directory")->required();

  auto* xfer = app.add_subcommand("transfer", "Build a network initialised from a pretrained checkpoint");
  add_common(xfer, common);
  xfer->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  xfer->add_option("--data", data, "Optional target dataset to fine-tune on");
  xfer->add_flag("--freeze-encoders", freeze, "Keep transferred encoders fixed while fine-tuning");

  auto* tr = app.add_subcommand("train", "Train the joint network");
  add_common(tr, common);
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--init", checkpoint, "Initial weights (default: fresh init)")->check(CLI::ExistingFile);
  tr->add_option("--split", split_name, "train | test | all (default train)")->check(CLI::IsMember({"train", "test", "all"}));
  tr->add_flag("--freeze-encoders", freeze, "Keep encoder weights fixed");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  add_common(ev, common);
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split_name, "train | test | all (default test)")->check(CLI::IsMember({"train", "test", "all"}));

  auto* pr = app.add_subcommand("predict", "Write probability maps and masks");
  add_common(pr, common);
  pr->add_option("--data", data, "Dataset directory")->required();
  pr->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--case", case_ids, "Restrict to these case ids");

  auto* ab = app.add_subcommand("ablate", "Run the ablation tables");
  add_common(ab, common);
  ab->add_option("--data", data, "Target dataset directory")->required();
  ab->add_option("--source", source, "Source dataset for pretraining (enables transfer rows and table 1)");
  ab->add_option("--mode", mode_name, "auto | direct | transfer for tables 2-4")
      ->check(CLI::IsMember({"auto", "direct", "transfer"}));
  ab->add_option("--tables", tables, "Comma list from 1,2,3,4");

  auto* ov = app.add_subcommand("overlay", "Render contour overlays as PNG");
  add_common(ov, common);
  ov->add_option("--data", data, "Dataset directory")->required();
  ov->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ov->add_option("--case", case_ids, "Restrict to these case ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return 1;
  }

  try {
    if (*synth) {
      const auto cfg = resolve(common, true);
      const fs::path dir = out_dir(common, "synth");
      save_dataset(dir, generate_dataset(cfg.synth, count));
      write_resolved(dir, cfg);
      out << "wrote " << count << " cases to " << dir.string() << '\n';
    } else if (*pre) {
      const auto cfg = resolve(common, false);
      const auto cases = load_split(data, Split::kAll, cfg.train.seed, cfg.network.input_size);
      const auto setup = train_setup(cfg, TrainMode::kPretrain);
      const fs::path dir = out_dir(common, "pretrain");
      write_resolved(dir, cfg);
      auto r = pretrain(cases, setup, echo(out));
      write_text(dir / kLogFile, r.log.to_jsonl());
      save_model(dir / kModelFile, cfg, setup.network, r.params);
      out << "best epoch " << r.log.best_epoch << " (" << r.log.stop_reason << "); checkpoint "
          << (dir / kModelFile).string() << '\n';
    } else if (*xfer) {
      const auto source_model = load_model(checkpoint);
      RunConfig base = source_model.config;
      base.network.correlation = RunConfig{}.network.correlation;
      auto cfg = resolve(common, false, base);
      if (freeze) cfg.train.freeze_encoders = true;
      auto setup = train_setup(cfg, TrainMode::kFull);
      auto params = transfer(source_model.checkpoint.params, setup.network, cfg.train.seed, cfg.copy_fusion);
      std::vector<PreparedCase> cases;
      if (!data.empty()) cases = load_split(data, Split::kTrain, cfg.train.seed, cfg.network.input_size);
      const fs::path dir = out_dir(common, "transfer");
      write_resolved(dir, cfg);
      save_model(dir / "transferred.ckpt", cfg, setup.network, params);
      if (!data.empty()) {
        auto r = train(cases, std::move(params), setup, echo(out));
        write_text(dir / kLogFile, r.log.to_jsonl());
        save_model(dir / kModelFile, cfg, setup.network, r.params);
        out << "best epoch " << r.log.best_epoch << " (" << r.log.stop_reason << ")\n";
      }
      out << "wrote " << dir.string() << '\n';
    } else if (*tr) {
      std::optional<Model> init;
      RunConfig base;
      if (!checkpoint.empty()) {
        init = load_model(checkpoint);
        base = init->config;
      }
      auto cfg = resolve(common, false, base);
      if (freeze) cfg.train.freeze_encoders = true;
      const auto split = kSplitNames.at(split_name.empty() ? "train" : split_name);
      const auto cases = load_split(data, split, cfg.train.seed, cfg.network.input_size);
      const auto setup = train_setup(cfg, TrainMode::kFull);
      ParamTree<float> params = init_params(setup.network, cfg.train.seed);
      if (init) {
        if (init->network.fingerprint() != setup.network.fingerprint()) {
          fail(ErrorKind::kValidation, "--init checkpoint does not match the configured network; use transfer");
        }
        params = init->checkpoint.params;
      }
      const fs::path dir = out_dir(common, "train");
      write_resolved(dir, cfg);
      auto r = train(cases, std::move(params), setup, echo(out));
      write_text(dir / kLogFile, r.log.to_jsonl());
      save_model(dir / kModelFile, cfg, setup.network, r.params);
      out << "best epoch " << r.log.best_epoch << " (" << r.log.stop_reason << "); checkpoint "
          << (dir / kModelFile).string() << '\n';
    } else if (*ev) {
      const auto model = load_model(checkpoint);
      const auto cfg = resolve(common, false, model.config);
      const auto split = kSplitNames.at(split_name.empty() ? "test" : split_name);
      const auto cases = load_split(data, split, cfg.train.seed, model.network.input_size);
      require(!cases.empty(), "no cases selected for evaluation");
      const fs::path dir = out_dir(common, "eval");
      write_resolved(dir, cfg);
      auto report = evaluate(cases, model.checkpoint.params, model.network, model.mode, fs::path(checkpoint).string());
      if (model.mode == TrainMode::kPretrain) report.note = "segmentation-only model; prediction not applicable";
      write_report(dir, report);
      out << format_table_tsv({report});
    } else if (*pr) {
      const auto model = load_model(checkpoint);
      const auto cfg = resolve(common, false, model.config);
      const auto cases = pick_cases(load_split(data, Split::kAll, 0, model.network.input_size), case_ids);
      const fs::path dir = out_dir(common, "predict");
      write_resolved(dir, cfg);
      for (const auto& c : cases) {
        const auto p = predict(model.checkpoint.params, model.network, c, model.mode);
        write_raw(dir / c.id / "seg_prob", p.seg_map);
        write_raw(dir / c.id / "seg_mask", binarize(p.seg_map));
        if (p.pred_map) {
          write_raw(dir / c.id / "pred_prob", *p.pred_map);
          write_raw(dir / c.id / "pred_mask", binarize(*p.pred_map));
        }
      }
      out << "wrote predictions for " << cases.size() << " cases to " << dir.string() << '\n';
    } else if (*ab) {
      const auto cfg = resolve(common, false);
      AblationInputs in;
      in.base = cfg;
      in.train = load_split(data, Split::kTrain, cfg.train.seed, cfg.network.input_size);
      in.test = load_split(data, Split::kTest, cfg.train.seed, cfg.network.input_size);
      if (!source.empty()) in.source = load_split(source, Split::kAll, cfg.train.seed, cfg.network.input_size);
      ExperimentMode mode = ExperimentMode::kDirect;
      if (mode_name == "transfer" || (mode_name == "auto" && !source.empty())) mode = ExperimentMode::kTransfer;
      if (mode == ExperimentMode::kTransfer && source.empty()) {
        fail(ErrorKind::kValidation, "--mode transfer needs --source");
      }
      std::vector<TableSpec> specs;
      std::stringstream ss(tables);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "1") {
          if (source.empty()) fail(ErrorKind::kValidation, "table 1 needs --source");
          specs.push_back(table1_spec());
        } else if (item == "2") specs.push_back(table2_spec(mode));
        else if (item == "3") specs.push_back(table3_spec(mode));
        else if (item == "4") specs.push_back(table4_spec(mode));
        else fail(ErrorKind::kValidation, "--tables accepts 1, 2, 3 and 4; got '" + item + "'");
      }
      const fs::path dir = out_dir(common, "ablate");
      write_resolved(dir, cfg);
      const auto results = run_ablation(in, specs, [&](const std::string& s) { err << s << '\n'; });
      write_ablation(dir, results);
      for (const auto& t : results) out << t.tsv() << '\n';
    } else if (*ov) {
      const auto model = load_model(checkpoint);
      const auto cfg = resolve(common, false, model.config);
      const auto cases = pick_cases(load_split(data, Split::kAll, 0, model.network.input_size), case_ids);
      const fs::path dir = out_dir(common, "overlay");
      write_resolved(dir, cfg);
      for (const auto& c : cases) {
        const auto p = predict(model.checkpoint.params, model.network, c, model.mode);
        write_png(dir / (c.id + ".png"), compose_overlay(c.flair, c.tumor, c.recurrence, p.seg_map, p.pred_map));
      }
      out << "wrote " << cases.size() << " overlays to " << dir.string() << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace recurnet::cli
