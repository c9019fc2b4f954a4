#include "recurnet/experiments.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace recurnet {

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::kDirect: return "direct";
    case ExperimentMode::kPretrainedTest: return "pretrained_test";
    case ExperimentMode::kTransfer: return "transfer";
  }
  return "?";
}

std::optional<ExperimentMode> parse_experiment_mode(const std::string& name) {
  if (name == "direct") return ExperimentMode::kDirect;
  if (name == "pretrained_test") return ExperimentMode::kPretrainedTest;
  if (name == "transfer") return ExperimentMode::kTransfer;
  return std::nullopt;
}

void ExperimentSpec::validate() const {
  if (correlation == CorrelationForm::kOff && divergence) {
    fail(ErrorKind::kValidation, "experiment '" + label + "': a divergence needs correlation learning");
  }
  if (correlation != CorrelationForm::kOff && !divergence) {
    fail(ErrorKind::kValidation, "experiment '" + label + "': correlation learning needs a divergence");
  }
}

std::string ExperimentSpec::key() const {
  std::string k = to_string(mode) + "-" + (fusion ? "mmff" : "nofusion") + "-" + to_string(correlation);
  if (divergence) k += "-" + to_string(*divergence);
  return k;
}

namespace {

ExperimentSpec row(std::string label, ExperimentMode mode, bool fusion, CorrelationForm form,
                   std::optional<Divergence> d) {
  return {std::move(label), mode, fusion, form, d};
}

constexpr auto kNl = CorrelationForm::kNonlinear;

}  // namespace

TableSpec table1_spec() {
  return {"table1",
          "Methods",
          {row("(1): Direct", ExperimentMode::kDirect, true, kNl, Divergence::kKl),
           row("(2): Test on pre-trained model", ExperimentMode::kPretrainedTest, true, CorrelationForm::kOff,
               std::nullopt),
           row("(3): Transfer learning", ExperimentMode::kTransfer, true, kNl, Divergence::kKl)}};
}

TableSpec table2_spec(ExperimentMode mode) {
  return {"table2",
          "Methods",
          {row("Baseline", mode, false, CorrelationForm::kOff, std::nullopt),
           row("Baseline + MMFF", mode, true, CorrelationForm::kOff, std::nullopt),
           row("Baseline + MMFF + Correlation learning", mode, true, kNl, Divergence::kKl)}};
}

TableSpec table3_spec(ExperimentMode mode) {
  return {"table3",
          "Divergence functions",
          {row("Kullback–Leibler", mode, true, kNl, Divergence::kKl),
           row("Jeffreys", mode, true, kNl, Divergence::kJeffreys),
           row("squared Hellinger", mode, true, kNl, Divergence::kHellinger2)}};
}

TableSpec table4_spec(ExperimentMode mode) {
  return {"table4",
          "Correlation expressions",
          {row("Linear", mode, true, CorrelationForm::kLinear, Divergence::kKl),
           row("Non-linear", mode, true, kNl, Divergence::kKl)}};
}

// --- running ----------------------------------------------------------------

namespace {

struct Runner {
  const AblationInputs& in;
  const ProgressFn& progress;
  std::optional<ParamTree<float>> pretrained;
  std::optional<NetworkConfig> pretrained_network;
  std::map<std::string, ExperimentOutcome> done;

  void say(const std::string& s) const {
    if (progress) progress(s);
  }

  const ParamTree<float>& source_model() {
    if (!pretrained) {
      require(!in.source.empty(), "transfer and pretrained-test rows need a source dataset");
      say("pretraining on " + std::to_string(in.source.size()) + " source cases");
      auto setup = train_setup(in.base, TrainMode::kPretrain);
      auto r = pretrain(in.source, setup);
      pretrained = std::move(r.params);
      pretrained_network = setup.network;
    }
    return *pretrained;
  }

  ExperimentOutcome run(const ExperimentSpec& spec) {
    if (auto it = done.find(spec.key()); it != done.end()) {
      ExperimentOutcome copy = it->second;
      copy.spec = spec;
      if (copy.report) copy.report->method = spec.label;
      return copy;
    }
    ExperimentOutcome out;
    out.spec = spec;
    try {
      spec.validate();
      RunConfig cfg = in.base;
      cfg.network.fusion = spec.fusion;
      cfg.network.correlation = spec.correlation;
      if (spec.correlation == CorrelationForm::kOff) cfg.network.correlation_inject = false;
      if (spec.divergence) cfg.divergence = *spec.divergence;
      cfg.validate();
      say("running " + spec.key());
      if (spec.mode == ExperimentMode::kPretrainedTest) {
        const auto& params = source_model();
        out.report = evaluate(in.test, params, *pretrained_network, TrainMode::kPretrain, spec.label);
        out.report->note = "zero-shot segmentation-only model; prediction not applicable";
      } else {
        auto setup = train_setup(cfg, TrainMode::kFull);
        ParamTree<float> init = spec.mode == ExperimentMode::kTransfer
                                    ? transfer(source_model(), setup.network, cfg.train.seed, cfg.copy_fusion)
                                    : init_params(setup.network, cfg.train.seed);
        auto r = train(in.train, std::move(init), setup);
        out.log = std::move(r.log);
        out.report = evaluate(in.test, r.params, setup.network, TrainMode::kFull, spec.label);
      }
    } catch (const std::exception& e) {
      out.error = e.what();
      say("failed " + spec.key() + ": " + out.error);
    }
    done[spec.key()] = out;
    return out;
  }
};

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << *v;
  return os.str();
}

}  // namespace

std::vector<TableResult> run_ablation(const AblationInputs& inputs, const std::vector<TableSpec>& tables,
                                      const ProgressFn& progress) {
  require(!inputs.train.empty() && !inputs.test.empty(), "ablation needs training and test cases");
  Runner runner{inputs, progress, {}, {}, {}};
  std::vector<TableResult> results;
  for (const auto& t : tables) {
    TableResult r{t, {}};
    for (const auto& spec : t.rows) r.rows.push_back(runner.run(spec));
    results.push_back(std::move(r));
  }
  return results;
}

std::string TableResult::tsv() const {
  std::ostringstream os;
  os << spec.first_column << "\tTask\tDSC (%)\tHD (px)\tSensitivity (%)\n";
  const TaskSummary none;
  for (const auto& r : rows) {
    const TaskSummary& seg = r.report ? r.report->segmentation : none;
    const TaskSummary& pred = r.report && r.report->prediction ? *r.report->prediction : none;
    os << r.spec.label << '\t' << kSegmentationTask << '\t' << cell(seg.dsc_pct) << '\t' << cell(seg.hd_px) << '\t'
       << cell(seg.sensitivity_pct) << '\n';
    os << r.spec.label << '\t' << kPredictionTask << '\t' << cell(pred.dsc_pct) << '\t' << cell(pred.hd_px) << '\t'
       << cell(pred.sensitivity_pct) << '\n';
  }
  return os.str();
}

std::string TableResult::orderings() const {
  std::ostringstream os;
  os << spec.name << " (" << spec.first_column << ")\n";
  struct Metric {
    const char* name;
    bool higher_better;
    std::optional<double> TaskSummary::*field;
  };
  const Metric metrics[] = {{"DSC", true, &TaskSummary::dsc_pct},
                            {"HD", false, &TaskSummary::hd_px},
                            {"Sensitivity", true, &TaskSummary::sensitivity_pct}};
  for (bool pred : {false, true}) {
    for (const auto& m : metrics) {
      std::vector<std::pair<double, std::string>> ranked;
      for (const auto& r : rows) {
        if (!r.report) continue;
        const TaskSummary* s = pred ? (r.report->prediction ? &*r.report->prediction : nullptr) : &r.report->segmentation;
        if (s && (s->*m.field)) ranked.emplace_back(*(s->*m.field), r.spec.label);
      }
      std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        return m.higher_better ? a.first > b.first : a.first < b.first;
      });
      os << "  " << (pred ? kPredictionTask : kSegmentationTask) << ' ' << m.name << ": ";
      for (std::size_t i = 0; i < ranked.size(); ++i) os << (i ? " > " : "") << ranked[i].second;
      if (ranked.empty()) os << "n/a";
      os << '\n';
    }
  }
  for (const auto& r : rows)
    if (!r.error.empty()) os << "  failed: " << r.spec.label << ": " << r.error << '\n';
  return os.str();
}

void write_ablation(const std::filesystem::path& dir, const std::vector<TableResult>& tables) {
  std::string orderings;
  for (const auto& t : tables) {
    write_text(dir / (t.spec.name + ".tsv"), t.tsv());
    orderings += t.orderings();
    for (const auto& r : t.rows) {
      const auto run_dir = dir / "runs" / r.spec.key();
      if (!r.log.epochs.empty()) write_text(run_dir / "train-log.jsonl", r.log.to_jsonl());
      if (r.report) {
        write_text(run_dir / "report.json", report_to_json(*r.report));
        write_text(run_dir / "cases.jsonl", report_cases_jsonl(*r.report));
      }
      if (!r.error.empty()) write_text(run_dir / "error.txt", r.error + "\n");
    }
  }
  write_text(dir / "orderings.txt", orderings);
}

}  // namespace recurnet
