#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "recurnet/config.hpp"

namespace recurnet {

enum class ExperimentMode { kDirect, kPretrainedTest, kTransfer };
std::string to_string(ExperimentMode mode);
std::optional<ExperimentMode> parse_experiment_mode(const std::string& name);

struct ExperimentSpec {
  std::string label;
  ExperimentMode mode = ExperimentMode::kDirect;
  bool fusion = true;
  CorrelationForm correlation = CorrelationForm::kNonlinear;
  // Must be empty when correlation is off.
  std::optional<Divergence> divergence = Divergence::kKl;

  void validate() const;
  // Identifies the trained model; specs with equal keys share one run.
  std::string key() const;
};

struct TableSpec {
  std::string name;          // file stem, e.g. "table2"
  std::string first_column;  // header of the row-label column
  std::vector<ExperimentSpec> rows;
};

// Transfer-mode rows need a source set; without one they fall back to direct.
TableSpec table1_spec();
TableSpec table2_spec(ExperimentMode mode);
TableSpec table3_spec(ExperimentMode mode);
TableSpec table4_spec(ExperimentMode mode);

struct AblationInputs {
  RunConfig base;
  std::vector<PreparedCase> train;
  std::vector<PreparedCase> test;
  // Pretraining cases; required by transfer and pretrained-test rows.
  std::vector<PreparedCase> source;
};

struct ExperimentOutcome {
  ExperimentSpec spec;
  std::optional<MetricReport> report;
  TrainLog log;
  std::string error;
};

struct TableResult {
  TableSpec spec;
  std::vector<ExperimentOutcome> rows;

  // Failed rows print n/a in every cell.
  std::string tsv() const;
  // Per-metric row rankings; descriptive only.
  std::string orderings() const;
};

using ProgressFn = std::function<void(const std::string&)>;

// Trains and evaluates every distinct row once, with the seeds of `base`.
// A failing row is recorded and the remaining rows still run.
std::vector<TableResult> run_ablation(const AblationInputs& inputs, const std::vector<TableSpec>& tables,
                                      const ProgressFn& progress = {});

// <dir>/<table>.tsv, <dir>/orderings.txt and per-run logs and reports.
void write_ablation(const std::filesystem::path& dir, const std::vector<TableResult>& tables);

}  // namespace recurnet
