#include <doctest.h>

#include <set>
#include <sstream>

#include "recurnet/experiments.hpp"
#include "support.hpp"

using namespace recurnet;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

AblationInputs tiny_inputs(bool with_source) {
  RunConfig base;
  base.network.levels = 2;
  base.network.base_channels = 2;
  base.network.dilation_rates = {1, 2};
  base.network.input_size = 16;
  base.train.max_epochs = 1;
  base.train.batch_size = 4;
  base.synth.image_size = 32;
  base.synth.tumor_radius_min = 4;
  base.synth.tumor_radius_max = 7;
  base.synth.recurrence_offset_min = 2;
  base.synth.recurrence_offset_max = 5;
  const auto cases = prepare_cases(generate_dataset(base.synth, 6), 16);
  AblationInputs in;
  in.base = base;
  in.train.assign(cases.begin(), cases.begin() + 4);
  in.test.assign(cases.begin() + 4, cases.end());
  if (with_source) in.source = in.train;
  return in;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("table layouts") {
  const auto t1 = table1_spec();
  REQUIRE(t1.rows.size() == 3);
  CHECK(t1.rows[0].label == "(1): Direct");
  CHECK(t1.rows[1].label == "(2): Test on pre-trained model");
  CHECK(t1.rows[2].label == "(3): Transfer learning");
  CHECK(t1.rows[1].mode == ExperimentMode::kPretrainedTest);

  const auto t2 = table2_spec(ExperimentMode::kDirect);
  CHECK(t2.first_column == "Methods");
  REQUIRE(t2.rows.size() == 3);
  CHECK(t2.rows[0].label == "Baseline");
  CHECK(!t2.rows[0].fusion);
  CHECK(t2.rows[0].correlation == CorrelationForm::kOff);
  CHECK(t2.rows[1].label == "Baseline + MMFF");
  CHECK(t2.rows[2].label == "Baseline + MMFF + Correlation learning");

  const auto t3 = table3_spec(ExperimentMode::kTransfer);
  CHECK(t3.first_column == "Divergence functions");
  REQUIRE(t3.rows.size() == 3);
  CHECK(t3.rows[0].divergence == Divergence::kKl);
  CHECK(t3.rows[1].divergence == Divergence::kJeffreys);
  CHECK(t3.rows[2].divergence == Divergence::kHellinger2);

  const auto t4 = table4_spec(ExperimentMode::kTransfer);
  CHECK(t4.first_column == "Correlation expressions");
  REQUIRE(t4.rows.size() == 2);
  CHECK(t4.rows[0].correlation == CorrelationForm::kLinear);
  CHECK(t4.rows[1].correlation == CorrelationForm::kNonlinear);

  for (const auto& t : {t1, t2, t3, t4}) {
    std::set<std::string> labels;
    for (const auto& r : t.rows) {
      CHECK_NOTHROW(r.validate());
      CHECK(labels.insert(r.label).second);
    }
  }
}

TEST_CASE("experiment keys and validation") {
  ExperimentSpec s{"x", ExperimentMode::kDirect, true, CorrelationForm::kNonlinear, Divergence::kKl};
  CHECK(s.key() == "direct-mmff-nonlinear-kl");
  s.divergence.reset();
  CHECK_THROWS_AS(s.validate(), Error);
  s.correlation = CorrelationForm::kOff;
  CHECK_NOTHROW(s.validate());
  CHECK(s.key() == "direct-mmff-off");
  for (auto m : {ExperimentMode::kDirect, ExperimentMode::kPretrainedTest, ExperimentMode::kTransfer})
    CHECK(parse_experiment_mode(to_string(m)) == m);
  CHECK(!parse_experiment_mode("sideways"));
}

TEST_CASE("ablation run writes tables with the expected shape") {
  const auto in = tiny_inputs(true);
  std::vector<std::string> progress;
  const auto tables = run_ablation(in, {table1_spec(), table4_spec(ExperimentMode::kTransfer)},
                                   [&](const std::string& s) { progress.push_back(s); });
  REQUIRE(tables.size() == 2);
  for (const auto& t : tables) {
    const auto lines = lines_of(t.tsv());
    CHECK(lines.size() == 2 * t.spec.rows.size() + 1);
    CHECK(lines[0] == t.spec.first_column + "\tTask\tDSC (%)\tHD (px)\tSensitivity (%)");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      std::size_t tabs = 0;
      for (char c : lines[i]) tabs += c == '\t';
      CHECK(tabs == 4);
    }
    for (const auto& r : t.rows) CHECK(r.error.empty());
  }
  // The pretrained-test row has no prediction branch.
  const auto t1 = lines_of(tables[0].tsv());
  CHECK(t1[4] == "(2): Test on pre-trained model\tPrediction\tn/a\tn/a\tn/a");
  // Table 1 row 3 and table 4 row 2 are the same run and share one report.
  REQUIRE(tables[0].rows[2].report);
  CHECK(tables[0].rows[2].report->cases == tables[1].rows[1].report->cases);
  CHECK(std::count_if(progress.begin(), progress.end(), [](const std::string& s) {
          return s.rfind("pretraining", 0) == 0;
        }) == 1);

  test::TempDir dir("ablate");
  write_ablation(dir.path(), tables);
  CHECK(std::filesystem::exists(dir.path() / "table1.tsv"));
  CHECK(std::filesystem::exists(dir.path() / "table4.tsv"));
  CHECK(std::filesystem::exists(dir.path() / "orderings.txt"));
  CHECK(std::filesystem::exists(dir.path() / "runs" / "transfer-mmff-linear-kl" / "train-log.jsonl"));
  CHECK(read_text(dir.path() / "table1.tsv") == tables[0].tsv());
  CHECK(read_text(dir.path() / "orderings.txt").find("Segmentation DSC: ") != std::string::npos);
}

TEST_CASE("failed rows are recorded and print n/a") {
  const auto in = tiny_inputs(false);
  const auto tables = run_ablation(in, {table3_spec(ExperimentMode::kTransfer)});
  REQUIRE(tables.size() == 1);
  for (const auto& r : tables[0].rows) {
    CHECK(!r.report);
    CHECK(r.error.find("source") != std::string::npos);
  }
  const auto lines = lines_of(tables[0].tsv());
  CHECK(lines.size() == 7);
  CHECK(lines[1] == "Kullback–Leibler\tSegmentation\tn/a\tn/a\tn/a");
  CHECK(tables[0].orderings().find("failed: Jeffreys") != std::string::npos);
}

}  // TEST_SUITE
