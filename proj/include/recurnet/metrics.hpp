#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recurnet/data_model.hpp"

namespace recurnet {

// Pixels >= threshold become 1.
Mask binarize(const Slice& prob, double threshold = 0.5);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion_counts(const Mask& pred, const Mask& gt);

// 2tp / (2tp + fp + fn). Both masks empty counts as 1.0; see dsc_undefined.
double dsc(const ConfusionCounts& c);
inline bool dsc_undefined(const ConfusionCounts& c) { return c.tp == 0 && c.fp == 0 && c.fn == 0; }

// tp / (tp + fn); nullopt when the ground truth is empty.
std::optional<double> sensitivity(const ConfusionCounts& c);

struct Point {
  int row = 0;
  int col = 0;
  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

// Mask pixels with a 4-neighbour outside the mask or outside the image,
// in row-major order. Throws on an empty mask.
std::vector<Point> surface_points(const Mask& m);

// Exact symmetric Hausdorff distance (pixels) between the surface point sets.
// nullopt when either mask is empty.
std::optional<double> hausdorff(const Mask& pred, const Mask& gt);

// --- reports ----------------------------------------------------------------

struct TaskMetrics {
  ConfusionCounts counts;
  double dsc = 0.0;
  bool dsc_undefined = false;
  std::optional<double> sensitivity;
  std::optional<double> hausdorff;

  friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

TaskMetrics task_metrics(const Mask& pred, const Mask& gt);

struct CaseMetrics {
  std::string id;
  TaskMetrics segmentation;
  std::optional<TaskMetrics> prediction;

  friend bool operator==(const CaseMetrics&, const CaseMetrics&) = default;
};

// Means over cases; DSC and Sensitivity in percent, HD in pixels.
struct TaskSummary {
  std::size_t cases = 0;
  std::optional<double> dsc_pct;
  std::optional<double> hd_px;
  std::optional<double> sensitivity_pct;
  std::size_t dsc_excluded = 0;
  std::size_t hd_excluded = 0;
  std::size_t sensitivity_excluded = 0;

  friend bool operator==(const TaskSummary&, const TaskSummary&) = default;
};

struct MetricReport {
  std::string method;
  std::vector<CaseMetrics> cases;
  TaskSummary segmentation;
  // Absent when the model has no prediction branch.
  std::optional<TaskSummary> prediction;
  std::string note;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Cases are sorted by id before summation.
MetricReport aggregate_report(std::string method, std::vector<CaseMetrics> cases);

std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

// One JSON object per case.
std::string report_cases_jsonl(const MetricReport& report);

inline constexpr const char* kSegmentationTask = "Segmentation";
inline constexpr const char* kPredictionTask = "Prediction";

// Two rows per report (Segmentation, Prediction) under the columns
// <first_column>, Task, DSC (%), HD (px), Sensitivity (%). Missing values print as n/a.
std::string format_table_tsv(const std::vector<MetricReport>& reports,
                             const std::string& first_column = "Methods");

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace recurnet
