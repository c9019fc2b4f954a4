#include "recurnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace recurnet {

using nlohmann::json;

Mask binarize(const Slice& prob, double threshold) {
  Mask m(prob.height, prob.width);
  for (std::size_t i = 0; i < prob.size(); ++i) m.pixels[i] = prob.pixels[i] >= threshold ? 1 : 0;
  return m;
}

ConfusionCounts confusion_counts(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) {
    fail(ErrorKind::kShapeMismatch, "prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                                        " vs ground truth " + std::to_string(gt.height) + "x" +
                                        std::to_string(gt.width));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dsc(const ConfusionCounts& c) {
  if (dsc_undefined(c)) return 1.0;
  return 2.0 * double(c.tp) / double(2 * c.tp + c.fp + c.fn);
}

std::optional<double> sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fn);
}

std::vector<Point> surface_points(const Mask& m) {
  const int h = int(m.height), w = int(m.width);
  auto inside = [&](int y, int x) { return y >= 0 && x >= 0 && y < h && x < w && m.at(y, x) != 0; };
  std::vector<Point> pts;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!inside(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) pts.push_back({y, x});
    }
  }
  require(!pts.empty(), "surface_points: empty mask has no surface");
  return pts;
}

namespace {

constexpr double kFar = 1e20;

// Lower envelope of the parabolas rooted at finite samples; squared
// distances along one line. Entries with no finite sample stay at kFar.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = int(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    double s = -std::numeric_limits<double>::infinity();
    while (k >= 0) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    if (k < 0) s = -std::numeric_limits<double>::infinity();
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  if (k < 0) {
    std::fill(d.begin(), d.begin() + n, kFar);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest seed.
std::vector<double> squared_distance_transform(std::size_t h, std::size_t w, const std::vector<Point>& seeds) {
  std::vector<double> grid(h * w, kFar);
  for (const auto& p : seeds) grid[std::size_t(p.row) * w + std::size_t(p.col)] = 0.0;
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  f.resize(h), d.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    edt_1d(f, d, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
  }
  f.resize(w), d.resize(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) f[x] = grid[y * w + x];
    edt_1d(f, d, v, z);
    for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = d[x];
  }
  return grid;
}

bool empty(const Mask& m) {
  return std::all_of(m.pixels.begin(), m.pixels.end(), [](std::uint8_t v) { return v == 0; });
}

}  // namespace

std::optional<double> hausdorff(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) fail(ErrorKind::kShapeMismatch, "hausdorff: mask shapes differ");
  if (empty(pred) || empty(gt)) return std::nullopt;
  const auto s = surface_points(pred), r = surface_points(gt);
  const auto to_r = squared_distance_transform(gt.height, gt.width, r);
  const auto to_s = squared_distance_transform(pred.height, pred.width, s);
  double worst = 0.0;
  for (const auto& p : s) worst = std::max(worst, to_r[std::size_t(p.row) * gt.width + std::size_t(p.col)]);
  for (const auto& p : r) worst = std::max(worst, to_s[std::size_t(p.row) * pred.width + std::size_t(p.col)]);
  return std::sqrt(worst);
}

TaskMetrics task_metrics(const Mask& pred, const Mask& gt) {
  TaskMetrics t;
  t.counts = confusion_counts(pred, gt);
  t.dsc = dsc(t.counts);
  t.dsc_undefined = dsc_undefined(t.counts);
  t.sensitivity = sensitivity(t.counts);
  t.hausdorff = hausdorff(pred, gt);
  return t;
}

namespace {

TaskSummary summarize(const std::vector<const TaskMetrics*>& tasks) {
  TaskSummary s;
  s.cases = tasks.size();
  double dsc_sum = 0, hd_sum = 0, sens_sum = 0;
  std::size_t dsc_n = 0, hd_n = 0, sens_n = 0;
  for (const auto* t : tasks) {
    if (t->dsc_undefined) ++s.dsc_excluded;
    else dsc_sum += t->dsc, ++dsc_n;
    if (t->hausdorff) hd_sum += *t->hausdorff, ++hd_n;
    else ++s.hd_excluded;
    if (t->sensitivity) sens_sum += *t->sensitivity, ++sens_n;
    else ++s.sensitivity_excluded;
  }
  if (dsc_n) s.dsc_pct = 100.0 * dsc_sum / double(dsc_n);
  if (hd_n) s.hd_px = hd_sum / double(hd_n);
  if (sens_n) s.sensitivity_pct = 100.0 * sens_sum / double(sens_n);
  return s;
}

}  // namespace

MetricReport aggregate_report(std::string method, std::vector<CaseMetrics> cases) {
  require(!cases.empty(), "aggregate_report needs at least one case");
  std::sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  MetricReport r;
  r.method = std::move(method);
  std::vector<const TaskMetrics*> seg, pred;
  for (const auto& c : cases) {
    seg.push_back(&c.segmentation);
    if (c.prediction) pred.push_back(&*c.prediction);
  }
  if (!pred.empty() && pred.size() != cases.size()) {
    fail(ErrorKind::kValidation, "aggregate_report: prediction metrics present for only some cases");
  }
  r.segmentation = summarize(seg);
  if (!pred.empty()) r.prediction = summarize(pred);
  r.cases = std::move(cases);
  return r;
}

// --- serialization ----------------------------------------------------------

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json to_json(const TaskMetrics& t) {
  return json{{"tp", t.counts.tp},       {"fp", t.counts.fp},
              {"fn", t.counts.fn},       {"tn", t.counts.tn},
              {"dsc", t.dsc},            {"dsc_undefined", t.dsc_undefined},
              {"sensitivity", opt(t.sensitivity)}, {"hausdorff", opt(t.hausdorff)}};
}

TaskMetrics task_from_json(const json& j) {
  TaskMetrics t;
  t.counts = {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("fn").get<std::uint64_t>(),
              j.at("tn").get<std::uint64_t>()};
  t.dsc = j.at("dsc").get<double>();
  t.dsc_undefined = j.at("dsc_undefined").get<bool>();
  t.sensitivity = get_opt<double>(j, "sensitivity");
  t.hausdorff = get_opt<double>(j, "hausdorff");
  return t;
}

json to_json(const CaseMetrics& c) {
  json j{{"id", c.id}, {"segmentation", to_json(c.segmentation)}};
  j["prediction"] = c.prediction ? to_json(*c.prediction) : json(nullptr);
  return j;
}

CaseMetrics case_from_json(const json& j) {
  CaseMetrics c;
  c.id = j.at("id").get<std::string>();
  c.segmentation = task_from_json(j.at("segmentation"));
  if (j.contains("prediction") && !j.at("prediction").is_null()) c.prediction = task_from_json(j.at("prediction"));
  return c;
}

json to_json(const TaskSummary& s) {
  return json{{"cases", s.cases},
              {"dsc_pct", opt(s.dsc_pct)},
              {"hd_px", opt(s.hd_px)},
              {"sensitivity_pct", opt(s.sensitivity_pct)},
              {"dsc_excluded", s.dsc_excluded},
              {"hd_excluded", s.hd_excluded},
              {"sensitivity_excluded", s.sensitivity_excluded}};
}

TaskSummary summary_from_json(const json& j) {
  TaskSummary s;
  s.cases = j.at("cases").get<std::size_t>();
  s.dsc_pct = get_opt<double>(j, "dsc_pct");
  s.hd_px = get_opt<double>(j, "hd_px");
  s.sensitivity_pct = get_opt<double>(j, "sensitivity_pct");
  s.dsc_excluded = j.at("dsc_excluded").get<std::size_t>();
  s.hd_excluded = j.at("hd_excluded").get<std::size_t>();
  s.sensitivity_excluded = j.at("sensitivity_excluded").get<std::size_t>();
  return s;
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
  json j{{"method", report.method}, {"note", report.note}, {"segmentation", to_json(report.segmentation)}};
  j["prediction"] = report.prediction ? to_json(*report.prediction) : json(nullptr);
  j["cases"] = json::array();
  for (const auto& c : report.cases) j["cases"].push_back(to_json(c));
  return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricReport r;
    r.method = j.at("method").get<std::string>();
    r.note = j.value("note", "");
    r.segmentation = summary_from_json(j.at("segmentation"));
    if (j.contains("prediction") && !j.at("prediction").is_null()) r.prediction = summary_from_json(j.at("prediction"));
    for (const auto& c : j.at("cases")) r.cases.push_back(case_from_json(c));
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed report: ") + e.what());
  }
}

std::string report_cases_jsonl(const MetricReport& report) {
  std::string out;
  for (const auto& c : report.cases) out += to_json(c).dump() + "\n";
  return out;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << *v;
  return os.str();
}

}  // namespace

std::string format_table_tsv(const std::vector<MetricReport>& reports, const std::string& first_column) {
  std::ostringstream os;
  os << first_column << "\tTask\tDSC (%)\tHD (px)\tSensitivity (%)\n";
  for (const auto& r : reports) {
    const auto& s = r.segmentation;
    os << r.method << '\t' << kSegmentationTask << '\t' << cell(s.dsc_pct) << '\t' << cell(s.hd_px) << '\t'
       << cell(s.sensitivity_pct) << '\n';
    const TaskSummary none;
    const auto& p = r.prediction ? *r.prediction : none;
    os << r.method << '\t' << kPredictionTask << '\t' << cell(p.dsc_pct) << '\t' << cell(p.hd_px) << '\t'
       << cell(p.sensitivity_pct) << '\n';
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kMissingFile, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace recurnet
