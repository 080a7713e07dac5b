#pragma once

#include <optional>
#include <string>
#include <vector>

namespace owr {

/// One numeric column of a metrics table. Empty cells are absent values.
struct MetricSeries {
  std::string name;
  std::vector<std::optional<double>> values;
};

struct MetricsTable {
  std::vector<double> epochs;
  std::vector<MetricSeries> series;
};

/// Parses a CSV whose first column is `epoch`. Columns holding any
/// non-numeric, non-empty cell (such as `domain`) are dropped.
MetricsTable parse_metrics_table(const std::string& csv_text);

struct MetricSummary {
  std::optional<double> final_value, best, mean;
};

/// Lower is better for columns whose name contains "mse" or "loss".
bool lower_is_better(const std::string& column);
MetricSummary summarize(const MetricSeries& series);

std::string render_svg(const MetricsTable& table, const std::string& title);
/// {"<column>": {"final":..,"best":..,"mean":..}, ...}; absent values are null.
std::string summary_json(const MetricsTable& table);

struct ReportFiles {
  std::vector<std::string> svgs;
  std::string summary;
};

/// Reports every `*.csv` in `in_dir` whose header starts with `epoch`.
/// Writes `<stem>.svg` per file and a combined `summary.json` keyed by stem.
ReportFiles cmd_report(const std::string& in_dir, const std::string& out_dir);

}  // namespace owr
