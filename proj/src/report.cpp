#include "owr/report.hpp"

#include "owr/common.hpp"
#include "owr/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace owr {

namespace fs = std::filesystem;

MetricsTable parse_metrics_table(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics CSV: empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header.front() != "epoch") throw DataError("metrics CSV: first column must be 'epoch'");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("metrics CSV: row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(header.size()));
    rows.push_back(std::move(cells));
  }

  MetricsTable table;
  for (const auto& r : rows) table.epochs.push_back(parse_double(r[0]));
  for (std::size_t c = 1; c < header.size(); ++c) {
    MetricSeries s{header[c], {}};
    bool numeric = true;
    for (const auto& r : rows) {
      if (r[c].empty()) {
        s.values.emplace_back();
        continue;
      }
      try {
        s.values.emplace_back(parse_double(r[c]));
      } catch (const DataError&) {
        numeric = false;
        break;
      }
    }
    if (numeric) table.series.push_back(std::move(s));
  }
  return table;
}

bool lower_is_better(const std::string& column) {
  return column.find("mse") != std::string::npos || column.find("loss") != std::string::npos;
}

MetricSummary summarize(const MetricSeries& series) {
  MetricSummary out;
  double sum = 0;
  long n = 0;
  const bool lower = lower_is_better(series.name);
  for (const auto& v : series.values) {
    if (!v) continue;
    out.final_value = *v;
    if (!out.best || (lower ? *v < *out.best : *v > *out.best)) out.best = *v;
    sum += *v;
    ++n;
  }
  if (n > 0) out.mean = sum / static_cast<double>(n);
  return out;
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kMargin = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  return out;
}

std::string fixed(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string render_svg(const MetricsTable& table, const std::string& title) {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  if (!table.epochs.empty()) {
    x_lo = *std::min_element(table.epochs.begin(), table.epochs.end());
    x_hi = *std::max_element(table.epochs.begin(), table.epochs.end());
  }
  for (const auto& s : table.series)
    for (const auto& v : s.values)
      if (v) {
        y_lo = any ? std::min(y_lo, *v) : *v;
        y_hi = any ? std::max(y_hi, *v) : *v;
        any = true;
      }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const auto px = [&](double x) { return kMargin + (x - x_lo) / (x_hi - x_lo) * (kWidth - 2 * kMargin); };
  const auto py = [&](double y) { return kHeight - kMargin - (y - y_lo) / (y_hi - y_lo) * (kHeight - 2 * kMargin); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "  <title>" << xml_escape(title) << "</title>\n"
     << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "  <line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
     << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "  <line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << kHeight - kMargin
     << "\" stroke=\"black\"/>\n"
     << "  <text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">epoch</text>\n"
     << "  <text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 15 << "\" text-anchor=\"middle\">" << fixed(x_lo)
     << "</text>\n"
     << "  <text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 15 << "\" text-anchor=\"middle\">"
     << fixed(x_hi) << "</text>\n"
     << "  <text x=\"" << kMargin - 5 << "\" y=\"" << kHeight - kMargin << "\" text-anchor=\"end\">" << fixed(y_lo)
     << "</text>\n"
     << "  <text x=\"" << kMargin - 5 << "\" y=\"" << kMargin + 5 << "\" text-anchor=\"end\">" << fixed(y_hi)
     << "</text>\n";
  for (std::size_t i = 0; i < table.series.size(); ++i) {
    const auto& s = table.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    os << "  <polyline data-metric=\"" << xml_escape(s.name) << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (std::size_t r = 0; r < s.values.size(); ++r) {
      if (!s.values[r]) continue;
      os << (first ? "" : " ") << fixed(px(table.epochs[r])) << ',' << fixed(py(*s.values[r]));
      first = false;
    }
    os << "\"/>\n"
       << "  <text x=\"" << kWidth - kMargin + 5 << "\" y=\"" << kMargin + 15 * static_cast<double>(i) << "\" fill=\""
       << color << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string summary_json(const MetricsTable& table) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& s : table.series) {
    const auto sum = summarize(s);
    j[s.name] = {{"final", optional_json(sum.final_value)}, {"best", optional_json(sum.best)},
                 {"mean", optional_json(sum.mean)}};
  }
  return j.dump(2);
}

ReportFiles cmd_report(const std::string& in_dir, const std::string& out_dir) {
  if (!fs::is_directory(in_dir)) throw DataError("report: input directory '" + in_dir + "' does not exist");
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") inputs.push_back(entry.path());
  std::sort(inputs.begin(), inputs.end());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("report: cannot create '" + out_dir + "'");

  ReportFiles files;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (const auto& path : inputs) {
    const std::string text = read_file(path.string());
    if (text.rfind("epoch,", 0) != 0 && text.rfind("epoch\n", 0) != 0) continue;
    const std::string stem = path.stem().string();
    MetricsTable table;
    try {
      table = parse_metrics_table(text);
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + ": " + e.what());
    }
    const std::string svg = (fs::path(out_dir) / (stem + ".svg")).string();
    write_file(svg, render_svg(table, stem));
    files.svgs.push_back(svg);
    summary[stem] = nlohmann::ordered_json::parse(summary_json(table));
  }
  if (files.svgs.empty()) throw DataError("report: no metrics CSV (header starting with 'epoch') in '" + in_dir + "'");
  files.summary = (fs::path(out_dir) / "summary.json").string();
  write_file(files.summary, summary.dump(2) + "\n");
  return files;
}

}  // namespace owr
