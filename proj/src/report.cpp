#include "manai/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "manai/error.hpp"
#include "text_util.hpp"

namespace manai {

namespace fs = std::filesystem;

std::string_view to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::Term: return "term";
    case ReportFormat::Html: return "html";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Machine: return "machine";
  }
  return "term";
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  for (auto f : {ReportFormat::Term, ReportFormat::Html, ReportFormat::Csv,
                 ReportFormat::Machine}) {
    if (to_string(f) == text) return f;
  }
  return std::nullopt;
}

std::string_view to_string(Trend trend) {
  switch (trend) {
    case Trend::Increase: return "increase";
    case Trend::Decrease: return "decrease";
    case Trend::Flat: return "flat";
  }
  return "flat";
}

Trend classify_trend(std::span<const double> series, double threshold) {
  if (series.size() < 2) return Trend::Flat;
  const double prev = series[series.size() - 2];
  const double last = series.back();
  if (last < prev * (1.0 - threshold)) return Trend::Decrease;
  if (last > prev * (1.0 + threshold)) return Trend::Increase;
  return Trend::Flat;
}

std::vector<int> color_buckets(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t below = 0;
    for (double v : values) below += v < values[i] ? 1 : 0;
    out[i] = static_cast<int>(below * 5 / n);
  }
  return out;
}

std::vector<int> sparkline_levels(std::span<const double> series) {
  std::vector<int> out;
  if (series.empty()) return out;
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  const double range = *hi - *lo;
  for (double v : series) {
    if (!(range > 0.0)) {
      out.push_back(3);
    } else {
      out.push_back(static_cast<int>(std::lround((v - *lo) / range * 7.0)));
    }
  }
  return out;
}

std::string format_sig3(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value < 0 ? "-inf" : "inf";
  if (value == 0.0) return "0.00";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", value);
  std::string text(buf);
  std::string sign;
  if (text.front() == '-') {
    sign = "-";
    text.erase(0, 1);
  }
  const auto e_pos = text.find('e');
  const int exponent = std::stoi(text.substr(e_pos + 1));
  std::string digits = text.substr(0, 1) + text.substr(2, 2);
  std::string out;
  if (exponent >= 2) {
    out = digits + std::string(static_cast<std::size_t>(exponent - 2), '0');
  } else if (exponent >= 0) {
    out = digits.substr(0, exponent + 1) + "." + digits.substr(exponent + 1);
  } else {
    out = "0." + std::string(static_cast<std::size_t>(-exponent - 1), '0') + digits;
  }
  return sign + out;
}

namespace {

constexpr std::string_view kSparkGlyphs[] = {"▁", "▂", "▃", "▄",
                                             "▅", "▆", "▇", "█"};
constexpr std::string_view kBlock = "█";
constexpr std::string_view kTermColors[] = {"\x1b[32m", "\x1b[92m", "\x1b[33m",
                                            "\x1b[91m", "\x1b[31m"};
constexpr std::string_view kReset = "\x1b[0m";
constexpr std::string_view kHtmlColors[] = {"#2e7d32", "#7cb342", "#f9a825", "#ef6c00",
                                            "#c62828"};
constexpr std::string_view kLowConfidence = "< update interval";
constexpr std::string_view kCsvHeader = "test,domain,statistic,value,unit\n";

std::string_view arrow(Trend trend) {
  switch (trend) {
    case Trend::Increase: return "↑";
    case Trend::Decrease: return "↓";
    case Trend::Flat: return "→";
  }
  return "→";
}

std::string percent(double ratio) {
  std::string text = format_sig3(ratio * 100.0);
  if (ratio > 0.0) text.insert(text.begin(), '+');
  return text + "%";
}

std::size_t display_width(std::string_view text) {
  std::size_t width = 0;
  bool escape = false;
  for (unsigned char c : text) {
    if (escape) {
      escape = c != 'm';
    } else if (c == 0x1b) {
      escape = true;
    } else {
      width += (c & 0xC0) != 0x80 ? 1 : 0;
    }
  }
  return width;
}

std::string pad(std::string_view text, std::size_t width, bool right = false) {
  const std::size_t w = display_width(text);
  std::string fill(w < width ? width - w : 0, ' ');
  return right ? fill + std::string(text) : std::string(text) + fill;
}

std::string html_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void csv_row(std::string& out, std::string_view test, std::string_view domain,
             std::string_view statistic, double value, std::string_view unit) {
  out += csv_field(test) + "," + csv_field(domain) + "," + csv_field(statistic) + "," +
         detail::format_exact(value) + "," + std::string(unit) + "\n";
}

// Simple aligned text table.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : rows_{std::move(header)} {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string str() const {
    std::vector<std::size_t> widths;
    for (const auto& row : rows_) {
      widths.resize(std::max(widths.size(), row.size()), 0);
      for (std::size_t i = 0; i < row.size(); ++i) {
        widths[i] = std::max(widths[i], display_width(row[i]));
      }
    }
    std::string out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      std::string line;
      for (std::size_t i = 0; i < rows_[r].size(); ++i) {
        if (i > 0) line += "  ";
        // Text columns left-aligned, numbers right-aligned.
        const bool numeric = r > 0 && i > 0 && !rows_[r][i].empty() &&
                             (std::isdigit(static_cast<unsigned char>(rows_[r][i][0])) ||
                              rows_[r][i][0] == '-' || rows_[r][i][0] == '+');
        line += pad(rows_[r][i], widths[i], numeric);
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
      if (r == 0) {
        std::size_t total = 0;
        for (auto w : widths) total += w;
        out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::vector<EnergyDomain> view_domains(const ReportRequest& request,
                                       const std::set<EnergyDomain>& present) {
  if (request.domains.empty()) return {present.begin(), present.end()};
  std::vector<EnergyDomain> out;
  for (const auto& d : request.domains) {
    if (present.contains(d)) out.push_back(d);
  }
  return out;
}

EnergyDomain highlight_domain(const ReportRequest& request,
                              const std::vector<EnergyDomain>& domains) {
  if (domains.empty() ||
      std::find(domains.begin(), domains.end(), request.highlight) != domains.end()) {
    return request.highlight;
  }
  return domains.front();
}

std::set<EnergyDomain> record_domains(const RevisionRecord& record) {
  std::set<EnergyDomain> out(record.probe.domains.begin(), record.probe.domains.end());
  for (const auto& [id, summary] : record.summaries) {
    for (const auto& [domain, stats] : summary.energy_j) out.insert(domain);
  }
  return out;
}

double mean_energy(const TestSummary& summary, const EnergyDomain& domain) {
  auto it = summary.energy_j.find(domain);
  return it == summary.energy_j.end() ? 0.0 : it->second.mean;
}

std::string status_counts(const TestSummary& s) {
  return std::to_string(s.pass_count) + "/" + std::to_string(s.fail_count) + "/" +
         std::to_string(s.skip_count);
}

struct Bar {
  std::string label;
  double value = 0.0;
  int bucket = 0;
};

std::vector<Bar> bars_for(const RevisionRecord& record, const EnergyDomain& domain) {
  std::vector<Bar> bars;
  std::vector<double> values;
  for (const auto& [id, summary] : record.summaries) {
    bars.push_back({id.str(), mean_energy(summary, domain), 0});
    values.push_back(bars.back().value);
  }
  auto buckets = color_buckets(values);
  for (std::size_t i = 0; i < bars.size(); ++i) bars[i].bucket = buckets[i];
  return bars;
}

std::string term_bars(const std::vector<Bar>& bars, const ReportRequest& request,
                      std::string_view title) {
  std::size_t label_width = 0;
  double max_value = 0.0;
  for (const auto& bar : bars) {
    label_width = std::max(label_width, display_width(bar.label));
    max_value = std::max(max_value, bar.value);
  }
  const int area = std::max(10, request.width - static_cast<int>(label_width) - 14);
  std::string out = std::string(title) + "\n";
  for (const auto& bar : bars) {
    const int cells =
        max_value > 0.0 ? static_cast<int>(std::lround(bar.value / max_value * area)) : 0;
    std::string blocks;
    for (int i = 0; i < cells; ++i) blocks += kBlock;
    if (request.color && cells > 0) {
      blocks = std::string(kTermColors[bar.bucket]) + blocks + std::string(kReset);
    }
    out += pad(bar.label, label_width) + "  " + blocks +
           std::string(static_cast<std::size_t>(area - cells), ' ') + "  " +
           format_sig3(bar.value) + "\n";
  }
  return out;
}

std::string svg_bars(const std::vector<Bar>& bars) {
  constexpr int kRow = 24;
  constexpr int kLabel = 260;
  constexpr int kArea = 480;
  double max_value = 0.0;
  for (const auto& bar : bars) max_value = std::max(max_value, bar.value);
  const int height = kRow * static_cast<int>(bars.size()) + 8;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + kArea + 80
      << "\" height=\"" << height << "\">\n";
  int y = 4;
  for (const auto& bar : bars) {
    const long w = max_value > 0.0 ? std::lround(bar.value / max_value * kArea) : 0;
    out << "<text x=\"0\" y=\"" << y + 15 << "\">" << html_escape(bar.label)
        << "</text>\n";
    out << "<rect x=\"" << kLabel << "\" y=\"" << y << "\" width=\"" << w
        << "\" height=\"" << kRow - 6 << "\" fill=\"" << kHtmlColors[bar.bucket]
        << "\"/>\n";
    out << "<text x=\"" << kLabel + w + 6 << "\" y=\"" << y + 15 << "\">"
        << format_sig3(bar.value) << " J</text>\n";
    y += kRow;
  }
  out << "</svg>\n";
  return out.str();
}

std::string html_page(std::string_view title, std::string_view body) {
  std::string out =
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>";
  out += html_escape(title);
  out += "</title>\n<style>\n"
         "body{font-family:sans-serif;margin:2em;color:#222}\n"
         "table{border-collapse:collapse;margin-bottom:2em}\n"
         "th,td{border:1px solid #ccc;padding:4px 8px;text-align:right}\n"
         "th:first-child,td:first-child{text-align:left}\n"
         "td.note{color:#b71c1c;text-align:left}\n"
         "svg text{font-size:12px;font-family:monospace}\n"
         "</style>\n</head>\n<body>\n<h1>";
  out += html_escape(title);
  out += "</h1>\n";
  out += body;
  out += "</body>\n</html>\n";
  return out;
}

std::string html_table(const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows,
                       std::size_t note_column = std::string::npos) {
  std::string out = "<table>\n<tr>";
  for (const auto& h : header) out += "<th>" + html_escape(h) + "</th>";
  out += "</tr>\n";
  for (const auto& row : rows) {
    out += "<tr>";
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += i == note_column ? "<td class=\"note\">" : "<td>";
      out += html_escape(row[i]) + "</td>";
    }
    out += "</tr>\n";
  }
  return out + "</table>\n";
}

std::string record_heading(const RevisionRecord& record) {
  std::string out = "revision " + record.revision_label + ", recorded " +
                    format_timestamp(record.created_at_ns) + ", probe " +
                    std::string(to_string(record.probe.backend)) + ", " +
                    format_sig3(record.sampling_rate_hz) + " Hz, " +
                    std::to_string(record.iterations) + " iteration(s)";
  if (record.baseline) {
    out += ", idle baseline subtracted (extension:";
    for (const auto& [domain, watts] : record.baseline->power_w) {
      out += " " + to_string(domain) + " " + format_sig3(watts) + " W";
    }
    out += ")";
  }
  return out;
}

void summary_csv(std::string& out, const TestSummary& s,
                 const std::vector<EnergyDomain>& domains, std::string_view prefix) {
  const std::string test = s.test.str();
  for (const auto& domain : domains) {
    const std::string dom = to_string(domain);
    auto e = s.energy_j.find(domain);
    auto p = s.power_w.find(domain);
    if (e == s.energy_j.end() || p == s.power_w.end()) continue;
    for (auto [stats, name, unit] :
         {std::tuple{&e->second, "energy", "J"}, std::tuple{&p->second, "power", "W"}}) {
      const std::string base = std::string(prefix) + name;
      csv_row(out, test, dom, base + "_mean", stats->mean, unit);
      csv_row(out, test, dom, base + "_median", stats->median, unit);
      csv_row(out, test, dom, base + "_stddev", stats->stddev, unit);
      csv_row(out, test, dom, base + "_min", stats->min, unit);
      csv_row(out, test, dom, base + "_max", stats->max, unit);
    }
  }
  const std::string p(prefix);
  csv_row(out, test, "all", p + "duration_mean", s.mean_duration_s, "s");
  csv_row(out, test, "all", p + "iterations", s.iterations, "count");
  csv_row(out, test, "all", p + "pass", s.pass_count, "count");
  csv_row(out, test, "all", p + "fail", s.fail_count, "count");
  csv_row(out, test, "all", p + "skip", s.skip_count, "count");
  csv_row(out, test, "all", p + "low_confidence", s.any_low_confidence ? 1.0 : 0.0,
          "flag");
}

std::string machine_array(const std::vector<RevisionRecord>& records) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string text = serialize_record(records[i]);
    while (!text.empty() && text.back() == '\n') text.pop_back();
    out += text;
    out += i + 1 < records.size() ? ",\n" : "\n";
  }
  return out + "]\n";
}

}  // namespace

std::vector<EvolutionGlyph> make_glyphs(std::span<const HistorySeries> history,
                                        const EnergyDomain& domain, double threshold) {
  std::vector<EvolutionGlyph> glyphs;
  std::vector<double> latest;
  for (const auto& series : history) {
    if (series.points.empty()) {
      throw Error(ErrorCode::NoHistory, "no stored history for " + series.test.str());
    }
    EvolutionGlyph glyph;
    glyph.test = series.test;
    for (const auto& point : series.points) {
      glyph.revisions.push_back(point.revision_label);
      glyph.series.push_back(mean_energy(point.summary, domain));
    }
    glyph.trend = classify_trend(glyph.series, threshold);
    if (glyph.series.size() >= 2) {
      const double prev = glyph.series[glyph.series.size() - 2];
      if (prev != 0.0) glyph.change = (glyph.series.back() - prev) / prev;
    }
    glyph.levels = sparkline_levels(glyph.series);
    latest.push_back(glyph.series.back());
    glyphs.push_back(std::move(glyph));
  }
  auto buckets = color_buckets(latest);
  for (std::size_t i = 0; i < glyphs.size(); ++i) glyphs[i].color_bucket = buckets[i];
  return glyphs;
}

std::string render_summary(const RevisionRecord& record, const ReportRequest& request) {
  if (record.summaries.empty()) {
    throw Error(ErrorCode::EmptyScope,
                "revision " + record.revision_label + " has no test results");
  }
  const auto domains = view_domains(request, record_domains(record));
  const EnergyDomain highlight = highlight_domain(request, domains);

  if (request.format == ReportFormat::Machine) return serialize_record(record);
  if (request.format == ReportFormat::Csv) {
    std::string out(kCsvHeader);
    for (const auto& [id, summary] : record.summaries) summary_csv(out, summary, domains, "");
    return out;
  }

  const std::vector<std::string> header = {
      "test",     "domain",   "n",       "E mean J", "E median J", "E sd J",
      "P mean W", "P median W", "P sd W", "dur s",    "pass/fail/skip", "note"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& [id, s] : record.summaries) {
    for (const auto& domain : domains) {
      auto e = s.energy_j.find(domain);
      auto p = s.power_w.find(domain);
      if (e == s.energy_j.end() || p == s.power_w.end()) continue;
      rows.push_back({id.str(), to_string(domain), std::to_string(s.iterations),
                      format_sig3(e->second.mean), format_sig3(e->second.median),
                      format_sig3(e->second.stddev), format_sig3(p->second.mean),
                      format_sig3(p->second.median), format_sig3(p->second.stddev),
                      format_sig3(s.mean_duration_s), status_counts(s),
                      s.any_low_confidence ? std::string(kLowConfidence) : ""});
    }
  }
  const auto bars = bars_for(record, highlight);
  const std::string chart_title = "mean " + to_string(highlight) + " energy (J)";

  if (request.format == ReportFormat::Html) {
    std::string body = "<p>" + html_escape(record_heading(record)) + "</p>\n";
    body += html_table(header, rows, header.size() - 1);
    body += "<h2>" + html_escape(chart_title) + "</h2>\n";
    body += svg_bars(bars);
    return html_page("Energy report: " + record.revision_label, body);
  }

  Table table(header);
  for (auto& row : rows) table.add(std::move(row));
  std::string out = record_heading(record) + "\n\n" + table.str() + "\n";
  out += term_bars(bars, request, chart_title);
  return out;
}

std::string render_compare(const RevisionRecord& a, const RevisionRecord& b,
                           const ReportRequest& request) {
  if (a.summaries.empty() || b.summaries.empty()) {
    throw Error(ErrorCode::EmptyScope, "a compared revision has no test results");
  }
  if (request.format == ReportFormat::Machine) return machine_array({a, b});

  auto present = record_domains(a);
  for (const auto& d : record_domains(b)) present.insert(d);
  const auto domains = view_domains(request, present);
  std::set<TestId> tests;
  for (const auto& [id, s] : a.summaries) tests.insert(id);
  for (const auto& [id, s] : b.summaries) tests.insert(id);

  const std::string la = a.revision_label;
  const std::string lb = b.revision_label;

  if (request.format == ReportFormat::Csv) {
    std::string out(kCsvHeader);
    for (const auto& id : tests) {
      auto sa = a.summaries.find(id);
      auto sb = b.summaries.find(id);
      if (sa != a.summaries.end()) summary_csv(out, sa->second, domains, la + ":");
      if (sb != b.summaries.end()) summary_csv(out, sb->second, domains, lb + ":");
      if (sa == a.summaries.end() || sb == b.summaries.end()) continue;
      for (const auto& domain : domains) {
        const auto& ea = sa->second.energy_j;
        const auto& eb = sb->second.energy_j;
        if (!ea.contains(domain) || !eb.contains(domain)) continue;
        const double va = ea.at(domain).mean;
        const double vb = eb.at(domain).mean;
        csv_row(out, id.str(), to_string(domain), "delta:energy_mean", vb - va, "J");
        if (va != 0.0) {
          csv_row(out, id.str(), to_string(domain), "delta_pct:energy_mean",
                  (vb - va) / va * 100.0, "%");
        }
        const auto& pa = sa->second.power_w;
        const auto& pb = sb->second.power_w;
        if (pa.contains(domain) && pb.contains(domain)) {
          csv_row(out, id.str(), to_string(domain), "delta:power_mean",
                  pb.at(domain).mean - pa.at(domain).mean, "W");
        }
      }
    }
    return out;
  }

  const std::vector<std::string> header = {"test", "domain", la + " J", lb + " J",
                                           "delta J", "change", "trend", "note"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& id : tests) {
    auto sa = a.summaries.find(id);
    auto sb = b.summaries.find(id);
    for (const auto& domain : domains) {
      const bool in_a = sa != a.summaries.end() && sa->second.energy_j.contains(domain);
      const bool in_b = sb != b.summaries.end() && sb->second.energy_j.contains(domain);
      if (!in_a && !in_b) continue;
      std::vector<std::string> row = {id.str(), to_string(domain), "-", "-", "-", "-",
                                      "", ""};
      double va = 0.0;
      double vb = 0.0;
      if (in_a) row[2] = format_sig3(va = sa->second.energy_j.at(domain).mean);
      if (in_b) row[3] = format_sig3(vb = sb->second.energy_j.at(domain).mean);
      if (in_a && in_b) {
        row[4] = format_sig3(vb - va);
        if (va != 0.0) row[5] = percent((vb - va) / va);
        const double pair[] = {va, vb};
        row[6] = std::string(arrow(classify_trend(pair, request.trend_threshold)));
      }
      const bool low = (in_a && sa->second.any_low_confidence) ||
                       (in_b && sb->second.any_low_confidence);
      if (low) row[7] = std::string(kLowConfidence);
      rows.push_back(std::move(row));
    }
  }

  if (request.format == ReportFormat::Html) {
    std::string body = "<p>" + html_escape(record_heading(a)) + "</p>\n<p>" +
                       html_escape(record_heading(b)) + "</p>\n";
    body += html_table(header, rows, header.size() - 1);
    return html_page("Energy comparison: " + la + " vs " + lb, body);
  }
  Table table(header);
  for (auto& row : rows) table.add(std::move(row));
  return "A: " + record_heading(a) + "\nB: " + record_heading(b) + "\n\n" + table.str();
}

std::string render_evolution(std::span<const HistorySeries> history,
                             const ReportRequest& request) {
  if (history.empty()) throw Error(ErrorCode::NoHistory, "no tests with stored history");
  std::vector<EnergyDomain> domains = request.domains;
  const EnergyDomain domain =
      domains.empty() ? request.highlight : highlight_domain(request, domains);
  const auto glyphs = make_glyphs(history, domain, request.trend_threshold);
  const std::string dom = to_string(domain);

  if (request.format == ReportFormat::Csv) {
    std::string out(kCsvHeader);
    for (const auto& g : glyphs) {
      for (std::size_t i = 0; i < g.series.size(); ++i) {
        csv_row(out, g.test.str(), dom, g.revisions[i] + ":energy_mean", g.series[i], "J");
      }
      if (g.change) csv_row(out, g.test.str(), dom, "last_change", *g.change * 100.0, "%");
    }
    return out;
  }
  if (request.format == ReportFormat::Machine) {
    throw Error(ErrorCode::InvalidArgument,
                "machine export of a history is produced from the stored records");
  }

  auto change_text = [](const EvolutionGlyph& g) {
    return g.change ? percent(*g.change) : std::string("-");
  };
  auto span_text = [](const EvolutionGlyph& g) {
    if (g.revisions.size() == 1) return g.revisions.front();
    return g.revisions.front() + " .. " + g.revisions.back() + " (" +
           std::to_string(g.revisions.size()) + ")";
  };

  if (request.format == ReportFormat::Html) {
    std::string body = "<p>mean " + html_escape(dom) + " energy per revision</p>\n";
    body += "<table>\n<tr><th>test</th><th>evolution</th><th>last J</th>"
            "<th>trend</th><th>change</th><th>revisions</th></tr>\n";
    for (const auto& g : glyphs) {
      constexpr int kW = 160;
      constexpr int kH = 28;
      const std::size_t n = g.levels.size();
      std::string points;
      for (std::size_t i = 0; i < n; ++i) {
        const int x = n == 1 ? kW / 2 : static_cast<int>(4 + i * (kW - 8) / (n - 1));
        const int y = kH - 4 - g.levels[i] * (kH - 8) / 7;
        if (!points.empty()) points += ' ';
        points += std::to_string(x) + "," + std::to_string(y);
      }
      std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                        std::to_string(kW) + "\" height=\"" + std::to_string(kH) + "\">";
      const std::string color(kHtmlColors[g.color_bucket]);
      if (n == 1) {
        auto comma = points.find(',');
        svg += "<circle cx=\"" + points.substr(0, comma) + "\" cy=\"" +
               points.substr(comma + 1) + "\" r=\"3\" fill=\"" + color + "\"/>";
      } else {
        svg += "<polyline fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"2\" points=\"" + points + "\"/>";
      }
      svg += "</svg>";
      body += "<tr><td>" + html_escape(g.test.str()) + "</td><td>" + svg + "</td><td>" +
              format_sig3(g.series.back()) + "</td><td>" + std::string(arrow(g.trend)) +
              "</td><td>" + change_text(g) + "</td><td>" + html_escape(span_text(g)) +
              "</td></tr>\n";
    }
    body += "</table>\n";
    return html_page("Energy evolution", body);
  }

  Table table({"test", "evolution", "last J", "trend", "change", "revisions"});
  for (const auto& g : glyphs) {
    std::string spark;
    for (int level : g.levels) spark += kSparkGlyphs[level];
    if (request.color) {
      spark = std::string(kTermColors[g.color_bucket]) + spark + std::string(kReset);
    }
    table.add({g.test.str(), spark, format_sig3(g.series.back()),
               std::string(arrow(g.trend)), change_text(g), span_text(g)});
  }
  return "mean " + dom + " energy per revision\n\n" + table.str();
}

std::string render_report(const Store& store, const ReportRequest& request) {
  const auto& scope = request.scope;
  switch (scope.kind) {
    case ScopeKind::Revision: {
      if (!scope.revision.empty()) return render_summary(store.latest(scope.revision), request);
      auto all = store.load_all();
      if (all.empty()) throw Error(ErrorCode::EmptyScope, "the store holds no records");
      return render_summary(all.back(), request);
    }
    case ScopeKind::Compare: {
      if (scope.revision.empty() || scope.other.empty() || scope.revision == scope.other) {
        throw Error(ErrorCode::InvalidArgument, "compare needs two distinct revisions");
      }
      return render_compare(store.latest(scope.revision), store.latest(scope.other),
                            request);
    }
    case ScopeKind::History: {
      auto all = store.load_all();
      if (all.empty()) throw Error(ErrorCode::EmptyScope, "the store holds no records");
      std::vector<TestId> tests = scope.tests;
      if (tests.empty()) {
        std::set<TestId> seen;
        for (const auto& record : all) {
          for (const auto& [id, s] : record.summaries) seen.insert(id);
        }
        tests.assign(seen.begin(), seen.end());
      }
      if (request.format == ReportFormat::Machine) {
        std::vector<RevisionRecord> selected;
        for (auto& record : all) {
          const bool relevant = std::any_of(tests.begin(), tests.end(), [&](const TestId& t) {
            return record.summaries.contains(t);
          });
          if (relevant) selected.push_back(std::move(record));
        }
        if (selected.empty()) throw Error(ErrorCode::NoHistory, "no stored history");
        if (scope.limit && selected.size() > *scope.limit) {
          selected.erase(selected.begin(),
                         selected.end() - static_cast<std::ptrdiff_t>(*scope.limit));
        }
        return machine_array(selected);
      }
      std::vector<HistorySeries> history;
      for (const auto& test : tests) history.push_back(store.history(test, scope.limit));
      return render_evolution(history, request);
    }
  }
  throw Error(ErrorCode::Internal, "unhandled report scope");
}

void write_document(const fs::path& path, std::string_view document) {
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const fs::path temp =
      parent / ("." + path.filename().string() + ".tmp-" + std::to_string(::getpid()));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    out.write(document.data(), static_cast<std::streamsize>(document.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(temp, ignored);
      throw Error(ErrorCode::StorageFailure, "cannot write " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(temp, path, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw Error(ErrorCode::StorageFailure, "cannot write " + path.string());
  }
}

}  // namespace manai
