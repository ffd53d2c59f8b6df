#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "manai/domain.hpp"
#include "manai/harness.hpp"
#include "manai/store.hpp"

namespace manai {

enum class ReportFormat { Term, Html, Csv, Machine };

std::string_view to_string(ReportFormat format);
std::optional<ReportFormat> parse_report_format(std::string_view text);

enum class ScopeKind { Revision, Compare, History };

struct ReportScope {
  ScopeKind kind = ScopeKind::Revision;
  /// Revision scope: empty means the newest stored record. Compare scope:
  /// the baseline revision.
  std::string revision;
  /// Compare scope only.
  std::string other;
  /// History scope: empty means every test found in the store.
  std::vector<TestId> tests;
  /// History scope: keep only the newest `limit` points per test.
  std::optional<std::size_t> limit;
};

struct ReportRequest {
  ReportScope scope;
  /// Empty shows every domain found in the data.
  std::vector<EnergyDomain> domains;
  ReportFormat format = ReportFormat::Term;
  std::optional<std::filesystem::path> output_path;
  /// Terminal only.
  bool color = false;
  int width = 100;
  /// Relative change above which a step counts as an increase or decrease.
  double trend_threshold = 0.01;
  EnergyDomain highlight{DomainKind::Package, 0};
};

enum class Trend { Increase, Decrease, Flat };

std::string_view to_string(Trend trend);

/// Per-test entry of the evolution view.
struct EvolutionGlyph {
  TestId test;
  std::vector<std::string> revisions;
  /// Mean energy in joules per stored record, oldest first.
  std::vector<double> series;
  Trend trend = Trend::Flat;
  /// Relative change of the last step; absent for a single point.
  std::optional<double> change;
  /// 0 (lowest) .. 4 (highest), by rank of the newest value within the view.
  int color_bucket = 0;
  /// Sparkline levels 0..7, one per point.
  std::vector<int> levels;
};

/// Compares the last two points. A single point is Flat.
Trend classify_trend(std::span<const double> series, double threshold = 0.01);

/// Rank-based quintiles: equal values share a bucket, a single value gets
/// bucket 0. Invariant under positive scaling.
std::vector<int> color_buckets(std::span<const double> values);

/// Min-max scaled onto 0..7. A flat series sits at level 3.
std::vector<int> sparkline_levels(std::span<const double> series);

/// Three significant digits, plain decimal notation.
std::string format_sig3(double value);

/// Glyphs for every series, with color buckets ranked across them.
/// Throws NoHistory when a series has no points.
std::vector<EvolutionGlyph> make_glyphs(std::span<const HistorySeries> history,
                                        const EnergyDomain& domain,
                                        double threshold = 0.01);

/// Per-test table and bar chart for one record.
std::string render_summary(const RevisionRecord& record, const ReportRequest& request);

/// Per-test deltas between two records.
std::string render_compare(const RevisionRecord& a, const RevisionRecord& b,
                           const ReportRequest& request);

/// Sparklines with trend arrows. Throws NoHistory for an empty series.
std::string render_evolution(std::span<const HistorySeries> history,
                             const ReportRequest& request);

/// Resolves the scope against the store and renders it. Throws EmptyScope,
/// UnknownRevision or NoHistory.
std::string render_report(const Store& store, const ReportRequest& request);

/// Writes `document` to `path` through a temporary file. Throws
/// StorageFailure.
void write_document(const std::filesystem::path& path, std::string_view document);

}  // namespace manai
