#pragma once

#include "claimver/aggregation.hpp"
#include "claimver/core.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimver {

/// Rows are gold labels, columns predicted labels, both in `kVerdictLabels` order.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, 3, 3>;

[[nodiscard]] ConfusionMatrix confusion_matrix(std::span<const VerdictLabel> pred, std::span<const VerdictLabel> gold);

struct ClassMetrics {
    double precision{};
    double recall{};
    double f1{};
    std::size_t support{};
};

struct AveragedMetrics {
    double precision{};
    double recall{};
    double f1{};
};

/// Classification report. Weighted averages weight each class by its gold support.
/// Undefined ratios (0/0) are reported as 0 and counted in `zero_division`.
struct EvaluationReport {
    std::array<ClassMetrics, kNumLabels> per_class{};
    AveragedMetrics macro_avg;
    AveragedMetrics weighted_avg;
    double accuracy{};
    std::size_t n{};
    std::string config_fingerprint;
    ConfusionMatrix confusion = ConfusionMatrix::Zero();
    /// Per class: number of ill-defined precision/recall values replaced by 0.
    std::array<std::size_t, kNumLabels> zero_division{};

    [[nodiscard]] const ClassMetrics &operator[](VerdictLabel label) const noexcept { return per_class[index_of(label)]; }
    /// Number of predictions per label (column sums of the confusion matrix).
    [[nodiscard]] std::array<std::size_t, kNumLabels> predicted_counts() const noexcept;
};

/// Throws InvalidArgument when the lists differ in length or are empty.
[[nodiscard]] EvaluationReport compute_metrics(std::span<const VerdictLabel> pred, std::span<const VerdictLabel> gold);

enum class ReportFormat : std::uint8_t { Json, Csv, Markdown };

[[nodiscard]] std::string_view to_string(ReportFormat format) noexcept;  // "json" / "csv" / "md"
[[nodiscard]] std::optional<ReportFormat> parse_report_format(std::string_view name) noexcept;

[[nodiscard]] nlohmann::ordered_json to_json(const EvaluationReport &report);
/// Inverse of `to_json`; throws DataError on schema violations.
[[nodiscard]] EvaluationReport report_from_json(const nlohmann::json &object);
/// Values rounded to 2 decimals for csv/md; json keeps full precision.
[[nodiscard]] std::string render(const EvaluationReport &report, ReportFormat format);

// ---------------------------------------------------------------------------
// Threshold sweeps
// ---------------------------------------------------------------------------

/// Everything needed to re-decide one claim at any threshold without inference.
struct ClaimVerdicts {
    std::string claim_id;
    std::optional<VerdictLabel> gold;
    std::vector<RawVerdict> raws;  ///< empty when the claim failed before verification
    std::vector<double> weights;   ///< aggregation weights, parallel to `raws`
};

/// Recalibrates every raw verdict at `tau` and aggregates. A claim with no raw
/// verdicts decides NotEnoughInfo with confidence 0.
[[nodiscard]] FinalVerdict decide(const ClaimVerdicts &claim, double tau, AggregationMethod method);

struct SweepPoint {
    double tau{};
    EvaluationReport report;
};

/// One report per threshold, sorted by threshold. Pure: never touches a backend.
/// Throws InvalidArgument for a threshold outside [0,1] or a claim without gold.
[[nodiscard]] std::vector<SweepPoint> sweep_thresholds(std::span<const ClaimVerdicts> claims, std::span<const double> taus,
                                                       AggregationMethod method);

// ---------------------------------------------------------------------------
// Run comparison
// ---------------------------------------------------------------------------

struct NamedReport {
    std::string name;
    EvaluationReport report;
};

struct ComparisonRow {
    std::string metric;
    std::vector<double> values;  ///< one per report
    std::vector<double> deltas;  ///< values[i] - values[0]
};

struct ComparisonTable {
    std::vector<std::string> names;
    std::vector<ComparisonRow> rows;

    [[nodiscard]] const ComparisonRow &row(std::string_view metric) const;
};

/// Side-by-side table with deltas against the first report. Throws InvalidArgument
/// for fewer than two reports.
[[nodiscard]] ComparisonTable compare_runs(std::span<const NamedReport> reports);

[[nodiscard]] std::string render(const ComparisonTable &table, ReportFormat format);

}  // namespace claimver
