#include "claimver/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace claimver {

namespace {

double safe_ratio(double numerator, double denominator, std::size_t &zero_division) {
    if (denominator == 0.0) {
        ++zero_division;
        return 0.0;
    }
    return numerator / denominator;
}

double harmonic_mean(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

std::string fixed2(double value) { return fmt::format("{:.2f}", value); }

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const VerdictLabel> pred, std::span<const VerdictLabel> gold) {
    if (pred.size() != gold.size()) {
        throw InvalidArgument("prediction and gold lists differ in length (" + std::to_string(pred.size()) + " vs " +
                              std::to_string(gold.size()) + ")");
    }
    ConfusionMatrix confusion = ConfusionMatrix::Zero();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++confusion(static_cast<Eigen::Index>(index_of(gold[i])), static_cast<Eigen::Index>(index_of(pred[i])));
    }
    return confusion;
}

std::array<std::size_t, kNumLabels> EvaluationReport::predicted_counts() const noexcept {
    std::array<std::size_t, kNumLabels> counts{};
    for (Eigen::Index c = 0; c < 3; ++c) {
        counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>(confusion.col(c).sum());
    }
    return counts;
}

EvaluationReport compute_metrics(std::span<const VerdictLabel> pred, std::span<const VerdictLabel> gold) {
    if (pred.empty() && gold.empty()) {
        throw InvalidArgument("cannot evaluate an empty prediction list");
    }
    EvaluationReport report;
    report.confusion = confusion_matrix(pred, gold);
    report.n = pred.size();

    const Eigen::Matrix<double, 3, 3> counts = report.confusion.cast<double>();
    const double n = static_cast<double>(report.n);
    for (Eigen::Index c = 0; c < 3; ++c) {
        const auto k = static_cast<std::size_t>(c);
        ClassMetrics &metrics = report.per_class[k];
        const double tp = counts(c, c);
        metrics.support = static_cast<std::size_t>(report.confusion.row(c).sum());
        metrics.precision = safe_ratio(tp, counts.col(c).sum(), report.zero_division[k]);
        metrics.recall = safe_ratio(tp, counts.row(c).sum(), report.zero_division[k]);
        metrics.f1 = harmonic_mean(metrics.precision, metrics.recall);

        report.macro_avg.precision += metrics.precision / 3.0;
        report.macro_avg.recall += metrics.recall / 3.0;
        report.macro_avg.f1 += metrics.f1 / 3.0;

        const double share = static_cast<double>(metrics.support) / n;
        report.weighted_avg.precision += share * metrics.precision;
        report.weighted_avg.recall += share * metrics.recall;
        report.weighted_avg.f1 += share * metrics.f1;
    }
    report.accuracy = counts.trace() / n;
    return report;
}

std::string_view to_string(ReportFormat format) noexcept {
    switch (format) {
        case ReportFormat::Json: return "json";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Markdown: return "md";
    }
    return "json";
}

std::optional<ReportFormat> parse_report_format(std::string_view name) noexcept {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "md" || name == "markdown") return ReportFormat::Markdown;
    return std::nullopt;
}

nlohmann::ordered_json to_json(const EvaluationReport &report) {
    nlohmann::ordered_json out;
    out["n"] = report.n;
    out["accuracy"] = report.accuracy;
    auto &per_class = out["per_class"];
    for (const VerdictLabel label : kVerdictLabels) {
        const ClassMetrics &m = report[label];
        per_class[std::string(to_string(label))] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    out["macro_avg"] = {{"precision", report.macro_avg.precision}, {"recall", report.macro_avg.recall}, {"f1", report.macro_avg.f1}};
    out["weighted_avg"] = {
        {"precision", report.weighted_avg.precision}, {"recall", report.weighted_avg.recall}, {"f1", report.weighted_avg.f1}};
    out["weighted_avg_basis"] = "gold_support";
    auto &confusion = out["confusion"];
    confusion = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < 3; ++r) {
        confusion.push_back({report.confusion(r, 0), report.confusion(r, 1), report.confusion(r, 2)});
    }
    auto &zero_division = out["zero_division"];
    for (const VerdictLabel label : kVerdictLabels) {
        zero_division[std::string(to_string(label))] = report.zero_division[index_of(label)];
    }
    out["config_fingerprint"] = report.config_fingerprint;
    return out;
}

EvaluationReport report_from_json(const nlohmann::json &object) {
    try {
        EvaluationReport report;
        report.n = object.at("n").get<std::size_t>();
        report.accuracy = object.at("accuracy").get<double>();
        for (const VerdictLabel label : kVerdictLabels) {
            const auto &m = object.at("per_class").at(std::string(to_string(label)));
            report.per_class[index_of(label)] = ClassMetrics{m.at("precision").get<double>(), m.at("recall").get<double>(),
                                                             m.at("f1").get<double>(), m.at("support").get<std::size_t>()};
            if (const auto zd = object.find("zero_division"); zd != object.end() && zd->contains(std::string(to_string(label)))) {
                report.zero_division[index_of(label)] = zd->at(std::string(to_string(label))).get<std::size_t>();
            }
        }
        for (auto [key, target] : {std::pair{"macro_avg", &report.macro_avg}, std::pair{"weighted_avg", &report.weighted_avg}}) {
            const auto &avg = object.at(key);
            *target = AveragedMetrics{avg.at("precision").get<double>(), avg.at("recall").get<double>(), avg.at("f1").get<double>()};
        }
        if (const auto it = object.find("confusion"); it != object.end()) {
            for (Eigen::Index r = 0; r < 3; ++r) {
                for (Eigen::Index c = 0; c < 3; ++c) {
                    report.confusion(r, c) = it->at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<std::int64_t>();
                }
            }
        }
        report.config_fingerprint = object.value("config_fingerprint", std::string{});
        return report;
    } catch (const nlohmann::json::exception &e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
}

std::string render(const EvaluationReport &report, ReportFormat format) {
    switch (format) {
        case ReportFormat::Json: return to_json(report).dump(2) + "\n";
        case ReportFormat::Csv: {
            std::string out = "row,precision,recall,f1,support\n";
            for (const VerdictLabel label : kVerdictLabels) {
                const ClassMetrics &m = report[label];
                out += fmt::format("{},{},{},{},{}\n", to_string(label), fixed2(m.precision), fixed2(m.recall), fixed2(m.f1), m.support);
            }
            out += fmt::format("accuracy,,,{},{}\n", fixed2(report.accuracy), report.n);
            out += fmt::format("macro avg,{},{},{},{}\n", fixed2(report.macro_avg.precision), fixed2(report.macro_avg.recall),
                               fixed2(report.macro_avg.f1), report.n);
            out += fmt::format("weighted avg,{},{},{},{}\n", fixed2(report.weighted_avg.precision),
                               fixed2(report.weighted_avg.recall), fixed2(report.weighted_avg.f1), report.n);
            return out;
        }
        case ReportFormat::Markdown: {
            std::string out;
            if (!report.config_fingerprint.empty()) {
                out += fmt::format("config `{}`\n\n", report.config_fingerprint);
            }
            out += "|  | precision | recall | f1-score | support |\n|---|---:|---:|---:|---:|\n";
            for (const VerdictLabel label : kVerdictLabels) {
                const ClassMetrics &m = report[label];
                out += fmt::format("| {} | {} | {} | {} | {} |\n", to_string(label), fixed2(m.precision), fixed2(m.recall),
                                   fixed2(m.f1), m.support);
            }
            out += fmt::format("| accuracy |  |  | {} | {} |\n", fixed2(report.accuracy), report.n);
            out += fmt::format("| macro avg | {} | {} | {} | {} |\n", fixed2(report.macro_avg.precision),
                               fixed2(report.macro_avg.recall), fixed2(report.macro_avg.f1), report.n);
            out += fmt::format("| weighted avg | {} | {} | {} | {} |\n", fixed2(report.weighted_avg.precision),
                               fixed2(report.weighted_avg.recall), fixed2(report.weighted_avg.f1), report.n);
            out += "\nweighted avg: per-class values weighted by gold support.\n";
            return out;
        }
    }
    return {};
}

// ---------------------------------------------------------------------------

FinalVerdict decide(const ClaimVerdicts &claim, double tau, AggregationMethod method) {
    if (claim.raws.empty()) {
        if (!std::isfinite(tau) || tau < 0.0 || tau > 1.0) {
            throw InvalidArgument("threshold " + std::to_string(tau) + " is outside [0, 1]");
        }
        FinalVerdict verdict;
        verdict.claim_id = claim.claim_id;
        verdict.label = VerdictLabel::NotEnoughInfo;
        verdict.method = method;
        return verdict;
    }
    std::vector<CalibratedVerdict> calibrated;
    calibrated.reserve(claim.raws.size());
    for (const RawVerdict &raw : claim.raws) {
        calibrated.push_back(recalibrate(raw, tau));
    }
    if (method == AggregationMethod::Weighted) {
        if (claim.weights.empty()) {
            const std::vector<double> uniform(calibrated.size(), 1.0);
            return aggregate_weighted(calibrated, uniform);
        }
        return aggregate_weighted(calibrated, claim.weights);
    }
    return aggregate_majority(calibrated);
}

std::vector<SweepPoint> sweep_thresholds(std::span<const ClaimVerdicts> claims, std::span<const double> taus,
                                         AggregationMethod method) {
    std::vector<double> ordered(taus.begin(), taus.end());
    for (const double tau : ordered) {
        if (!std::isfinite(tau) || tau < 0.0 || tau > 1.0) {
            throw InvalidArgument("threshold " + std::to_string(tau) + " is outside [0, 1]");
        }
    }
    std::sort(ordered.begin(), ordered.end());

    std::vector<VerdictLabel> gold;
    gold.reserve(claims.size());
    for (const ClaimVerdicts &claim : claims) {
        if (!claim.gold) {
            throw InvalidArgument("claim '" + claim.claim_id + "' has no gold label");
        }
        gold.push_back(*claim.gold);
    }

    std::vector<SweepPoint> points;
    points.reserve(ordered.size());
    for (const double tau : ordered) {
        std::vector<VerdictLabel> pred;
        pred.reserve(claims.size());
        for (const ClaimVerdicts &claim : claims) {
            pred.push_back(decide(claim, tau, method).label);
        }
        points.push_back(SweepPoint{tau, compute_metrics(pred, gold)});
    }
    return points;
}

// ---------------------------------------------------------------------------

const ComparisonRow &ComparisonTable::row(std::string_view metric) const {
    for (const ComparisonRow &r : rows) {
        if (r.metric == metric) {
            return r;
        }
    }
    throw InvalidArgument("no metric '" + std::string(metric) + "' in comparison");
}

ComparisonTable compare_runs(std::span<const NamedReport> reports) {
    if (reports.size() < 2) {
        throw InvalidArgument("comparison needs at least two reports");
    }
    ComparisonTable table;
    for (const NamedReport &named : reports) {
        table.names.push_back(named.name);
    }
    const auto add = [&](std::string metric, auto &&extract) {
        ComparisonRow row{std::move(metric), {}, {}};
        for (const NamedReport &named : reports) {
            row.values.push_back(extract(named.report));
        }
        for (const double value : row.values) {
            row.deltas.push_back(value - row.values.front());
        }
        table.rows.push_back(std::move(row));
    };
    add("accuracy", [](const EvaluationReport &r) { return r.accuracy; });
    add("macro_precision", [](const EvaluationReport &r) { return r.macro_avg.precision; });
    add("macro_recall", [](const EvaluationReport &r) { return r.macro_avg.recall; });
    add("macro_f1", [](const EvaluationReport &r) { return r.macro_avg.f1; });
    add("weighted_precision", [](const EvaluationReport &r) { return r.weighted_avg.precision; });
    add("weighted_recall", [](const EvaluationReport &r) { return r.weighted_avg.recall; });
    add("weighted_f1", [](const EvaluationReport &r) { return r.weighted_avg.f1; });
    for (const VerdictLabel label : kVerdictLabels) {
        const std::string prefix(to_string(label));
        add(prefix + "_precision", [label](const EvaluationReport &r) { return r[label].precision; });
        add(prefix + "_recall", [label](const EvaluationReport &r) { return r[label].recall; });
        add(prefix + "_f1", [label](const EvaluationReport &r) { return r[label].f1; });
    }
    return table;
}

std::string render(const ComparisonTable &table, ReportFormat format) {
    switch (format) {
        case ReportFormat::Json: {
            nlohmann::ordered_json out;
            out["runs"] = table.names;
            auto &rows = out["metrics"];
            rows = nlohmann::ordered_json::array();
            for (const ComparisonRow &row : table.rows) {
                rows.push_back({{"metric", row.metric}, {"values", row.values}, {"deltas", row.deltas}});
            }
            return out.dump(2) + "\n";
        }
        case ReportFormat::Csv: {
            std::string out = "metric";
            for (const std::string &name : table.names) out += "," + name;
            for (std::size_t i = 1; i < table.names.size(); ++i) out += ",delta " + table.names[i];
            out += "\n";
            for (const ComparisonRow &row : table.rows) {
                out += row.metric;
                for (const double v : row.values) out += "," + fixed2(v);
                for (std::size_t i = 1; i < row.deltas.size(); ++i) out += fmt::format(",{:+.2f}", row.deltas[i]);
                out += "\n";
            }
            return out;
        }
        case ReportFormat::Markdown: {
            std::string out = "| metric |";
            std::string rule = "|---|";
            for (const std::string &name : table.names) {
                out += " " + name + " |";
                rule += "---:|";
            }
            for (std::size_t i = 1; i < table.names.size(); ++i) {
                out += " Δ " + table.names[i] + " |";
                rule += "---:|";
            }
            out += "\n" + rule + "\n";
            for (const ComparisonRow &row : table.rows) {
                out += "| " + row.metric + " |";
                for (const double v : row.values) out += " " + fixed2(v) + " |";
                for (std::size_t i = 1; i < row.deltas.size(); ++i) out += fmt::format(" {:+.2f} |", row.deltas[i]);
                out += "\n";
            }
            return out;
        }
    }
    return {};
}

}  // namespace claimver
