#include "claimver/cli.hpp"

#include "claimver/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace claimver::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

struct PipelineFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string report_format{"json"};
};

void add_pipeline_options(CLI::App &sub, PipelineFlags &flags) {
    const auto bind = [&](const std::string &flag, const std::string &key, const std::string &help) {
        sub.add_option_function<std::string>(
            flag, [&flags, key](const std::string &value) { flags.overrides.emplace_back(key, value); }, help);
    };
    sub.add_option("--config", flags.config_path, "flat key = value config file");
    bind("--dataset", "dataset", "fever | climate-fever | custom");
    bind("--data-path", "data_path", "line-delimited JSON dataset");
    bind("--attribution", "attribution_mode", "full | span");
    bind("--threshold", "threshold", "confidence threshold in [0,1] (default 0.6)");
    bind("--aggregation", "aggregation", "majority | weighted");
    bind("--model", "classifier_model", "entailment classifier id");
    bind("--extractor", "extractor_model", "span extractor id");
    bind("--embedder", "embedder_model", "sentence embedder id (enables attribution scores)");
    bind("--backend", "backend", "stub | local-model | remote-endpoint");
    bind("--endpoint", "endpoint", "inference server URL");
    bind("--cache-dir", "cache_dir", "verdict cache directory");
    bind("--out", "output_dir", "output directory");
    bind("--workers", "workers", "parallel claim workers");
    bind("--seed", "seed", "stub backend seed");
    bind("--max-length", "max_length", "word budget for claim + evidence");
    sub.add_option("--report", flags.report_format, "json | csv | md")->check(CLI::IsMember({"json", "csv", "md"}));
}

PipelineConfig resolve_config(const PipelineFlags &flags) {
    PipelineConfig config;
    if (!flags.config_path.empty()) {
        apply_config_file(config, flags.config_path);
    }
    if (const char *env = std::getenv("CLAIMVER_CACHE_DIR"); env != nullptr && *env != '\0') {
        config.cache_dir = env;
    } else if (config.cache_dir.empty()) {
        config.cache_dir = default_cache_dir();
    }
    for (const auto &[key, value] : flags.overrides) {
        config.set(key, value);
    }
    config.validate();
    if (config.data_path.empty()) {
        throw InvalidArgument("no dataset given (use --data-path or data_path in the config file)");
    }
    return config;
}

ReportFormat format_of(const PipelineFlags &flags) { return *parse_report_format(flags.report_format); }

void write_file(const std::filesystem::path &path, const std::string &content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

std::vector<DatasetRecord> load_records(const PipelineConfig &config, std::ostream &err, LoadResult *summary = nullptr) {
    LoadResult loaded = load_dataset(config.data_path, config.dataset);
    for (const Rejection &rejection : loaded.rejections) {
        err << "warning: " << config.data_path.string() << ":" << rejection.line << ": rejected: " << rejection.reason << '\n';
    }
    std::vector<DatasetRecord> records = std::move(loaded.records);
    if (summary != nullptr) {
        loaded.records.clear();
        *summary = std::move(loaded);
    }
    return records;
}

std::string render_sweep(const std::vector<SweepPoint> &points, ReportFormat format, std::string_view label_column = {},
                         const std::vector<std::string> &labels = {}) {
    switch (format) {
        case ReportFormat::Json: {
            ordered_json out = ordered_json::array();
            for (std::size_t i = 0; i < points.size(); ++i) {
                ordered_json entry;
                if (!label_column.empty()) entry[std::string(label_column)] = labels[i];
                entry["threshold"] = points[i].tau;
                entry["report"] = to_json(points[i].report);
                out.push_back(std::move(entry));
            }
            return out.dump(2) + "\n";
        }
        case ReportFormat::Csv: {
            std::string out = label_column.empty() ? "" : std::string(label_column) + ",";
            out += "threshold,accuracy,macro_precision,macro_recall,macro_f1,weighted_precision,weighted_recall,weighted_f1,predicted_nei\n";
            for (std::size_t i = 0; i < points.size(); ++i) {
                const EvaluationReport &r = points[i].report;
                if (!label_column.empty()) out += labels[i] + ",";
                out += fmt::format("{},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f},{}\n", points[i].tau, r.accuracy,
                                   r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1, r.weighted_avg.precision,
                                   r.weighted_avg.recall, r.weighted_avg.f1, r.predicted_counts()[index_of(VerdictLabel::NotEnoughInfo)]);
            }
            return out;
        }
        case ReportFormat::Markdown: {
            std::string out;
            for (std::size_t i = 0; i < points.size(); ++i) {
                out += "## ";
                if (!label_column.empty()) out += labels[i] + ", ";
                out += fmt::format("threshold {}\n\n", points[i].tau);
                out += render(points[i].report, ReportFormat::Markdown) + "\n";
            }
            return out;
        }
    }
    return {};
}

std::vector<ClaimVerdicts> claim_verdicts(const std::vector<ClaimOutcome> &outcomes) {
    std::vector<ClaimVerdicts> claims;
    claims.reserve(outcomes.size());
    for (const ClaimOutcome &outcome : outcomes) {
        claims.push_back(outcome.verdicts);
    }
    return claims;
}

int cmd_run(const PipelineFlags &flags, std::ostream &err) {
    const PipelineConfig config = resolve_config(flags);
    OwnedBackends backends = make_backends(config);
    const RunResult result = run(config, backends.view(), format_of(flags));
    err << fmt::format("{} claims, {} classifier calls, {} cache hits", result.outcomes.size(), result.stats.classifier_calls,
                       result.stats.cache_hits);
    if (result.report) {
        err << fmt::format(", accuracy {:.4f}", result.report->accuracy);
    }
    err << "; wrote " << (config.output_dir / "verdicts.jsonl").string() << '\n';
    return kExitOk;
}

int cmd_sweep(const PipelineFlags &flags, const std::string &thresholds, std::ostream &err) {
    const PipelineConfig config = resolve_config(flags);
    const std::vector<double> taus = parse_threshold_list(thresholds);
    OwnedBackends backends = make_backends(config);
    const std::vector<DatasetRecord> records = load_records(config, err);
    InferenceStats stats;
    const std::vector<ClaimOutcome> outcomes = infer(config, records, backends.view(), config.attribution_mode, &stats);
    std::vector<SweepPoint> points = sweep_thresholds(claim_verdicts(outcomes), taus, config.aggregation);
    for (SweepPoint &point : points) {
        point.report.config_fingerprint = config.fingerprint();
    }
    const ReportFormat format = format_of(flags);
    write_file(config.output_dir / ("sweep." + std::string(to_string(format))), render_sweep(points, format));
    ordered_json info{{"fingerprint", config.fingerprint()},
                      {"thresholds", taus},
                      {"classifier_calls", stats.classifier_calls},
                      {"cache_hits", stats.cache_hits},
                      {"cache_misses", stats.cache_misses}};
    write_file(config.output_dir / "sweep_manifest.json", info.dump(2) + "\n");
    err << fmt::format("{} thresholds, {} classifier calls, {} cache hits\n", points.size(), stats.classifier_calls, stats.cache_hits);
    return kExitOk;
}

int cmd_ablate(const PipelineFlags &flags, const std::string &modes_text, const std::string &thresholds, std::ostream &err) {
    const PipelineConfig config = resolve_config(flags);
    std::vector<AttributionMode> modes;
    std::stringstream stream(modes_text);
    for (std::string item; std::getline(stream, item, ',');) {
        const auto mode = parse_attribution_mode(trim(item));
        if (!mode) throw InvalidArgument("invalid attribution mode '" + item + "'");
        modes.push_back(*mode);
    }
    if (modes.empty()) throw InvalidArgument("no attribution modes given");
    const std::vector<double> taus = parse_threshold_list(thresholds);
    OwnedBackends backends = make_backends(config);
    const std::vector<DatasetRecord> records = load_records(config, err);
    InferenceStats stats;
    const std::vector<AblationCell> cells = ablate(config, records, backends.view(), modes, taus, &stats);
    std::vector<SweepPoint> points;
    std::vector<std::string> labels;
    for (const AblationCell &cell : cells) {
        points.push_back(SweepPoint{cell.tau, cell.report});
        labels.emplace_back(to_string(cell.mode));
    }
    const ReportFormat format = format_of(flags);
    write_file(config.output_dir / ("ablation." + std::string(to_string(format))), render_sweep(points, format, "mode", labels));
    err << fmt::format("{} conditions, {} classifier calls\n", cells.size(), stats.classifier_calls);
    return kExitOk;
}

int cmd_report(const std::vector<std::string> &inputs, const std::string &format_name, const std::string &out_path,
               std::ostream &out) {
    std::vector<NamedReport> reports;
    for (const std::string &input : inputs) {
        const auto eq = input.find('=');
        const std::string name = eq == std::string::npos ? std::filesystem::path(input).stem().string() : input.substr(0, eq);
        const std::filesystem::path path = eq == std::string::npos ? input : input.substr(eq + 1);
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot open report '" + path.string() + "'");
        }
        nlohmann::json object;
        try {
            in >> object;
        } catch (const nlohmann::json::exception &e) {
            throw DataError("malformed report '" + path.string() + "': " + e.what());
        }
        reports.push_back(NamedReport{name, report_from_json(object)});
    }
    if (reports.size() < 2) {
        throw InvalidArgument("report needs at least two report files");
    }
    const std::string rendered = render(compare_runs(reports), *parse_report_format(format_name));
    if (out_path.empty()) {
        out << rendered;
    } else {
        write_file(out_path, rendered);
    }
    return kExitOk;
}

int cmd_validate(const std::string &dataset_name, const std::string &path, std::ostream &out, std::ostream &err) {
    const auto dataset = parse_dataset_kind(dataset_name);
    if (!dataset) {
        throw InvalidArgument("invalid dataset '" + dataset_name + "'");
    }
    if (path.empty()) {
        throw InvalidArgument("no dataset path given");
    }
    const LoadResult loaded = load_dataset(path, *dataset);
    for (const Rejection &rejection : loaded.rejections) {
        err << "warning: " << path << ":" << rejection.line << ": rejected: " << rejection.reason << '\n';
    }
    const DistributionCheck check = check_distribution(loaded.records, *dataset);
    out << fmt::format("dataset {} ({})\n", path, to_string(*dataset));
    out << fmt::format("lines {}  accepted {}  rejected {}\n", loaded.total_lines, loaded.records.size(), loaded.rejections.size());
    for (const VerdictLabel label : kVerdictLabels) {
        out << fmt::format("  {:<16} {:>6}", to_string(label), check.observed[index_of(label)]);
        if (check.expected) {
            out << fmt::format("   reference {:>6}", (*check.expected)[index_of(label)]);
        }
        out << '\n';
    }
    if (check.expected) {
        std::size_t expected_total = 0;
        for (const std::size_t count : *check.expected) expected_total += count;
        out << fmt::format("  {:<16} {:>6}   reference {:>6}\n", "TOTAL", loaded.records.size(), expected_total);
        out << (check.matches() ? "distribution matches the reference counts\n"
                                : "DEVIATION: distribution differs from the reference counts\n");
    }
    return kExitOk;
}

}  // namespace

std::vector<double> parse_threshold_list(const std::string &text) {
    std::vector<double> taus;
    std::stringstream stream(text);
    for (std::string item; std::getline(stream, item, ',');) {
        const std::string value(trim(item));
        std::size_t used = 0;
        double tau = 0.0;
        try {
            tau = std::stod(value, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (value.empty() || used != value.size()) {
            throw InvalidArgument("invalid threshold '" + value + "'");
        }
        if (!std::isfinite(tau) || tau < 0.0 || tau > 1.0) {
            throw InvalidArgument("threshold " + value + " is outside [0, 1]");
        }
        taus.push_back(tau);
    }
    if (taus.empty()) {
        throw InvalidArgument("empty threshold list");
    }
    return taus;
}

int main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Claim verification with evidence attribution and confidence recalibration", "claimver"};
    app.require_subcommand(1);

    PipelineFlags run_flags;
    CLI::App *run_cmd = app.add_subcommand("run", "attribute, verify, recalibrate, aggregate and evaluate a dataset");
    add_pipeline_options(*run_cmd, run_flags);

    PipelineFlags sweep_flags;
    std::string sweep_thresholds_text{"0.7,0.8,0.9"};
    CLI::App *sweep_cmd = app.add_subcommand("sweep", "evaluate several thresholds from one (cached) inference pass");
    add_pipeline_options(*sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--thresholds", sweep_thresholds_text, "comma-separated thresholds");

    PipelineFlags ablate_flags;
    std::string ablate_modes{"full,span"};
    std::string ablate_thresholds{"0.6,0.7,0.8,0.9"};
    CLI::App *ablate_cmd = app.add_subcommand("ablate", "evidence mode x threshold grid");
    add_pipeline_options(*ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--modes", ablate_modes, "comma-separated attribution modes");
    ablate_cmd->add_option("--thresholds", ablate_thresholds, "comma-separated thresholds");

    std::vector<std::string> report_inputs;
    std::string report_format{"md"};
    std::string report_out;
    CLI::App *report_cmd = app.add_subcommand("report", "compare report.json files side by side");
    report_cmd->add_option("reports", report_inputs, "report files, optionally name=path")->required();
    report_cmd->add_option("--report", report_format, "json | csv | md")->check(CLI::IsMember({"json", "csv", "md"}));
    report_cmd->add_option("--out", report_out, "output file (default: stdout)");

    std::string validate_dataset{"custom"};
    std::string validate_path;
    CLI::App *validate_cmd = app.add_subcommand("validate-data", "print the class distribution of a dataset file");
    validate_cmd->add_option("--dataset", validate_dataset, "fever | climate-fever | custom");
    validate_cmd->add_option("--data-path,path", validate_path, "dataset file");

    std::vector<std::string> argv_copy(args.rbegin(), args.rend());
    if (!argv_copy.empty()) {
        argv_copy.pop_back();  // program name
    }
    try {
        app.parse(argv_copy);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitConfig;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_flags, err);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, sweep_thresholds_text, err);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags, ablate_modes, ablate_thresholds, err);
        if (report_cmd->parsed()) return cmd_report(report_inputs, report_format, report_out, out);
        if (validate_cmd->parsed()) return cmd_validate(validate_dataset, validate_path, out, err);
    } catch (const InvalidArgument &e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitSystemic;
    }
    return kExitConfig;
}

}  // namespace claimver::cli
