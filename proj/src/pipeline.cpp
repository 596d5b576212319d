#include "claimver/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>
#include <unordered_map>

namespace claimver {

namespace {

using ordered_json = nlohmann::ordered_json;

double parse_double(std::string_view key, std::string_view value) {
    const std::string text(trim(value));
    try {
        std::size_t used = 0;
        const double parsed = std::stod(text, &used);
        if (used == text.size()) {
            return parsed;
        }
    } catch (const std::exception &) {
    }
    throw InvalidArgument("invalid number '" + text + "' for " + std::string(key));
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view value) {
    const std::string_view text = trim(value);
    std::uint64_t parsed = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), parsed);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
        throw InvalidArgument("invalid non-negative integer '" + std::string(text) + "' for " + std::string(key));
    }
    return parsed;
}

std::string format_double(double value) {
    // shortest round-trip form, same as the JSON writer
    return ordered_json(value).dump();
}

// Retries retryable backend failures; everything else propagates immediately.
template <typename F>
auto with_retries(std::size_t retries, F &&f) {
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return f();
        } catch (const BackendError &e) {
            if (!e.retryable() || attempt >= retries) {
                throw;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(200 * (attempt + 1)));
        }
    }
}

struct SystemicFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace

std::string_view to_string(BackendKind kind) noexcept {
    switch (kind) {
        case BackendKind::Stub: return "stub";
        case BackendKind::LocalModel: return "local-model";
        case BackendKind::RemoteEndpoint: return "remote-endpoint";
    }
    return "stub";
}

std::optional<BackendKind> parse_backend_kind(std::string_view name) noexcept {
    for (const BackendKind kind : {BackendKind::Stub, BackendKind::LocalModel, BackendKind::RemoteEndpoint}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void PipelineConfig::set(std::string_view key, std::string_view raw_value) {
    const std::string value(trim(raw_value));
    const auto bad = [&](std::string_view expected) {
        return InvalidArgument("invalid value '" + value + "' for " + std::string(key) + " (expected " + std::string(expected) + ")");
    };
    if (key == "data_path") {
        data_path = value;
    } else if (key == "dataset") {
        const auto parsed = parse_dataset_kind(value);
        if (!parsed) throw bad("fever, climate-fever or custom");
        dataset = *parsed;
    } else if (key == "attribution_mode") {
        const auto parsed = parse_attribution_mode(value);
        if (!parsed) throw bad("full or span");
        attribution_mode = *parsed;
    } else if (key == "threshold") {
        threshold = parse_double(key, value);
    } else if (key == "aggregation") {
        const auto parsed = parse_aggregation_method(value);
        if (!parsed) throw bad("majority or weighted");
        aggregation = *parsed;
    } else if (key == "classifier_model") {
        classifier_model = value;
    } else if (key == "extractor_model") {
        extractor_model = value;
    } else if (key == "embedder_model") {
        embedder_model = value;
    } else if (key == "embedder_dimension") {
        embedder_dimension = parse_unsigned(key, value);
    } else if (key == "backend") {
        const auto parsed = parse_backend_kind(value);
        if (!parsed) throw bad("stub, local-model or remote-endpoint");
        backend = *parsed;
    } else if (key == "endpoint") {
        endpoint = value;
    } else if (key == "seed") {
        seed = parse_unsigned(key, value);
    } else if (key == "max_length") {
        max_length = parse_unsigned(key, value);
    } else if (key == "separator") {
        separator = value;
    } else if (key == "max_in_flight") {
        max_in_flight = parse_unsigned(key, value);
    } else if (key == "span_score_floor") {
        span_score_floor = parse_double(key, value);
    } else if (key == "cache_dir") {
        cache_dir = value;
    } else if (key == "output_dir") {
        output_dir = value;
    } else if (key == "workers") {
        workers = parse_unsigned(key, value);
    } else if (key == "retries") {
        retries = parse_unsigned(key, value);
    } else {
        throw InvalidArgument("unknown config key '" + std::string(key) + "'");
    }
}

void PipelineConfig::validate() const {
    if (!std::isfinite(threshold) || threshold < 0.0 || threshold > 1.0) {
        throw InvalidArgument("threshold must lie in [0, 1]");
    }
    if (attribution_mode == AttributionMode::Span && trim(extractor_model).empty()) {
        throw InvalidArgument("span attribution requires an extractor model");
    }
    if (trim(classifier_model).empty()) {
        throw InvalidArgument("classifier model must not be empty");
    }
    if (backend == BackendKind::RemoteEndpoint && trim(endpoint).empty()) {
        throw InvalidArgument("remote-endpoint backend requires an endpoint URL");
    }
    if (workers == 0 || max_in_flight == 0 || max_length == 0) {
        throw InvalidArgument("workers, max_in_flight and max_length must be positive");
    }
    if (!embedder_model.empty() && embedder_dimension == 0) {
        throw InvalidArgument("embedder_dimension must be positive");
    }
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::to_key_values() const {
    return {
        {"data_path", data_path.string()},
        {"dataset", std::string(to_string(dataset))},
        {"attribution_mode", std::string(to_string(attribution_mode))},
        {"threshold", format_double(threshold)},
        {"aggregation", std::string(to_string(aggregation))},
        {"classifier_model", classifier_model},
        {"extractor_model", extractor_model},
        {"embedder_model", embedder_model},
        {"embedder_dimension", std::to_string(embedder_dimension)},
        {"backend", std::string(to_string(backend))},
        {"endpoint", endpoint},
        {"seed", std::to_string(seed)},
        {"max_length", std::to_string(max_length)},
        {"separator", separator},
        {"max_in_flight", std::to_string(max_in_flight)},
        {"span_score_floor", format_double(span_score_floor)},
        {"cache_dir", cache_dir.string()},
        {"output_dir", output_dir.string()},
        {"workers", std::to_string(workers)},
        {"retries", std::to_string(retries)},
    };
}

std::string PipelineConfig::fingerprint() const {
    std::string canonical;
    for (const auto &[key, value] : to_key_values()) {
        canonical += key + "=" + value + "\n";
    }
    return sha256_hex(canonical).substr(0, 16);
}

void apply_config_file(PipelineConfig &config, const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open config file '" + path.string() + "'");
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            view = view.substr(0, hash);
        }
        view = trim(view);
        if (view.empty()) {
            continue;
        }
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        try {
            config.set(trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
        } catch (const InvalidArgument &e) {
            throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

OwnedBackends make_backends(const PipelineConfig &config) {
    OwnedBackends backends;
    if (config.backend == BackendKind::Stub) {
        backends.classifier = std::make_unique<StubClassifier>(config.seed, config.classifier_model, config.max_length,
                                                               config.separator, config.max_in_flight);
        backends.extractor = std::make_unique<StubSpanExtractor>(5, config.extractor_model);
        if (!config.embedder_model.empty()) {
            backends.embedder = std::make_unique<StubEmbedder>(config.embedder_dimension, config.embedder_model);
        }
        return backends;
    }
    const EndpointConfig endpoint =
        EndpointConfig::parse(config.endpoint.empty() ? std::string(kDefaultLocalEndpoint) : config.endpoint);
    backends.classifier = std::make_unique<HttpClassifier>(endpoint, config.classifier_model, config.max_length,
                                                           config.separator, config.max_in_flight);
    backends.extractor = std::make_unique<HttpSpanExtractor>(endpoint, config.extractor_model);
    if (!config.embedder_model.empty()) {
        backends.embedder = std::make_unique<HttpEmbedder>(endpoint, config.embedder_model, config.embedder_dimension);
    }
    return backends;
}

std::vector<Eigen::Vector3d> ThrottledClassifier::classify_batch(std::span<const NLIInput> inputs) {
    std::vector<Eigen::Vector3d> outputs;
    outputs.reserve(inputs.size());
    for (std::size_t begin = 0; begin < inputs.size(); begin += capacity_) {
        const std::size_t count = std::min(capacity_, inputs.size() - begin);
        {
            std::unique_lock lock(mutex_);
            available_.wait(lock, [&] { return in_flight_ + count <= capacity_; });
            in_flight_ += count;
        }
        struct Release {
            ThrottledClassifier &self;
            std::size_t count;
            ~Release() {
                {
                    std::lock_guard lock(self.mutex_);
                    self.in_flight_ -= count;
                }
                self.available_.notify_all();
            }
        } release{*this, count};
        forwarded_.fetch_add(count);
        auto chunk = inner_.classify_batch(inputs.subspan(begin, count));
        outputs.insert(outputs.end(), chunk.begin(), chunk.end());
    }
    return outputs;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

std::vector<ClaimOutcome> infer(const PipelineConfig &config, const std::vector<DatasetRecord> &records, BackendSet backends,
                                AttributionMode mode, InferenceStats *stats) {
    if (backends.classifier == nullptr) {
        throw InvalidArgument("no classifier configured");
    }
    if (mode == AttributionMode::Span && backends.extractor == nullptr) {
        throw InvalidArgument("span attribution requires a span extractor");
    }

    std::vector<ClaimOutcome> outcomes(records.size());
    std::unordered_map<std::string, std::size_t> seen_ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        ClaimOutcome &outcome = outcomes[i];
        try {
            auto [claim, passages] = to_claim(records[i]);
            // repeated claim texts (or ids) get an occurrence suffix in file order
            if (const std::size_t occurrence = ++seen_ids[claim.id]; occurrence > 1) {
                claim.id += "-" + std::to_string(occurrence);
                for (std::size_t k = 0; k < passages.size(); ++k) {
                    passages[k].id = claim.id + ":e" + std::to_string(k);
                }
            }
            outcome.claim = std::move(claim);
            outcome.evidence.reserve(passages.size());
            for (EvidencePassage &passage : passages) {
                outcome.evidence.push_back(AttributedEvidence{"", std::move(passage), AttributionMode::Full, {}, {}, 1.0, false});
            }
        } catch (const Error &e) {
            outcome.claim = Claim{"line-" + std::to_string(records[i].line), records[i].claim_text, records[i].gold_label,
                                  records[i].dataset};
            outcome.failure = ClaimFailure{"ingestion", e.what()};
        }
        outcome.verdicts.claim_id = outcome.claim.id;
        outcome.verdicts.gold = outcome.claim.gold_label;
    }

    VerdictCache *cache = nullptr;
    std::unique_ptr<VerdictCache> owned_cache;
    if (!config.cache_dir.empty()) {
        owned_cache = std::make_unique<VerdictCache>(config.cache_dir);
        cache = owned_cache.get();
    }
    ThrottledClassifier throttled(*backends.classifier);
    std::atomic<std::size_t> hits{0};
    std::atomic<std::size_t> misses{0};

    const auto process = [&](ClaimOutcome &outcome) {
        if (outcome.failure) {
            return;
        }
        std::vector<EvidencePassage> passages;
        passages.reserve(outcome.evidence.size());
        for (AttributedEvidence &item : outcome.evidence) {
            passages.push_back(std::move(item.passage));
        }
        outcome.evidence.clear();

        try {
            outcome.evidence = with_retries(config.retries, [&] {
                return mode == AttributionMode::Span
                           ? attribute_span(outcome.claim, passages, *backends.extractor, config.span_score_floor)
                           : attribute_full(outcome.claim, passages);
            });
            if (backends.embedder != nullptr) {
                for (AttributedEvidence &item : outcome.evidence) {
                    with_retries(config.retries, [&] { return score_attribution(outcome.claim, item, *backends.embedder); });
                }
            }
        } catch (const BackendError &e) {
            if (e.retryable()) throw SystemicFailure(e.what());
            outcome.failure = ClaimFailure{"attribution", e.what()};
        } catch (const Error &e) {
            outcome.failure = ClaimFailure{"attribution", e.what()};
        }
        if (outcome.failure) {
            for (EvidencePassage &passage : passages) {
                outcome.evidence.push_back(AttributedEvidence{outcome.claim.id, std::move(passage), mode, {}, {}, 1.0, false});
            }
            return;
        }

        std::vector<VerificationRequest> requests;
        requests.reserve(outcome.evidence.size());
        for (const AttributedEvidence &item : outcome.evidence) {
            requests.push_back({&outcome.claim, &item});
        }
        try {
            Verifier verifier(throttled, cache);
            outcome.verdicts.raws = with_retries(config.retries, [&] { return verifier.verify(requests); });
            hits.fetch_add(verifier.cache_hits());
            misses.fetch_add(verifier.cache_misses());
        } catch (const BackendError &e) {
            if (e.retryable()) throw SystemicFailure(e.what());
            outcome.failure = ClaimFailure{"verification", e.what()};
            return;
        } catch (const Error &e) {
            outcome.failure = ClaimFailure{"verification", e.what()};
            return;
        }

        if (backends.embedder != nullptr) {
            std::vector<double> scores;
            for (const AttributedEvidence &item : outcome.evidence) {
                scores.push_back(item.attribution_score);
            }
            outcome.verdicts.weights = attribution_weights(scores);
            if (config.aggregation == AggregationMethod::Weighted &&
                std::all_of(outcome.verdicts.weights.begin(), outcome.verdicts.weights.end(), [](double w) { return w == 0.0; })) {
                outcome.failure = ClaimFailure{"aggregation", "every attribution weight is zero"};
                outcome.verdicts.raws.clear();
                outcome.verdicts.weights.clear();
            }
        }
    };

    std::atomic<std::size_t> next{0};
    std::exception_ptr systemic;
    std::mutex systemic_mutex;
    const auto worker = [&] {
        for (;;) {
            {
                std::lock_guard lock(systemic_mutex);
                if (systemic) return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= outcomes.size()) return;
            try {
                process(outcomes[i]);
            } catch (...) {
                std::lock_guard lock(systemic_mutex);
                if (!systemic) systemic = std::current_exception();
                return;
            }
        }
    };
    const std::size_t thread_count = std::min<std::size_t>(std::max<std::size_t>(1, config.workers), std::max<std::size_t>(1, outcomes.size()));
    if (thread_count == 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(thread_count);
        for (std::size_t t = 0; t < thread_count; ++t) {
            threads.emplace_back(worker);
        }
    }
    if (systemic) {
        try {
            std::rethrow_exception(systemic);
        } catch (const SystemicFailure &e) {
            throw BackendError(e.what(), true);
        }
    }

    std::stable_sort(outcomes.begin(), outcomes.end(),
                     [](const ClaimOutcome &a, const ClaimOutcome &b) { return a.claim.id < b.claim.id; });
    if (stats != nullptr) {
        stats->classifier_calls += throttled.forwarded();
        stats->cache_hits += hits.load();
        stats->cache_misses += misses.load();
    }
    return outcomes;
}

RunResult run_records(const PipelineConfig &config, const std::vector<DatasetRecord> &records, BackendSet backends) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    RunResult result;
    result.outcomes = infer(config, records, backends, config.attribution_mode, &result.stats);

    bool all_gold = !result.outcomes.empty();
    std::vector<VerdictLabel> pred;
    std::vector<VerdictLabel> gold;
    for (ClaimOutcome &outcome : result.outcomes) {
        FinalVerdict verdict;
        try {
            verdict = decide(outcome.verdicts, config.threshold, config.aggregation);
        } catch (const Error &e) {
            outcome.failure = ClaimFailure{"aggregation", e.what()};
            verdict = FinalVerdict{outcome.claim.id, VerdictLabel::NotEnoughInfo, config.aggregation, {}, {}, 0.0};
        }
        if (outcome.claim.gold_label) {
            pred.push_back(verdict.label);
            gold.push_back(*outcome.claim.gold_label);
        } else {
            all_gold = false;
        }
        result.verdicts.push_back(std::move(verdict));
    }
    if (all_gold) {
        result.report = compute_metrics(pred, gold);
        result.report->config_fingerprint = config.fingerprint();
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

RunResult run(const PipelineConfig &config, BackendSet backends, ReportFormat format) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    LoadResult dataset = load_dataset(config.data_path, config.dataset);
    for (const Rejection &rejection : dataset.rejections) {
        std::cerr << "warning: " << config.data_path.string() << ":" << rejection.line << ": rejected: " << rejection.reason << '\n';
    }
    RunResult result = run_records(config, dataset.records, backends);
    result.dataset = std::move(dataset);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    std::filesystem::create_directories(config.output_dir);
    const auto write = [&](const std::string &name, const std::string &content) {
        std::ofstream out(config.output_dir / name, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) {
            throw Error("cannot write " + (config.output_dir / name).string());
        }
    };
    write("verdicts.jsonl", verdict_stream(result, config));
    if (result.report) {
        write("report." + std::string(to_string(format)), render(*result.report, format));
    }
    write("manifest.json", manifest(config, result).dump(2) + "\n");
    return result;
}

std::vector<AblationCell> ablate(const PipelineConfig &config, const std::vector<DatasetRecord> &records, BackendSet backends,
                                 std::span<const AttributionMode> modes, std::span<const double> taus, InferenceStats *stats) {
    config.validate();
    std::vector<AblationCell> cells;
    for (const AttributionMode mode : modes) {
        const std::vector<ClaimOutcome> outcomes = infer(config, records, backends, mode, stats);
        std::vector<ClaimVerdicts> claims;
        claims.reserve(outcomes.size());
        for (const ClaimOutcome &outcome : outcomes) {
            claims.push_back(outcome.verdicts);
        }
        for (SweepPoint &point : sweep_thresholds(claims, taus, config.aggregation)) {
            point.report.config_fingerprint = config.fingerprint();
            cells.push_back(AblationCell{mode, point.tau, std::move(point.report)});
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Output records
// ---------------------------------------------------------------------------

ordered_json verdict_record(const ClaimOutcome &outcome, const FinalVerdict &verdict, double threshold, AttributionMode mode) {
    const bool downgraded = verdict.label == VerdictLabel::NotEnoughInfo &&
                            std::any_of(verdict.inputs.begin(), verdict.inputs.end(),
                                        [](const CalibratedVerdict &v) { return v.downgraded; });
    ordered_json record;
    record["claim_id"] = outcome.claim.id;
    record["label"] = to_string(verdict.label);
    record["confidence"] = verdict.confidence;
    record["downgraded"] = downgraded;
    record["threshold"] = threshold;
    record["evidence_mode"] = to_string(mode);
    record["aggregation"] = to_string(verdict.method);
    ordered_json per_evidence = ordered_json::array();
    for (std::size_t i = 0; i < outcome.evidence.size(); ++i) {
        const AttributedEvidence &item = outcome.evidence[i];
        ordered_json entry;
        entry["evidence_id"] = item.passage.id;
        entry["mode"] = to_string(item.mode);
        entry["fallback"] = item.fallback;
        if (item.span_text) {
            entry["span"] = *item.span_text;
            entry["span_offsets"] = {item.span_offsets->first, item.span_offsets->second};
        }
        entry["attribution_score"] = item.attribution_score;
        if (i < verdict.inputs.size()) {
            const CalibratedVerdict &v = verdict.inputs[i];
            entry["raw_label"] = to_string(v.raw.label);
            entry["raw_confidence"] = v.raw.confidence;
            entry["probs"] = {v.raw.probs.supported(), v.raw.probs.refuted(), v.raw.probs.nei()};
            entry["label"] = to_string(v.label);
            entry["downgraded"] = v.downgraded;
            entry["truncated"] = v.raw.truncated;
            if (i < verdict.weights.size()) {
                entry["weight"] = verdict.weights[i];
            }
        }
        per_evidence.push_back(std::move(entry));
    }
    record["per_evidence"] = std::move(per_evidence);
    if (outcome.failure) {
        record["error"] = {{"stage", outcome.failure->stage}, {"message", outcome.failure->message}};
    }
    return record;
}

std::string verdict_stream(const RunResult &result, const PipelineConfig &config) {
    std::string out;
    for (std::size_t i = 0; i < result.outcomes.size(); ++i) {
        out += verdict_record(result.outcomes[i], result.verdicts[i], config.threshold, config.attribution_mode).dump();
        out += '\n';
    }
    return out;
}

ordered_json manifest(const PipelineConfig &config, const RunResult &result) {
    ordered_json out;
    out["fingerprint"] = config.fingerprint();
    ordered_json effective;
    for (const auto &[key, value] : config.to_key_values()) {
        effective[key] = value;
    }
    out["config"] = std::move(effective);

    const ClassCounts observed = class_distribution(result.dataset.records);
    const std::optional<ClassCounts> expected = reference_distribution(config.dataset);
    ordered_json dataset;
    dataset["path"] = config.data_path.string();
    dataset["kind"] = to_string(config.dataset);
    dataset["total_lines"] = result.dataset.total_lines;
    dataset["accepted"] = result.dataset.records.size();
    dataset["rejected"] = result.dataset.rejections.size();
    for (const VerdictLabel label : kVerdictLabels) {
        dataset["distribution"][std::string(to_string(label))] = observed[index_of(label)];
    }
    if (expected) {
        for (const VerdictLabel label : kVerdictLabels) {
            dataset["reference_distribution"][std::string(to_string(label))] = (*expected)[index_of(label)];
        }
        dataset["matches_reference"] = observed == *expected;
    }
    out["dataset"] = std::move(dataset);

    ordered_json backend;
    backend["kind"] = to_string(config.backend);
    backend["classifier_model"] = config.classifier_model;
    backend["extractor_model"] = config.attribution_mode == AttributionMode::Span ? config.extractor_model : "";
    backend["embedder_model"] = config.embedder_model;
    backend["input_form"] = "structured pair (premise=evidence, hypothesis=claim) + separator-joined string";
    backend["truncation_policy"] = std::string(kTruncationPolicyVersion);
    out["backend"] = std::move(backend);

    std::size_t failed = 0;
    for (const ClaimOutcome &outcome : result.outcomes) {
        failed += outcome.failure ? 1 : 0;
    }
    out["claims"] = {{"total", result.outcomes.size()}, {"failed", failed}};
    out["inference"] = {{"classifier_calls", result.stats.classifier_calls},
                        {"cache_hits", result.stats.cache_hits},
                        {"cache_misses", result.stats.cache_misses}};
    if (result.report) {
        out["accuracy"] = result.report->accuracy;
    }
    out["wall_seconds"] = result.wall_seconds;
    return out;
}

}  // namespace claimver
