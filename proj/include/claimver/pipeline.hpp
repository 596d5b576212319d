#pragma once

#include "claimver/aggregation.hpp"
#include "claimver/attribution.hpp"
#include "claimver/backend.hpp"
#include "claimver/evaluation.hpp"
#include "claimver/ingestion.hpp"
#include "claimver/verification.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace claimver {

enum class BackendKind : std::uint8_t { Stub, LocalModel, RemoteEndpoint };

[[nodiscard]] std::string_view to_string(BackendKind kind) noexcept;  // "stub" / "local-model" / "remote-endpoint"
[[nodiscard]] std::optional<BackendKind> parse_backend_kind(std::string_view name) noexcept;

inline constexpr std::string_view kDefaultClassifierModel = "microsoft/deberta-large-mnli";
inline constexpr std::string_view kDefaultExtractorModel = "deepset/roberta-base-squad2-distilled";
inline constexpr std::string_view kDefaultLocalEndpoint = "http://127.0.0.1:8765";

/// Checkpoints evaluated in the reproduction configs.
inline constexpr std::array<std::string_view, 4> kReferenceClassifierModels{
    "microsoft/deberta-large-mnli", "FacebookAI/roberta-large-mnli", "facebook/bart-large-mnli",
    "ynie/roberta-large-snli_mnli_fever_anli_R1_R2_R3-nli"};

/// Every knob of a run. Key names double as the keys of the flat config file.
struct PipelineConfig {
    std::filesystem::path data_path;
    DatasetKind dataset{DatasetKind::Custom};
    AttributionMode attribution_mode{AttributionMode::Full};
    double threshold{kDefaultThreshold};
    AggregationMethod aggregation{AggregationMethod::Majority};
    std::string classifier_model{kDefaultClassifierModel};
    std::string extractor_model{kDefaultExtractorModel};
    std::string embedder_model;  ///< empty: uniform attribution scores
    std::size_t embedder_dimension{64};
    BackendKind backend{BackendKind::Stub};
    std::string endpoint;  ///< remote-endpoint URL; local-model defaults to kDefaultLocalEndpoint
    std::uint64_t seed{0};
    std::size_t max_length{512};
    std::string separator{"[SEP]"};
    std::size_t max_in_flight{8};
    double span_score_floor{0.0};
    std::filesystem::path cache_dir;  ///< empty: no cache
    std::filesystem::path output_dir{"out"};
    std::size_t workers{1};
    std::size_t retries{2};

    /// Sets one field from its config-file spelling. Throws InvalidArgument for
    /// unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);
    /// Throws InvalidArgument when the combination of fields is unusable.
    void validate() const;
    /// All fields as (key, value) strings in declaration order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> to_key_values() const;
    /// First 16 hex digits of SHA-256 over the canonical key=value listing.
    [[nodiscard]] std::string fingerprint() const;
};

/// Reads `key = value` lines; `#` starts a comment. Unknown keys are errors.
void apply_config_file(PipelineConfig &config, const std::filesystem::path &path);

/// Non-owning view of the backends a run uses.
struct BackendSet {
    NLIClassifier *classifier{nullptr};
    SpanExtractor *extractor{nullptr};
    TextEmbedder *embedder{nullptr};
};

struct OwnedBackends {
    std::unique_ptr<NLIClassifier> classifier;
    std::unique_ptr<SpanExtractor> extractor;
    std::unique_ptr<TextEmbedder> embedder;

    [[nodiscard]] BackendSet view() const noexcept { return {classifier.get(), extractor.get(), embedder.get()}; }
};

/// Instantiates the backends named by the config (stub or HTTP).
[[nodiscard]] OwnedBackends make_backends(const PipelineConfig &config);

/// Wraps a classifier and caps the number of pairs in flight at its
/// `max_in_flight()`, across all threads. Counts the pairs forwarded.
class ThrottledClassifier final : public NLIClassifier {
  public:
    explicit ThrottledClassifier(NLIClassifier &inner) : inner_(inner), capacity_(std::max<std::size_t>(1, inner.max_in_flight())) {}

    [[nodiscard]] std::string model_id() const override { return inner_.model_id(); }
    [[nodiscard]] std::size_t max_length() const override { return inner_.max_length(); }
    [[nodiscard]] std::string separator() const override { return inner_.separator(); }
    [[nodiscard]] std::size_t max_in_flight() const override { return capacity_; }
    [[nodiscard]] std::vector<Eigen::Vector3d> classify_batch(std::span<const NLIInput> inputs) override;

    [[nodiscard]] std::size_t forwarded() const noexcept { return forwarded_.load(); }

  private:
    NLIClassifier &inner_;
    std::size_t capacity_;
    std::size_t in_flight_{0};
    std::mutex mutex_;
    std::condition_variable available_;
    std::atomic<std::size_t> forwarded_{0};
};

struct ClaimFailure {
    std::string stage;  ///< ingestion, attribution, verification, aggregation
    std::string message;
};

/// Per-claim state after one inference pass; threshold-independent.
struct ClaimOutcome {
    Claim claim;
    std::vector<AttributedEvidence> evidence;
    ClaimVerdicts verdicts;
    std::optional<ClaimFailure> failure;
};

struct InferenceStats {
    std::size_t classifier_calls{};  ///< pairs that reached the backend
    std::size_t cache_hits{};
    std::size_t cache_misses{};
};

/// Attribution and verification of every record, in parallel over claims with
/// `config.workers` threads. Outcomes are sorted by claim id. Per-claim errors
/// become failures; retryable backend errors that persist after
/// `config.retries` attempts abort the pass.
[[nodiscard]] std::vector<ClaimOutcome> infer(const PipelineConfig &config, const std::vector<DatasetRecord> &records,
                                              BackendSet backends, AttributionMode mode, InferenceStats *stats = nullptr);

struct RunResult {
    std::vector<ClaimOutcome> outcomes;
    std::vector<FinalVerdict> verdicts;  ///< parallel to `outcomes`
    std::optional<EvaluationReport> report;
    LoadResult dataset;
    InferenceStats stats;
    double wall_seconds{};
};

/// Loads the dataset, runs inference through the cache, recalibrates at
/// `config.threshold`, aggregates, evaluates when every claim has gold, and
/// writes verdicts.jsonl, manifest.json and report.<format> into `config.output_dir`.
[[nodiscard]] RunResult run(const PipelineConfig &config, BackendSet backends, ReportFormat format = ReportFormat::Json);

/// In-memory part of `run` over already-loaded records; writes nothing.
[[nodiscard]] RunResult run_records(const PipelineConfig &config, const std::vector<DatasetRecord> &records, BackendSet backends);

struct AblationCell {
    AttributionMode mode{};
    double tau{};
    EvaluationReport report;
};

/// Every (mode, tau) combination; one inference pass per mode.
[[nodiscard]] std::vector<AblationCell> ablate(const PipelineConfig &config, const std::vector<DatasetRecord> &records,
                                               BackendSet backends, std::span<const AttributionMode> modes,
                                               std::span<const double> taus, InferenceStats *stats = nullptr);

/// One line of verdicts.jsonl.
[[nodiscard]] nlohmann::ordered_json verdict_record(const ClaimOutcome &outcome, const FinalVerdict &verdict, double threshold,
                                                    AttributionMode mode);
/// Full verdicts.jsonl content.
[[nodiscard]] std::string verdict_stream(const RunResult &result, const PipelineConfig &config);

[[nodiscard]] nlohmann::ordered_json manifest(const PipelineConfig &config, const RunResult &result);

}  // namespace claimver
