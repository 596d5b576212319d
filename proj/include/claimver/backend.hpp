#pragma once

#include "claimver/core.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace claimver {

/// One classifier request. Backends receive both the literal separator-joined
/// string and the structured (premise = evidence, hypothesis = claim) pair and
/// consume whichever form their model expects.
struct NLIInput {
    std::string premise;
    std::string hypothesis;
    std::string joined;
};

/// Entailment classifier. `classify_batch` returns one (Entailment, Contradiction,
/// Neutral) score vector per input; callers validate them with `validate_nli_output`.
class NLIClassifier {
  public:
    virtual ~NLIClassifier() = default;

    [[nodiscard]] virtual std::string model_id() const = 0;
    /// Length budget in whitespace-delimited words for claim + evidence.
    [[nodiscard]] virtual std::size_t max_length() const { return 512; }
    [[nodiscard]] virtual std::string separator() const { return "[SEP]"; }
    [[nodiscard]] virtual std::size_t max_in_flight() const { return 8; }

    [[nodiscard]] virtual std::vector<Eigen::Vector3d> classify_batch(std::span<const NLIInput> inputs) = 0;
};

struct ExtractedSpan {
    std::size_t start{};
    std::size_t end{};  ///< exclusive; `start == end` means no answer
    double score{};
};

class SpanExtractor {
  public:
    virtual ~SpanExtractor() = default;
    [[nodiscard]] virtual std::string model_id() const = 0;
    /// Byte offsets into `context` of the best answer to `question`.
    [[nodiscard]] virtual ExtractedSpan extract(std::string_view question, std::string_view context) = 0;
};

class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    [[nodiscard]] virtual std::string model_id() const = 0;
    [[nodiscard]] virtual std::size_t dimension() const = 0;
    [[nodiscard]] virtual Eigen::VectorXd embed(std::string_view text) = 0;
};

/// Sum tolerance accepted from backends after their softmax.
inline constexpr double kBackendSumTolerance = 1e-6;

/// Checks arity, range and normalization of a raw backend vector and converts
/// it to verdict order. Throws a non-retryable BackendError with the payload
/// dumped into the message when the vector is malformed.
[[nodiscard]] ProbabilityVector validate_nli_output(std::span<const double> nli_order_scores);

/// Classifies a single pair and validates the result.
[[nodiscard]] ProbabilityVector classify(NLIClassifier &classifier, const std::string &premise, const std::string &hypothesis);

// ---------------------------------------------------------------------------
// Deterministic stub backend
// ---------------------------------------------------------------------------

/// Seed-stable pseudo-classifier: each (model, premise, hypothesis) maps through a
/// keyed SHA-256 to a fixed softmax distribution. Fixture pairs can be pinned via
/// `set_override`. Counts every pair it scores.
class StubClassifier final : public NLIClassifier {
  public:
    explicit StubClassifier(std::uint64_t seed = 0, std::string model_id = "stub-nli", std::size_t max_length = 512,
                            std::string separator = "[SEP]", std::size_t max_in_flight = 8);

    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] std::size_t max_length() const override { return max_length_; }
    [[nodiscard]] std::string separator() const override { return separator_; }
    [[nodiscard]] std::size_t max_in_flight() const override { return max_in_flight_; }

    [[nodiscard]] std::vector<Eigen::Vector3d> classify_batch(std::span<const NLIInput> inputs) override;

    /// Pins the (Entailment, Contradiction, Neutral) output for one pair.
    void set_override(const std::string &premise, const std::string &hypothesis, const Eigen::Vector3d &nli_scores);

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }
    void reset_calls() noexcept { calls_.store(0); }

  private:
    [[nodiscard]] Eigen::Vector3d score(const NLIInput &input) const;

    std::uint64_t seed_;
    std::string model_id_;
    std::size_t max_length_;
    std::string separator_;
    std::size_t max_in_flight_;
    std::map<std::pair<std::string, std::string>, Eigen::Vector3d> overrides_;
    std::atomic<std::size_t> calls_{0};
};

/// Picks a window of up to `window` words centred on the first passage occurrence of
/// the claim's last word that the passage contains (case-insensitive, punctuation
/// ignored). Returns an empty span when no word overlaps. The score is the fraction of claim words found inside the window.
class StubSpanExtractor final : public SpanExtractor {
  public:
    explicit StubSpanExtractor(std::size_t window = 5, std::string model_id = "stub-qa")
        : window_(window), model_id_(std::move(model_id)) {}
    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] ExtractedSpan extract(std::string_view question, std::string_view context) override;

  private:
    std::size_t window_;
    std::string model_id_;
};

/// Hashed bag-of-words embedding (lower-cased alphanumeric tokens).
class StubEmbedder final : public TextEmbedder {
  public:
    explicit StubEmbedder(std::size_t dimension = 64, std::string model_id = "stub-embed")
        : dimension_(dimension), model_id_(std::move(model_id)) {}
    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] std::size_t dimension() const override { return dimension_; }
    [[nodiscard]] Eigen::VectorXd embed(std::string_view text) override;

  private:
    std::size_t dimension_;
    std::string model_id_;
};

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Connection settings for the JSON-over-HTTP inference protocol:
///   POST /classify {"model", "pairs": [{"premise","hypothesis","joined"}]} -> {"probs": [[e,c,n], ...]}
///   POST /extract  {"model", "question", "context"} -> {"start", "end", "score"}
///   POST /embed    {"model", "texts": [...]} -> {"vectors": [[...], ...]}
struct EndpointConfig {
    std::string host{"127.0.0.1"};
    int port{8765};
    int timeout_seconds{120};

    /// Accepts `http://host:port` or `host:port`.
    [[nodiscard]] static EndpointConfig parse(std::string_view url);
};

class HttpClassifier final : public NLIClassifier {
  public:
    HttpClassifier(EndpointConfig endpoint, std::string model_id, std::size_t max_length = 512,
                   std::string separator = "[SEP]", std::size_t max_in_flight = 8);
    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] std::size_t max_length() const override { return max_length_; }
    [[nodiscard]] std::string separator() const override { return separator_; }
    [[nodiscard]] std::size_t max_in_flight() const override { return max_in_flight_; }
    [[nodiscard]] std::vector<Eigen::Vector3d> classify_batch(std::span<const NLIInput> inputs) override;

  private:
    EndpointConfig endpoint_;
    std::string model_id_;
    std::size_t max_length_;
    std::string separator_;
    std::size_t max_in_flight_;
};

class HttpSpanExtractor final : public SpanExtractor {
  public:
    HttpSpanExtractor(EndpointConfig endpoint, std::string model_id)
        : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)) {}
    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] ExtractedSpan extract(std::string_view question, std::string_view context) override;

  private:
    EndpointConfig endpoint_;
    std::string model_id_;
};

class HttpEmbedder final : public TextEmbedder {
  public:
    HttpEmbedder(EndpointConfig endpoint, std::string model_id, std::size_t dimension)
        : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), dimension_(dimension) {}
    [[nodiscard]] std::string model_id() const override { return model_id_; }
    [[nodiscard]] std::size_t dimension() const override { return dimension_; }
    [[nodiscard]] Eigen::VectorXd embed(std::string_view text) override;

  private:
    EndpointConfig endpoint_;
    std::string model_id_;
    std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Verdict cache
// ---------------------------------------------------------------------------

/// Version tag of the evidence truncation policy; part of every cache key.
inline constexpr std::string_view kTruncationPolicyVersion = "words-right-v1";

struct CacheValue {
    ProbabilityVector probs;  ///< verdict order
    bool truncated{false};
};

/// Content hash over NFC-normalized inputs, model id and policy version.
[[nodiscard]] std::string cache_key(std::string_view model_id, std::string_view premise, std::string_view hypothesis,
                                    std::string_view policy_version = kTruncationPolicyVersion);

/// On-disk key-value store: 16 shard files `shard-<hex>.jsonl`, one entry per line.
/// Readers run concurrently; writers are serialized. Corrupt lines are treated as
/// misses and copied to `quarantine.jsonl`.
class VerdictCache {
  public:
    explicit VerdictCache(std::filesystem::path directory);

    [[nodiscard]] std::optional<CacheValue> get(const std::string &key);
    void put(const std::string &key, const CacheValue &value);

    [[nodiscard]] const std::filesystem::path &directory() const noexcept { return directory_; }
    [[nodiscard]] std::size_t quarantined() const noexcept { return quarantined_.load(); }

  private:
    struct Shard {
        bool loaded{false};
        std::unordered_map<std::string, CacheValue> entries;
    };

    [[nodiscard]] std::filesystem::path shard_path(std::size_t shard) const;
    void ensure_loaded(std::size_t shard);
    void quarantine(const std::string &line, const std::string &reason);

    std::filesystem::path directory_;
    std::shared_mutex mutex_;
    std::array<Shard, 16> shards_;
    std::atomic<std::size_t> quarantined_{0};
};

/// Directory from the CLAIMVER_CACHE_DIR environment variable, else `fallback`.
[[nodiscard]] std::filesystem::path default_cache_dir(const std::filesystem::path &fallback = ".claimver-cache");

}  // namespace claimver
