#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace claimver {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad threshold, empty list, ...).
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Input data could not be read or a record failed validation.
class DataError : public Error {
  public:
    using Error::Error;
};

/// An inference backend failed. `retryable()` distinguishes transport failures
/// (endpoint down, timeout) from contract violations such as a malformed payload.
class BackendError : public Error {
  public:
    BackendError(const std::string &what, bool retryable) : Error(what), retryable_(retryable) {}
    [[nodiscard]] bool retryable() const noexcept { return retryable_; }

  private:
    bool retryable_;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Three-way verdict. The enumerator order is the deterministic tie-break order:
/// on exactly equal scores the lowest index wins.
enum class VerdictLabel : std::uint8_t { Supported = 0, Refuted = 1, NotEnoughInfo = 2 };

/// Entailment classifier output classes, in the order backends report them.
enum class NLILabel : std::uint8_t { Entailment = 0, Contradiction = 1, Neutral = 2 };

inline constexpr std::size_t kNumLabels = 3;

inline constexpr std::array<VerdictLabel, kNumLabels> kVerdictLabels{VerdictLabel::Supported, VerdictLabel::Refuted,
                                                                       VerdictLabel::NotEnoughInfo};
inline constexpr std::array<NLILabel, kNumLabels> kNLILabels{NLILabel::Entailment, NLILabel::Contradiction,
                                                               NLILabel::Neutral};

[[nodiscard]] constexpr std::size_t index_of(VerdictLabel label) noexcept { return static_cast<std::size_t>(label); }
[[nodiscard]] constexpr std::size_t index_of(NLILabel label) noexcept { return static_cast<std::size_t>(label); }

[[nodiscard]] constexpr VerdictLabel map_nli_to_verdict(NLILabel label) noexcept {
    switch (label) {
        case NLILabel::Entailment: return VerdictLabel::Supported;
        case NLILabel::Contradiction: return VerdictLabel::Refuted;
        case NLILabel::Neutral: return VerdictLabel::NotEnoughInfo;
    }
    return VerdictLabel::NotEnoughInfo;
}

[[nodiscard]] constexpr NLILabel map_verdict_to_nli(VerdictLabel label) noexcept {
    switch (label) {
        case VerdictLabel::Supported: return NLILabel::Entailment;
        case VerdictLabel::Refuted: return NLILabel::Contradiction;
        case VerdictLabel::NotEnoughInfo: return NLILabel::Neutral;
    }
    return NLILabel::Neutral;
}

/// Canonical upper-case names used in every output file: SUPPORTED, REFUTED, NOT_ENOUGH_INFO.
[[nodiscard]] std::string_view to_string(VerdictLabel label) noexcept;
[[nodiscard]] std::string_view to_string(NLILabel label) noexcept;
/// Inverse of `to_string(VerdictLabel)`; exact match only.
[[nodiscard]] std::optional<VerdictLabel> parse_verdict_label(std::string_view name) noexcept;

enum class DatasetKind : std::uint8_t { Fever, ClimateFever, Custom };

/// `fever`, `climate-fever`, `custom`
[[nodiscard]] std::string_view to_string(DatasetKind kind) noexcept;
[[nodiscard]] std::optional<DatasetKind> parse_dataset_kind(std::string_view name) noexcept;

// ---------------------------------------------------------------------------
// Text utilities
// ---------------------------------------------------------------------------

[[nodiscard]] std::string_view trim(std::string_view text) noexcept;
[[nodiscard]] std::string to_lower_ascii(std::string_view text);
/// Unicode NFC normalization of UTF-8 text. Invalid UTF-8 is returned unchanged.
[[nodiscard]] std::string nfc_normalize(std::string_view text);
/// Lower-case hex SHA-256 of the raw bytes.
[[nodiscard]] std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------------------
// Domain values
// ---------------------------------------------------------------------------

struct Claim {
    std::string id;
    std::string text;
    std::optional<VerdictLabel> gold_label;
    DatasetKind dataset{DatasetKind::Custom};

    /// Validates the text and fills in a content-hash id when `id` is empty.
    [[nodiscard]] static Claim make(std::string id, std::string text, std::optional<VerdictLabel> gold, DatasetKind dataset);
};

/// Stable id derived from (dataset, text): first 16 hex digits of a SHA-256.
[[nodiscard]] std::string derive_claim_id(DatasetKind dataset, std::string_view text);

struct EvidencePassage {
    std::string id;
    std::string text;
    std::optional<std::string> source_doc;

    [[nodiscard]] static EvidencePassage make(std::string id, std::string text, std::optional<std::string> source_doc = {});
};

/// Distribution over (Supported, Refuted, NotEnoughInfo). Construction enforces
/// that each component lies in [0,1] and that the components sum to 1 within 1e-6.
class ProbabilityVector {
  public:
    static constexpr double kSumTolerance = 1e-6;

    /// Uniform distribution.
    ProbabilityVector();

    [[nodiscard]] static ProbabilityVector from_verdict_order(const Eigen::Vector3d &values);
    [[nodiscard]] static ProbabilityVector from_verdict_order(double supported, double refuted, double nei);
    /// Reorders an (Entailment, Contradiction, Neutral) vector through `map_nli_to_verdict`.
    [[nodiscard]] static ProbabilityVector from_nli_order(const Eigen::Vector3d &values);
    [[nodiscard]] static ProbabilityVector one_hot(VerdictLabel label);

    [[nodiscard]] double operator[](VerdictLabel label) const noexcept { return values_[static_cast<Eigen::Index>(index_of(label))]; }
    [[nodiscard]] double supported() const noexcept { return values_[0]; }
    [[nodiscard]] double refuted() const noexcept { return values_[1]; }
    [[nodiscard]] double nei() const noexcept { return values_[2]; }
    [[nodiscard]] const Eigen::Vector3d &values() const noexcept { return values_; }

    /// Highest-probability label; exact ties go to the lowest index.
    [[nodiscard]] VerdictLabel argmax() const noexcept;
    [[nodiscard]] double max() const noexcept { return values_.maxCoeff(); }

    friend bool operator==(const ProbabilityVector &a, const ProbabilityVector &b) noexcept { return a.values_ == b.values_; }

  private:
    explicit ProbabilityVector(const Eigen::Vector3d &values) : values_(values) {}
    Eigen::Vector3d values_;
};

/// True if `values` is a valid distribution under the `ProbabilityVector` rules.
[[nodiscard]] bool is_normalized(const Eigen::Vector3d &values, double tolerance = ProbabilityVector::kSumTolerance) noexcept;

}  // namespace claimver
