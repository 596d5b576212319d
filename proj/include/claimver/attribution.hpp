#pragma once

#include "claimver/backend.hpp"
#include "claimver/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace claimver {

enum class AttributionMode : std::uint8_t { Full, Span };

[[nodiscard]] std::string_view to_string(AttributionMode mode) noexcept;  // "full" / "span"
[[nodiscard]] std::optional<AttributionMode> parse_attribution_mode(std::string_view name) noexcept;

struct AttributedEvidence {
    std::string claim_id;
    EvidencePassage passage;
    AttributionMode mode{AttributionMode::Full};
    std::optional<std::string> span_text;
    std::optional<std::pair<std::size_t, std::size_t>> span_offsets;  ///< byte range [start, end) into passage.text
    double attribution_score{1.0};
    /// Span extraction failed and the full passage was used instead.
    bool fallback{false};

    /// Text handed to the verifier: the span in Span mode, the passage otherwise.
    [[nodiscard]] const std::string &verification_text() const noexcept {
        return mode == AttributionMode::Span && span_text ? *span_text : passage.text;
    }
};

/// Passes each passage through unchanged. Throws InvalidArgument when `passages` is empty.
[[nodiscard]] std::vector<AttributedEvidence> attribute_full(const Claim &claim, std::span<const EvidencePassage> passages);

/// Queries `extractor` with the claim text as the question and each passage as
/// context. An empty span, or one scoring below `score_floor`, falls back to the
/// full passage with `fallback = true`. Extractor failures are rethrown as
/// BackendError naming the passage id; out-of-range offsets are a contract violation.
[[nodiscard]] std::vector<AttributedEvidence> attribute_span(const Claim &claim, std::span<const EvidencePassage> passages,
                                                             SpanExtractor &extractor, double score_floor = 0.0);

/// Cosine similarity clamped to [-1, 1]. Zero vectors have similarity 0.
template <typename DerivedA, typename DerivedB>
[[nodiscard]] typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA> &a,
                                                          const Eigen::MatrixBase<DerivedB> &b) {
    using Scalar = typename DerivedA::Scalar;
    const Scalar denom = a.norm() * b.norm();
    if (denom == Scalar(0)) {
        return Scalar(0);
    }
    return std::clamp(a.dot(b) / denom, Scalar(-1), Scalar(1));
}

/// Embeds the claim and the verification text, stores the cosine similarity in
/// `item.attribution_score` and returns it. Embedder failures propagate; a
/// dimension mismatch throws BackendError.
double score_attribution(const Claim &claim, AttributedEvidence &item, TextEmbedder &embedder);

}  // namespace claimver
