#include "claimver/attribution.hpp"

#include <cmath>

namespace claimver {

std::string_view to_string(AttributionMode mode) noexcept {
    return mode == AttributionMode::Span ? "span" : "full";
}

std::optional<AttributionMode> parse_attribution_mode(std::string_view name) noexcept {
    if (name == "full") return AttributionMode::Full;
    if (name == "span") return AttributionMode::Span;
    return std::nullopt;
}

std::vector<AttributedEvidence> attribute_full(const Claim &claim, std::span<const EvidencePassage> passages) {
    if (passages.empty()) {
        throw InvalidArgument("claim '" + claim.id + "' has no attributable evidence");
    }
    std::vector<AttributedEvidence> items;
    items.reserve(passages.size());
    for (const EvidencePassage &passage : passages) {
        items.push_back(AttributedEvidence{claim.id, passage, AttributionMode::Full, std::nullopt, std::nullopt, 1.0, false});
    }
    return items;
}

std::vector<AttributedEvidence> attribute_span(const Claim &claim, std::span<const EvidencePassage> passages,
                                               SpanExtractor &extractor, double score_floor) {
    if (passages.empty()) {
        throw InvalidArgument("claim '" + claim.id + "' has no attributable evidence");
    }
    std::vector<AttributedEvidence> items;
    items.reserve(passages.size());
    for (const EvidencePassage &passage : passages) {
        ExtractedSpan span;
        try {
            span = extractor.extract(claim.text, passage.text);
        } catch (const BackendError &e) {
            throw BackendError("span extraction failed for passage '" + passage.id + "': " + e.what(), e.retryable());
        } catch (const std::exception &e) {
            throw BackendError("span extraction failed for passage '" + passage.id + "': " + e.what(), false);
        }
        if (span.start > span.end || span.end > passage.text.size()) {
            throw BackendError("extractor returned offsets [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                                   ") outside passage '" + passage.id + "'",
                               false);
        }
        AttributedEvidence item{claim.id, passage, AttributionMode::Span, std::nullopt, std::nullopt, 1.0, false};
        const std::string_view text = std::string_view(passage.text).substr(span.start, span.end - span.start);
        if (trim(text).empty() || span.score < score_floor) {
            item.mode = AttributionMode::Full;
            item.fallback = true;
        } else {
            item.span_text = std::string(text);
            item.span_offsets = std::pair{span.start, span.end};
        }
        items.push_back(std::move(item));
    }
    return items;
}

double score_attribution(const Claim &claim, AttributedEvidence &item, TextEmbedder &embedder) {
    const Eigen::VectorXd claim_vector = embedder.embed(claim.text);
    const Eigen::VectorXd evidence_vector = embedder.embed(item.verification_text());
    if (claim_vector.size() != evidence_vector.size()) {
        throw BackendError("embedder '" + embedder.model_id() + "' returned vectors of different dimension", false);
    }
    const double score = cosine_similarity(claim_vector, evidence_vector);
    if (!std::isfinite(score)) {
        throw BackendError("embedder '" + embedder.model_id() + "' produced a non-finite similarity", false);
    }
    item.attribution_score = score;
    return score;
}

}  // namespace claimver
