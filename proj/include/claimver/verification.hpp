#pragma once

#include "claimver/attribution.hpp"
#include "claimver/backend.hpp"
#include "claimver/core.hpp"

#include <atomic>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimver {

struct RawVerdict {
    std::string claim_id;
    std::string evidence_id;
    VerdictLabel label{VerdictLabel::NotEnoughInfo};
    double confidence{};
    ProbabilityVector probs;
    std::string model_id;
    bool truncated{false};

    /// Label is the tie-ordered argmax of `probs` and confidence its maximum.
    [[nodiscard]] static RawVerdict from_probs(std::string claim_id, std::string evidence_id, const ProbabilityVector &probs,
                                               std::string model_id, bool truncated = false);
};

/// "<claim> <separator> <evidence>" with the verification text of `item`.
/// An empty separator yields "<claim> <evidence>"; such backends are expected to
/// consume the structured pair from `make_input` instead.
[[nodiscard]] std::string format_input(const Claim &claim, const AttributedEvidence &item, std::string_view separator);

struct TruncatedEvidence {
    std::string text;
    bool truncated{false};
};

/// Cuts evidence from the right so that claim words + evidence words fit in
/// `max_words`. The claim is never cut and at least one evidence word is kept.
[[nodiscard]] TruncatedEvidence truncate_evidence(std::string_view claim_text, std::string_view evidence, std::size_t max_words);

struct PreparedInput {
    NLIInput input;
    bool truncated{false};
};

/// Applies the truncation policy and builds both the joined and structured forms.
[[nodiscard]] PreparedInput make_input(const Claim &claim, const AttributedEvidence &item, const NLIClassifier &classifier);

/// Classifies one pair. Failures are rethrown as BackendError carrying the claim
/// and evidence ids (retryability preserved).
[[nodiscard]] RawVerdict verify_pair(const Claim &claim, const AttributedEvidence &item, NLIClassifier &classifier);

struct VerificationRequest {
    const Claim *claim;
    const AttributedEvidence *item;
};

/// Batched verification through an optional cache. Requests are sent to the
/// classifier in chunks of `max_in_flight()`; cached pairs never reach it.
/// Output order matches input order and is independent of chunking.
class Verifier {
  public:
    explicit Verifier(NLIClassifier &classifier, VerdictCache *cache = nullptr, std::size_t batch_size = 0);

    [[nodiscard]] std::vector<RawVerdict> verify(std::span<const VerificationRequest> requests);

    [[nodiscard]] NLIClassifier &classifier() noexcept { return classifier_; }
    [[nodiscard]] std::size_t cache_hits() const noexcept { return hits_.load(); }
    [[nodiscard]] std::size_t cache_misses() const noexcept { return misses_.load(); }

  private:
    NLIClassifier &classifier_;
    VerdictCache *cache_;
    std::size_t batch_size_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

}  // namespace claimver
