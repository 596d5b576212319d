#pragma once

#include "claimver/verification.hpp"

namespace claimver {

/// Verifier output after the confidence threshold. A verdict whose confidence is
/// below the threshold is relabelled NotEnoughInfo and marked `downgraded`;
/// reports render such labels with a trailing '#'.
struct CalibratedVerdict {
    RawVerdict raw;
    double threshold{};
    VerdictLabel label{VerdictLabel::NotEnoughInfo};
    bool downgraded{false};

    /// Distribution used downstream: one-hot NEI when downgraded, else `raw.probs`.
    [[nodiscard]] ProbabilityVector effective_probs() const;
    /// The calibrated verdict re-expressed as a raw verdict over `effective_probs()`.
    [[nodiscard]] RawVerdict as_raw() const;
};

/// label = raw.label if raw.confidence >= tau, NotEnoughInfo otherwise.
/// Throws InvalidArgument when tau is outside [0, 1] or not finite.
[[nodiscard]] CalibratedVerdict recalibrate(const RawVerdict &raw, double tau);

inline constexpr double kDefaultThreshold = 0.6;

}  // namespace claimver
