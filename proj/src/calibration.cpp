#include "claimver/calibration.hpp"

#include <cmath>

namespace claimver {

ProbabilityVector CalibratedVerdict::effective_probs() const {
    return downgraded ? ProbabilityVector::one_hot(VerdictLabel::NotEnoughInfo) : raw.probs;
}

RawVerdict CalibratedVerdict::as_raw() const {
    return RawVerdict::from_probs(raw.claim_id, raw.evidence_id, effective_probs(), raw.model_id, raw.truncated);
}

CalibratedVerdict recalibrate(const RawVerdict &raw, double tau) {
    if (!std::isfinite(tau) || tau < 0.0 || tau > 1.0) {
        throw InvalidArgument("threshold " + std::to_string(tau) + " is outside [0, 1]");
    }
    if (raw.confidence >= tau) {
        return CalibratedVerdict{raw, tau, raw.label, false};
    }
    return CalibratedVerdict{raw, tau, VerdictLabel::NotEnoughInfo, true};
}

}  // namespace claimver
