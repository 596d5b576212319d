#include "claimver/aggregation.hpp"

#include <cmath>

namespace claimver {

namespace {

// Argmax with every tie for the maximum sent to NotEnoughInfo.
VerdictLabel conservative_argmax(const Eigen::Vector3d &scores) {
    const double top = scores.maxCoeff();
    std::size_t tied = 0;
    Eigen::Index best = 0;
    for (Eigen::Index i = 0; i < 3; ++i) {
        if (scores[i] >= top - kTieTolerance) {
            ++tied;
            best = i;
        }
    }
    return tied > 1 ? VerdictLabel::NotEnoughInfo : kVerdictLabels[static_cast<std::size_t>(best)];
}

}  // namespace

std::string_view to_string(AggregationMethod method) noexcept {
    return method == AggregationMethod::Weighted ? "weighted" : "majority";
}

std::optional<AggregationMethod> parse_aggregation_method(std::string_view name) noexcept {
    if (name == "majority") return AggregationMethod::Majority;
    if (name == "weighted") return AggregationMethod::Weighted;
    return std::nullopt;
}

FinalVerdict aggregate_majority(std::span<const CalibratedVerdict> verdicts) {
    if (verdicts.empty()) {
        throw InvalidArgument("cannot aggregate an empty verdict list");
    }
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (const CalibratedVerdict &verdict : verdicts) {
        counts[static_cast<Eigen::Index>(index_of(verdict.label))] += 1.0;
    }
    const VerdictLabel winner = conservative_argmax(counts);

    double confidence_sum = 0.0;
    std::size_t carriers = 0;
    for (const CalibratedVerdict &verdict : verdicts) {
        if (verdict.label == winner) {
            confidence_sum += verdict.raw.confidence;
            ++carriers;
        }
    }
    FinalVerdict result;
    result.claim_id = verdicts.front().raw.claim_id;
    result.label = winner;
    result.method = AggregationMethod::Majority;
    result.inputs.assign(verdicts.begin(), verdicts.end());
    result.confidence = carriers == 0 ? 0.0 : confidence_sum / static_cast<double>(carriers);
    return result;
}

FinalVerdict aggregate_weighted(std::span<const CalibratedVerdict> verdicts, std::span<const double> weights) {
    if (verdicts.empty()) {
        throw InvalidArgument("cannot aggregate an empty verdict list");
    }
    if (verdicts.size() != weights.size()) {
        throw InvalidArgument("got " + std::to_string(weights.size()) + " weights for " + std::to_string(verdicts.size()) +
                              " verdicts");
    }
    double total = 0.0;
    for (const double w : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw InvalidArgument("weights must be finite and non-negative");
        }
        total += w;
    }
    if (total <= 0.0) {
        throw InvalidArgument("at least one weight must be positive");
    }

    std::vector<Eigen::Vector3d> distributions;
    distributions.reserve(verdicts.size());
    for (const CalibratedVerdict &verdict : verdicts) {
        distributions.push_back(verdict.effective_probs().values());
    }
    const Eigen::Vector3d mean = weighted_mean<double, 3>(distributions, weights);

    FinalVerdict result;
    result.claim_id = verdicts.front().raw.claim_id;
    result.label = conservative_argmax(mean);
    result.method = AggregationMethod::Weighted;
    result.inputs.assign(verdicts.begin(), verdicts.end());
    result.weights.reserve(weights.size());
    for (const double w : weights) {
        result.weights.push_back(w / total);
    }
    result.confidence = std::clamp(mean.maxCoeff(), 0.0, 1.0);
    return result;
}

std::vector<double> attribution_weights(std::span<const double> scores) {
    std::vector<double> weights;
    weights.reserve(scores.size());
    for (const double score : scores) {
        weights.push_back(std::isfinite(score) ? std::max(0.0, score) : 0.0);
    }
    return weights;
}

}  // namespace claimver
