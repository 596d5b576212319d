#pragma once

#include "claimver/calibration.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace claimver {

enum class AggregationMethod : std::uint8_t { Majority, Weighted };

[[nodiscard]] std::string_view to_string(AggregationMethod method) noexcept;  // "majority" / "weighted"
[[nodiscard]] std::optional<AggregationMethod> parse_aggregation_method(std::string_view name) noexcept;

struct FinalVerdict {
    std::string claim_id;
    VerdictLabel label{VerdictLabel::NotEnoughInfo};
    AggregationMethod method{AggregationMethod::Majority};
    std::vector<CalibratedVerdict> inputs;
    std::vector<double> weights;  ///< normalized; empty for majority voting
    double confidence{};
};

/// Scores within this distance of the maximum count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// Most frequent calibrated label; any tie for the top count resolves to
/// NotEnoughInfo. Confidence is the mean raw confidence of the inputs carrying
/// the winning label, or 0 when none does. Throws InvalidArgument on empty input.
[[nodiscard]] FinalVerdict aggregate_majority(std::span<const CalibratedVerdict> verdicts);

/// Weighted mean of the inputs' effective distributions (downgraded verdicts
/// contribute one-hot NEI). The label is the argmax of the mean, with any tie for
/// the maximum resolving to NotEnoughInfo; confidence is the maximum of the mean.
/// Throws InvalidArgument on empty input, length mismatch, negative or non-finite
/// weights, or weights that are all zero.
[[nodiscard]] FinalVerdict aggregate_weighted(std::span<const CalibratedVerdict> verdicts, std::span<const double> weights);

/// Attribution scores turned into voting weights: negatives clamp to 0.
[[nodiscard]] std::vector<double> attribution_weights(std::span<const double> scores);

/// Σ w_i v_i / Σ w_i, summed in a canonical order so the result does not depend
/// on the order of the (vector, weight) pairs.
template <typename Scalar, int Rows>
[[nodiscard]] Eigen::Matrix<Scalar, Rows, 1> weighted_mean(std::span<const Eigen::Matrix<Scalar, Rows, 1>> vectors,
                                                           std::span<const Scalar> weights);

}  // namespace claimver

#include "claimver/detail/weighted_mean.hpp"
