#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

namespace claimver {

template <typename Scalar, int Rows>
Eigen::Matrix<Scalar, Rows, 1> weighted_mean(std::span<const Eigen::Matrix<Scalar, Rows, 1>> vectors,
                                             std::span<const Scalar> weights) {
    std::vector<std::size_t> order(vectors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (weights[a] != weights[b]) {
            return weights[a] < weights[b];
        }
        return std::lexicographical_compare(vectors[a].data(), vectors[a].data() + vectors[a].size(), vectors[b].data(),
                                            vectors[b].data() + vectors[b].size());
    });

    Scalar total(0);
    for (const std::size_t i : order) {
        total += weights[i];
    }
    Eigen::Matrix<Scalar, Rows, 1> mean = Eigen::Matrix<Scalar, Rows, 1>::Zero(vectors.front().size());
    for (const std::size_t i : order) {
        mean += (weights[i] / total) * vectors[i];
    }
    return mean;
}

}  // namespace claimver
