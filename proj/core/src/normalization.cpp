#include "qfuse/normalization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qfuse {

TanhNormalizer fit_tanh(std::span<const double> genuine_scores) {
    const size_t n = genuine_scores.size();
    if (n < 2)
        throw std::invalid_argument("fit_tanh needs at least two genuine scores");

    const double mean =
        std::accumulate(genuine_scores.begin(), genuine_scores.end(), 0.0) /
        static_cast<double>(n);
    double ss = 0.0;
    for (double s : genuine_scores) {
        const double d = s - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);
    if (var <= 0.0)
        throw std::invalid_argument("fit_tanh: genuine scores have zero variance");
    return {mean, std::sqrt(var)};
}

double tanh_apply(const TanhNormalizer& n, double score) {
    return 0.5 * (std::tanh(0.01 * (score - n.mean) / n.stddev) + 1.0);
}

double rule_fuse(std::span<const double> normalized, BaselineRule rule) {
    if (normalized.empty())
        throw std::invalid_argument("rule_fuse: empty score list");
    switch (rule) {
        case BaselineRule::Mean:
            return std::accumulate(normalized.begin(), normalized.end(), 0.0) /
                   static_cast<double>(normalized.size());
        case BaselineRule::Min:
            return *std::min_element(normalized.begin(), normalized.end());
        default:
            return *std::max_element(normalized.begin(), normalized.end());
    }
}

}  // namespace qfuse
