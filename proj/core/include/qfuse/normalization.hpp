#pragma once

#include <span>

namespace qfuse {

/// Tanh-estimator normalizer mapping raw similarity scores into (0,1),
/// centered on the genuine score distribution.
struct TanhNormalizer {
    double mean = 0.0;   // genuine-score sample mean
    double stddev = 1.0; // genuine-score sample standard deviation, > 0
};

/// Fits the normalizer on training genuine scores (unbiased stddev, n-1).
/// Throws std::invalid_argument on fewer than two values or zero variance.
TanhNormalizer fit_tanh(std::span<const double> genuine_scores);

/// s' = 0.5 * (tanh(0.01 * (s - mean)/stddev) + 1). Strictly increasing,
/// output in (0,1); the 0.01 damping constant is part of the estimator.
double tanh_apply(const TanhNormalizer& n, double score);

enum class BaselineRule { Mean, Min, Max };

/// Fixed-rule combination of normalized scores.
double rule_fuse(std::span<const double> normalized, BaselineRule rule);

}  // namespace qfuse
