#pragma once

#include <array>
#include <cstdint>

#include "qfuse/types.hpp"

namespace qfuse {

/// Gaussian similarity-score law for one channel under one device condition.
struct ScoreModel {
    double genuine_mean = 1.0;
    double genuine_sigma = 1.0;
    double impostor_mean = -1.0;
    double impostor_sigma = 1.0;
};

/// Gaussian quality cluster, i.i.d. across the vector dimensions, clamped at
/// zero (quality measures are nonnegative).
struct QualityModel {
    double mean = 0.8;
    double sigma = 0.05;
};

/// A degraded record has its score redrawn from the impostor law and its
/// query quality redrawn from the low cluster, which is what gives the
/// quality gate something to find.
struct CorruptionModel {
    double face_prob = 0.0;
    double finger_prob = 0.0;
    QualityModel low_quality{0.15, 0.05};
};

/// Protocol-shaped generator configuration. Score separability drops for
/// cross-device conditions, mirroring how sensor mismatch degrades matchers.
struct SynthSpec {
    ScoreModel face_same{2.0, 1.0, 0.0, 1.0};
    ScoreModel face_cross{1.0, 1.0, 0.0, 1.0};
    std::array<ScoreModel, 3> finger_same{{{1.9, 1.0, 0.0, 1.0},
                                           {1.8, 1.0, 0.0, 1.0},
                                           {1.7, 1.0, 0.0, 1.0}}};
    std::array<ScoreModel, 3> finger_cross{{{1.0, 1.0, 0.0, 1.0},
                                            {0.9, 1.0, 0.0, 1.0},
                                            {0.8, 1.0, 0.0, 1.0}}};

    QualityModel face_template_quality{0.85, 0.05};
    QualityModel finger_template_quality{0.85, 0.05};
    QualityModel face_query_quality_same{0.8, 0.05};
    QualityModel face_query_quality_cross{0.45, 0.05};
    QualityModel finger_query_quality_same{0.75, 0.05};
    QualityModel finger_query_quality_cross{0.5, 0.05};

    CorruptionModel corruption{0.05, 0.2, {0.15, 0.05}};

    int training_subjects = 51;
    int evaluation_subjects = 156;
    /// Accesses generated per mixture, per label, per split.
    int accesses_per_mixture = 1500;

    double face_missing_rate = 0.0;
    double finger_missing_rate = 0.0;

    std::uint64_t seed = 1;
};

struct GeneratedData {
    Dataset training;
    Dataset evaluation;
};

/// Deterministic for a fixed seed: the same spec always produces bit-identical
/// datasets. Accesses are tagged with their mixture and true devices, labels
/// are balanced per mixture, and all records sit in session 2.
GeneratedData gen_dataset(const SynthSpec& spec);

}  // namespace qfuse
