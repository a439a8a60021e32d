#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfuse/types.hpp"

namespace qfuse {

/// Per-group quality rejection thresholds. An absent entry disables the gate
/// for that group, so a default-constructed object is a complete no-op.
struct GateThresholds {
    std::optional<double> face_same;    // face, query from fnf1
    std::optional<double> face_cross;   // face, query from xfa1
    std::optional<double> finger_same;  // fingerprints, query from fo
    std::optional<double> finger_cross; // fingerprints, query from xft

    /// 1-based index into the 14 face measures used as the face gate quality.
    int face_quality_index = 1;

    bool any_enabled() const {
        return face_same || face_cross || finger_same || finger_cross;
    }
};

/// Quality value of one matching score: the worse of the two samples.
double score_quality(double q_template, double q_query);

struct GateOutcome {
    Access access;
    bool face_rejected = false;
    bool fingers_rejected = false;  // entire fingerprint modality discarded
    bool all_rejected = false;      // every gated quality fell below threshold
    std::vector<std::string> notes;
};

/// Applies the rejection/replacement policy: fingerprint scores whose quality
/// falls below the group threshold are replaced by the access's
/// maximum-quality fingerprint score; if all three fall below, the modality is
/// discarded, and a below-threshold face is discarded outright. Rejection is
/// strict (quality == threshold passes). Scores are never invented, only
/// copied within the access. Device conditions select the threshold group;
/// nullopt falls back to the same-device entry.
GateOutcome apply_gate(const Access& a, const GateThresholds& thresholds,
                       std::optional<DeviceClass> face_condition,
                       std::optional<DeviceClass> finger_condition);

/// Record pool selector for threshold sweeps.
enum class GateGroup {
    FaceSame,
    FaceCross,
    FingerSame,
    FingerCross,
    FacePooled,
    FingerPooled,
};

const char* to_string(GateGroup g);

struct SweepPoint {
    double threshold = 0.0;
    double eer = 1.0;
    int rejected = 0;       // records discarded at this threshold
    int genuine_kept = 0;
    int impostor_kept = 0;
};

struct SweepResult {
    double best_threshold = 0.0;
    bool improves = false;  // best point beats the no-op point beyond the tie band
    std::vector<SweepPoint> curve;
};

/// Sweeps candidate thresholds over the group's labeled records, discarding
/// scores whose quality value falls below the candidate, and picks the
/// threshold minimizing the EER of the surviving pool. Ties break toward the
/// smallest threshold (discard least). The tie band is
/// max(selection_tolerance, two standard errors of the minimum EER), so
/// sampling noise on a flat stretch of the curve cannot select a needlessly
/// aggressive threshold. An empty grid selects the empirical quality
/// quantiles 0%, 5%, ..., 50%.
SweepResult sweep_threshold(const Dataset& train, GateGroup group,
                            std::span<const double> grid = {},
                            int face_quality_index = 1,
                            double selection_tolerance = 0.005);

struct AutoSweepOutcome {
    GateThresholds thresholds;
    std::vector<std::pair<std::string, SweepResult>> curves;
};

/// Sweeps every gate group present in the training data (the two pooled
/// groups when `pooled`, otherwise the four per-condition groups) and fills
/// the corresponding threshold slots. A group is left disabled when it has
/// no usable records or when gating shows no significant EER improvement on
/// the training set.
AutoSweepOutcome auto_sweep_gate(const Dataset& train, bool pooled,
                                 int face_quality_index = 1);

}  // namespace qfuse
