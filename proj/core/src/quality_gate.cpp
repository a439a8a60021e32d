#include "qfuse/quality_gate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qfuse/metrics.hpp"

namespace qfuse {

double score_quality(double q_template, double q_query) {
    return std::min(q_template, q_query);
}

namespace {

// Gate quality of a record at the given 1-based face index; nullopt when a
// needed measure is missing (such a record cannot be judged and passes).
std::optional<double> gate_quality(const ScoreRecord& r, int face_quality_index) {
    const int idx = r.channel.modality == Modality::Face ? face_quality_index - 1 : 0;
    if (idx < 0 || idx >= r.q_template.arity()) return std::nullopt;
    if (!r.q_template.has(idx) || !r.q_query.has(idx)) return std::nullopt;
    return score_quality(r.q_template.value(idx), r.q_query.value(idx));
}

std::optional<double> threshold_for(const GateThresholds& t, Modality m,
                                    std::optional<DeviceClass> condition) {
    const bool cross = condition && is_cross_device(*condition);
    if (m == Modality::Face) return cross ? t.face_cross : t.face_same;
    return cross ? t.finger_cross : t.finger_same;
}

}  // namespace

GateOutcome apply_gate(const Access& a, const GateThresholds& thresholds,
                       std::optional<DeviceClass> face_condition,
                       std::optional<DeviceClass> finger_condition) {
    GateOutcome out;
    out.access = a;

    bool any_judged = false;

    // Fingerprints: replace sub-threshold scores with the max-quality score.
    const auto fp_threshold =
        threshold_for(thresholds, Modality::Fingerprint, finger_condition);
    if (fp_threshold) {
        std::array<std::optional<double>, 3> quality;
        int donor = -1;      // max-quality judgeable record
        int unjudged = 0;    // scored records whose quality is unavailable
        for (int i = 0; i < 3; ++i) {
            const auto& f = out.access.fingers[static_cast<size_t>(i)];
            if (!f || !f->score) continue;
            quality[static_cast<size_t>(i)] = gate_quality(*f, thresholds.face_quality_index);
            if (!quality[static_cast<size_t>(i)]) {
                ++unjudged;
                continue;
            }
            if (donor < 0 || *quality[static_cast<size_t>(i)] >
                                 *quality[static_cast<size_t>(donor)])
                donor = i;
        }

        if (donor >= 0) {
            any_judged = true;
            if (*quality[static_cast<size_t>(donor)] < *fp_threshold) {
                // No judgeable score passes.
                if (unjudged == 0) {
                    out.fingers_rejected = true;
                    out.notes.push_back("gate: fingerprint modality discarded, all qualities < " +
                                        std::to_string(*fp_threshold));
                } else {
                    out.notes.push_back(
                        "gate: no fingerprint replacement donor, scores kept");
                }
            } else {
                const double replacement =
                    *out.access.fingers[static_cast<size_t>(donor)]->score;
                for (int i = 0; i < 3; ++i) {
                    auto& f = out.access.fingers[static_cast<size_t>(i)];
                    if (!f || !f->score || !quality[static_cast<size_t>(i)]) continue;
                    if (*quality[static_cast<size_t>(i)] < *fp_threshold) {
                        f->score = replacement;
                        out.notes.push_back("gate: fp" + std::to_string(i + 1) +
                                            " score replaced by fp" +
                                            std::to_string(donor + 1));
                    }
                }
            }
        }
    }

    // Face: discard below threshold.
    const auto face_threshold = threshold_for(thresholds, Modality::Face, face_condition);
    if (face_threshold && out.access.face && out.access.face->score) {
        const auto q = gate_quality(*out.access.face, thresholds.face_quality_index);
        if (q) {
            any_judged = true;
            if (*q < *face_threshold) {
                out.face_rejected = true;
                out.notes.push_back("gate: face discarded (quality " + std::to_string(*q) +
                                    " < " + std::to_string(*face_threshold) + ")");
            }
        }
    }

    const bool face_usable =
        out.access.face && out.access.face->score && !out.face_rejected;
    bool finger_score_present = false;
    for (const auto& f : out.access.fingers)
        if (f && f->score) finger_score_present = true;
    const bool fingers_usable = finger_score_present && !out.fingers_rejected;

    out.all_rejected = any_judged && !face_usable && !fingers_usable;
    if (out.all_rejected)
        out.notes.push_back("gate: every gated quality below threshold, fused score forced");
    return out;
}

const char* to_string(GateGroup g) {
    switch (g) {
        case GateGroup::FaceSame: return "face/fnf1";
        case GateGroup::FaceCross: return "face/xfa1";
        case GateGroup::FingerSame: return "fp/fo";
        case GateGroup::FingerCross: return "fp/xft";
        case GateGroup::FacePooled: return "face/pooled";
        default: return "fp/pooled";
    }
}

namespace {

struct PoolEntry {
    double score;
    double quality;
    bool genuine;
};

bool in_group(const ScoreRecord& r, GateGroup g) {
    const bool face = r.channel.modality == Modality::Face;
    switch (g) {
        case GateGroup::FacePooled: return face;
        case GateGroup::FingerPooled: return !face;
        case GateGroup::FaceSame:
            return face && r.device_true == DeviceClass::FaceHighRes;
        case GateGroup::FaceCross:
            return face && r.device_true == DeviceClass::FaceCross;
        case GateGroup::FingerSame:
            return !face && r.device_true == DeviceClass::FingerOptical;
        default:
            return !face && r.device_true == DeviceClass::FingerCross;
    }
}

}  // namespace

SweepResult sweep_threshold(const Dataset& train, GateGroup group,
                            std::span<const double> grid, int face_quality_index,
                            double selection_tolerance) {
    std::vector<PoolEntry> pool;
    for (const Access& a : train.accesses) {
        const Label label = a.label();
        if (label == Label::Unknown) continue;
        for (const ScoreRecord* r : a.present_records()) {
            if (!in_group(*r, group) || !r->score) continue;
            const auto q = gate_quality(*r, face_quality_index);
            if (!q) continue;
            pool.push_back({*r->score, *q, label == Label::Target});
        }
    }
    if (pool.empty())
        throw std::invalid_argument(
            std::string("sweep_threshold: no labeled records in group ") + to_string(group));

    std::vector<double> candidates(grid.begin(), grid.end());
    if (candidates.empty()) {
        // Empirical quality quantiles 0%, 5%, ..., 50%.
        std::vector<double> q;
        q.reserve(pool.size());
        for (const auto& e : pool) q.push_back(e.quality);
        std::sort(q.begin(), q.end());
        for (int pct = 0; pct <= 50; pct += 5) {
            const size_t rank = static_cast<size_t>(
                std::llround(static_cast<double>(q.size() - 1) * pct / 100.0));
            candidates.push_back(q[rank]);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    SweepResult result;
    for (double tau : candidates) {
        std::vector<double> genuine, impostor;
        int rejected = 0;
        for (const auto& e : pool) {
            if (e.quality < tau) {
                ++rejected;
                continue;
            }
            (e.genuine ? genuine : impostor).push_back(e.score);
        }
        if (genuine.empty() || impostor.empty()) continue;  // over-aggressive candidate
        result.curve.push_back({tau, eer(genuine, impostor).eer, rejected,
                                static_cast<int>(genuine.size()),
                                static_cast<int>(impostor.size())});
    }
    if (result.curve.empty())
        throw std::runtime_error("sweep_threshold: every candidate emptied a score pool");

    const SweepPoint* minimum = &result.curve.front();
    for (const SweepPoint& p : result.curve)
        if (p.eer < minimum->eer) minimum = &p;

    // Two standard errors of the minimum-point EER widen the tie band, so a
    // flat stretch cannot be won by sampling noise.
    const double n = static_cast<double>(std::min(minimum->genuine_kept,
                                                  minimum->impostor_kept));
    const double stderr2 = 2.0 * std::sqrt(std::max(minimum->eer * (1.0 - minimum->eer), 0.0) / n);
    const double band = minimum->eer + std::max(selection_tolerance, stderr2);

    // Curve points are in ascending threshold order: the first inside the
    // band is the least aggressive near-optimal choice.
    for (const SweepPoint& p : result.curve) {
        if (p.eer <= band) {
            result.best_threshold = p.threshold;
            result.improves = p.threshold > result.curve.front().threshold ||
                              p.rejected > 0;
            break;
        }
    }
    return result;
}

AutoSweepOutcome auto_sweep_gate(const Dataset& train, bool pooled,
                                 int face_quality_index) {
    AutoSweepOutcome out;
    out.thresholds.face_quality_index = face_quality_index;

    auto sweep_into = [&](GateGroup group, auto assign) {
        try {
            SweepResult r = sweep_threshold(train, group, {}, face_quality_index);
            if (r.improves) assign(r.best_threshold);
            out.curves.emplace_back(to_string(group), std::move(r));
        } catch (const std::invalid_argument&) {
            // no records in this group: leave it disabled
        }
    };

    GateThresholds& t = out.thresholds;
    if (pooled) {
        sweep_into(GateGroup::FacePooled, [&](double tau) {
            t.face_same = tau;
            t.face_cross = tau;
        });
        sweep_into(GateGroup::FingerPooled, [&](double tau) {
            t.finger_same = tau;
            t.finger_cross = tau;
        });
    } else {
        sweep_into(GateGroup::FaceSame, [&](double tau) { t.face_same = tau; });
        sweep_into(GateGroup::FaceCross, [&](double tau) { t.face_cross = tau; });
        sweep_into(GateGroup::FingerSame, [&](double tau) { t.finger_same = tau; });
        sweep_into(GateGroup::FingerCross, [&](double tau) { t.finger_cross = tau; });
    }
    return out;
}

}  // namespace qfuse
