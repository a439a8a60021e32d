#include "qfuse/protocol.hpp"

#include <map>
#include <stdexcept>

#include "qfuse/score_file.hpp"

namespace qfuse {

namespace {

struct MeanAccumulator {
    double sum = 0.0;
    int count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    std::optional<double> mean() const {
        if (count == 0) return std::nullopt;
        return sum / count;
    }
};

// Channel key that ignores nothing: face, fp1, fp2, fp3.
std::string channel_key(ChannelId c) { return to_string(c); }

}  // namespace

Dataset impute_training(const Dataset& ds) {
    if (ds.role != DatasetRole::Training)
        throw std::invalid_argument("impute_training expects a training dataset");

    // First pass: per (channel, label) score means and per (channel, side,
    // position) quality means over valid entries.
    std::map<std::pair<std::string, Label>, MeanAccumulator> score_cells;
    std::map<std::tuple<std::string, int, int>, MeanAccumulator> quality_cells;

    auto each_record = [](Dataset& d, auto&& fn) {
        for (Access& a : d.accesses) {
            if (a.face) fn(*a.face);
            for (auto& f : a.fingers)
                if (f) fn(*f);
        }
    };

    Dataset out = ds;
    each_record(out, [&](ScoreRecord& r) {
        if (r.label == Label::Unknown)
            throw std::invalid_argument("training record '" + r.access_id +
                                        "' has an unknown label");
        const std::string key = channel_key(r.channel);
        if (r.score) score_cells[{key, r.label}].add(*r.score);
        for (int side = 0; side < 2; ++side) {
            const QualityVector& qv = side == 0 ? r.q_template : r.q_query;
            for (int i = 0; i < qv.arity(); ++i)
                if (qv.has(i)) quality_cells[{key, side, i}].add(qv.value(i));
        }
    });

    // Second pass: fill the gaps.
    each_record(out, [&](ScoreRecord& r) {
        const std::string key = channel_key(r.channel);
        if (!r.score) {
            const auto mean = score_cells[{key, r.label}].mean();
            if (!mean)
                throw std::runtime_error("cannot impute: no valid " +
                                         std::string(to_string(r.label)) + " scores in channel " +
                                         key);
            r.score = *mean;
        }
        for (int side = 0; side < 2; ++side) {
            QualityVector& qv = side == 0 ? r.q_template : r.q_query;
            for (int i = 0; i < qv.arity(); ++i) {
                if (qv.has(i)) continue;
                const auto mean = quality_cells[{key, side, i}].mean();
                if (!mean)
                    throw std::runtime_error(
                        "cannot impute: no valid quality values at position " +
                        std::to_string(i + 1) + " of channel " + key);
                qv.set(i, *mean);
            }
        }
    });
    return out;
}

ImputationOutcome impute_evaluation(const Access& a) {
    ImputationOutcome out;
    out.access = a;
    Access& access = out.access;

    // Face: one record per access leaves no donor, so a missing face score
    // excludes the modality rather than being imputed.
    out.face_usable = access.face && access.face->score;
    if (access.face && !access.face->score)
        out.notes.push_back("impute: face score missing, face excluded from fusion");

    // Fingerprints: access-local means over the remaining valid entries.
    MeanAccumulator score_mean;
    MeanAccumulator quality_mean[2];
    std::optional<DeviceClass> fp_device;
    for (const auto& f : access.fingers) {
        if (!f) continue;
        if (f->score) score_mean.add(*f->score);
        if (f->q_template.arity() > 0 && f->q_template.has(0))
            quality_mean[0].add(f->q_template.value(0));
        if (f->q_query.arity() > 0 && f->q_query.has(0))
            quality_mean[1].add(f->q_query.value(0));
        if (f->device_true && !fp_device) fp_device = f->device_true;
    }

    out.fingers_usable = score_mean.count > 0;
    if (out.fingers_usable) {
        for (int i = 0; i < 3; ++i) {
            auto& slot = access.fingers[static_cast<size_t>(i)];
            if (!slot) {
                // Materialize an absent channel so the fingerprint score
                // vector is always three wide once the modality is used.
                ScoreRecord r;
                r.access_id = access.access_id;
                r.session = access.face ? access.face->session : 2;
                r.channel = ChannelId::fingerprint(i + 1);
                r.device_true = fp_device;
                r.label = access.label();
                r.q_template = QualityVector::all_missing(kFingerQualityArity);
                r.q_query = QualityVector::all_missing(kFingerQualityArity);
                slot = std::move(r);
                out.notes.push_back("impute: fp" + std::to_string(i + 1) +
                                    " record absent, synthesized from access means");
            }
            ScoreRecord& r = *slot;
            if (!r.score) {
                r.score = *score_mean.mean();
                out.notes.push_back("impute: fp" + std::to_string(i + 1) + " score set to " +
                                    format_score(*r.score));
            }
            for (int side = 0; side < 2; ++side) {
                QualityVector& qv = side == 0 ? r.q_template : r.q_query;
                if (qv.arity() > 0 && !qv.has(0) && quality_mean[side].mean()) {
                    qv.set(0, *quality_mean[side].mean());
                    out.notes.push_back("impute: fp" + std::to_string(i + 1) +
                                        (side == 0 ? " template" : " query") +
                                        " quality set to " + format_score(qv.value(0)));
                }
            }
        }
    } else if (access.fingers[0] || access.fingers[1] || access.fingers[2]) {
        out.notes.push_back("impute: fingerprint modality missing, excluded from fusion");
    }

    out.both_modalities_missing = !out.face_usable && !out.fingers_usable;
    if (out.both_modalities_missing)
        out.notes.push_back("impute: both modalities missing, fused score falls back");
    return out;
}

ProtocolSplit split_protocol(const Dataset& ds) {
    ProtocolSplit split;
    split.train.role = DatasetRole::Training;
    split.eval.role = DatasetRole::Evaluation;
    split.unused_session1.role = ds.role;

    for (const Access& a : ds.accesses) {
        int session = 0;
        for (const ScoreRecord* r : a.present_records()) {
            session = r->session;
            break;
        }
        if (session == 1) {
            split.unused_session1.accesses.push_back(a);
            continue;
        }
        if (a.label() == Label::Unknown)
            split.eval.accesses.push_back(a);
        else
            split.train.accesses.push_back(a);
    }

    if (split.train.accesses.empty() && split.eval.accesses.empty())
        throw std::runtime_error("split_protocol: dataset has no session-2 accesses");
    return split;
}

}  // namespace qfuse
