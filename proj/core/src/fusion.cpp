#include "qfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qfuse/metrics.hpp"
#include "qfuse/protocol.hpp"
#include "qfuse/score_file.hpp"

namespace qfuse {

double fuse_llr_sum(std::span<const double> llrs) {
    if (llrs.empty()) throw std::invalid_argument("fuse_llr_sum: empty input");
    return std::accumulate(llrs.begin(), llrs.end(), 0.0);
}

double fuse_llr_max(std::span<const double> llrs) {
    if (llrs.empty()) throw std::invalid_argument("fuse_llr_max: empty input");
    return *std::max_element(llrs.begin(), llrs.end());
}

bool is_llr_rule(FusionRule r) {
    return r == FusionRule::LlrSum || r == FusionRule::LlrMax;
}

const char* to_string(FusionRule r) {
    switch (r) {
        case FusionRule::LlrSum: return "llr-sum";
        case FusionRule::LlrMax: return "llr-max";
        case FusionRule::TanhMean: return "mean";
        case FusionRule::TanhMin: return "min";
        default: return "max";
    }
}

std::optional<FusionRule> fusion_rule_from_string(const std::string& s) {
    if (s == "llr-sum") return FusionRule::LlrSum;
    if (s == "llr-max") return FusionRule::LlrMax;
    if (s == "mean") return FusionRule::TanhMean;
    if (s == "min") return FusionRule::TanhMin;
    if (s == "max") return FusionRule::TanhMax;
    return std::nullopt;
}

const char* to_string(DeviceMode m) {
    switch (m) {
        case DeviceMode::Oracle: return "oracle";
        case DeviceMode::Inferred: return "inferred";
        default: return "pooled";
    }
}

std::optional<DeviceMode> device_mode_from_string(const std::string& s) {
    if (s == "oracle") return DeviceMode::Oracle;
    if (s == "inferred") return DeviceMode::Inferred;
    if (s == "pooled") return DeviceMode::Pooled;
    return std::nullopt;
}

const Calibrator& ModelSet::calibrator(const std::string& key) const {
    const auto it = calibrators.find(key);
    if (it == calibrators.end())
        throw std::runtime_error("no calibrator fitted for condition '" + key + "'");
    return it->second;
}

const TanhNormalizer& ModelSet::normalizer(const std::string& key) const {
    const auto it = normalizers.find(key);
    if (it == normalizers.end())
        throw std::runtime_error("no normalizer fitted for condition '" + key + "'");
    return it->second;
}

double ModelSet::fallback(FusionRule rule) const {
    const auto it = fallbacks.find(to_string(rule));
    if (it == fallbacks.end()) return is_llr_rule(rule) ? 0.0 : 0.5;
    return it->second;
}

Decision decide(double fused, const DecisionPolicy& policy) {
    return fused > policy.threshold ? Decision::Accept : Decision::Reject;
}

namespace {

std::string condition_key(const char* prefix, DeviceMode mode,
                          const std::optional<DeviceClass>& condition) {
    if (mode == DeviceMode::Pooled) return std::string(prefix) + "/pooled";
    if (!condition)
        throw std::runtime_error(std::string("device condition unresolved for ") + prefix);
    return std::string(prefix) + "/" + to_string(*condition);
}

// Resolves the face device condition per the configured mode. Falls back to
// the same-device class when the quality evidence needed for inference is
// unavailable (and says so in the audit).
std::optional<DeviceClass> resolve_face_condition(const Access& a,
                                                  const PipelineConfig& cfg,
                                                  const ModelSet& models,
                                                  std::vector<std::string>& audit) {
    if (cfg.device_mode == DeviceMode::Pooled) return std::nullopt;
    if (!a.face || !a.face->score) return std::nullopt;
    if (cfg.device_mode == DeviceMode::Oracle) {
        if (!a.face->device_true)
            throw std::runtime_error("oracle device mode needs device_true on the face record");
        return a.face->device_true;
    }
    if (!models.face_qda) throw std::runtime_error("inferred device mode needs a face QDA model");
    if (a.face->q_query.arity() == kFaceQualityArity && a.face->q_query.all_present()) {
        const auto features = select_face_features(a.face->q_query, models.face_features);
        const QdaDecision d = qda_classify(*models.face_qda, features);
        audit.push_back(std::string("device: face inferred ") + to_string(d.device));
        return d.device;
    }
    audit.push_back("device: face qualities incomplete, assuming same-device");
    return DeviceClass::FaceHighRes;
}

std::optional<DeviceClass> resolve_finger_condition(const Access& a,
                                                    const PipelineConfig& cfg,
                                                    const ModelSet& models,
                                                    std::vector<std::string>& audit) {
    if (cfg.device_mode == DeviceMode::Pooled) return std::nullopt;
    bool any_scored = false;
    for (const auto& f : a.fingers)
        if (f && f->score) any_scored = true;
    if (!any_scored) return std::nullopt;

    if (cfg.device_mode == DeviceMode::Oracle) {
        const auto d = a.finger_device();
        if (!d)
            throw std::runtime_error(
                "oracle device mode needs a consistent device_true on the fingerprints");
        return d;
    }
    if (!models.finger_qda)
        throw std::runtime_error("inferred device mode needs a fingerprint QDA model");

    std::array<double, 3> q_template{}, q_query{};
    bool complete = true;
    for (int i = 0; i < 3; ++i) {
        const auto& f = a.fingers[static_cast<size_t>(i)];
        if (!f || f->q_template.arity() < 1 || !f->q_template.has(0) ||
            f->q_query.arity() < 1 || !f->q_query.has(0)) {
            complete = false;
            break;
        }
        q_template[static_cast<size_t>(i)] = f->q_template.value(0);
        q_query[static_cast<size_t>(i)] = f->q_query.value(0);
    }
    if (complete) {
        const auto features = select_fp_features(derive_fp_features(q_template, q_query),
                                                 models.finger_features);
        const QdaDecision d = qda_classify(*models.finger_qda, features);
        audit.push_back(std::string("device: fingerprint inferred ") + to_string(d.device));
        return d.device;
    }
    audit.push_back("device: fingerprint qualities incomplete, assuming same-device");
    return DeviceClass::FingerOptical;
}

}  // namespace

PipelineResult run_pipeline(const Access& a, const PipelineConfig& cfg,
                            const ModelSet& models) {
    PipelineResult result;

    // Stage 1: evaluation-time imputation.
    ImputationOutcome imp = impute_evaluation(a);
    result.audit = std::move(imp.notes);
    bool face_usable = imp.face_usable;
    bool fingers_usable = imp.fingers_usable;

    // Stage 2/3: the device condition feeds both the gate and the model
    // lookup; resolving it does not alter the access.
    result.face_condition = resolve_face_condition(imp.access, cfg, models, result.audit);
    result.finger_condition = resolve_finger_condition(imp.access, cfg, models, result.audit);

    bool gate_forced_zero = false;
    Access access = std::move(imp.access);
    if (cfg.gate && cfg.gate->any_enabled()) {
        GateOutcome gated =
            apply_gate(access, *cfg.gate, result.face_condition, result.finger_condition);
        access = std::move(gated.access);
        for (auto& n : gated.notes) result.audit.push_back(std::move(n));
        if (gated.face_rejected) face_usable = false;
        if (gated.fingers_rejected) fingers_usable = false;
        gate_forced_zero = gated.all_rejected;
    }

    // Stage 4/5: per-channel mapping and the fusion rule.
    std::vector<double> contributions;
    if (!imp.both_modalities_missing && !gate_forced_zero) {
        if (is_llr_rule(cfg.rule)) {
            if (face_usable) {
                const std::string key =
                    condition_key("face", cfg.device_mode, result.face_condition);
                const double face_score[] = {*access.face->score};
                const double llr = apply_calibration(models.calibrator(key), face_score);
                contributions.push_back(llr);
                result.audit.push_back("calibrate: face (" + key + ") llr " +
                                       format_score(llr));
            }
            if (fingers_usable) {
                const bool per_device =
                    cfg.per_device_fingerprint && cfg.device_mode != DeviceMode::Pooled;
                const std::string key =
                    per_device ? condition_key("fp", cfg.device_mode, result.finger_condition)
                               : "fp/pooled";
                std::array<double, 3> scores{};
                for (int i = 0; i < 3; ++i)
                    scores[static_cast<size_t>(i)] =
                        *access.fingers[static_cast<size_t>(i)]->score;
                const double llr = apply_calibration(models.calibrator(key), scores);
                contributions.push_back(llr);
                result.audit.push_back("calibrate: fingerprints (" + key + ") llr " +
                                       format_score(llr));
            }
        } else {
            if (face_usable) {
                const std::string key =
                    condition_key("face", cfg.device_mode, result.face_condition);
                contributions.push_back(
                    tanh_apply(models.normalizer(key), *access.face->score));
            }
            if (fingers_usable) {
                for (int i = 0; i < 3; ++i) {
                    const std::string key = condition_key(("fp" + std::to_string(i + 1)).c_str(),
                                                          cfg.device_mode,
                                                          result.finger_condition);
                    contributions.push_back(tanh_apply(
                        models.normalizer(key),
                        *access.fingers[static_cast<size_t>(i)]->score));
                }
            }
            if (!contributions.empty())
                result.audit.push_back("normalize: " + std::to_string(contributions.size()) +
                                       " channel(s) mapped into (0,1)");
        }
    }

    result.face_used = face_usable && !contributions.empty();
    result.fingers_used = fingers_usable && !contributions.empty();

    // Stage 6: fallback directives override the rule.
    if (contributions.empty()) {
        result.fallback_applied = true;
        result.face_used = false;
        result.fingers_used = false;
        result.fused = is_llr_rule(cfg.rule)
                           ? 0.0
                           : cfg.fallback.value_or(models.fallback(cfg.rule));
        result.audit.push_back(std::string("fuse: no usable channel, emitting ") +
                               (is_llr_rule(cfg.rule) ? "0 (no support)"
                                                      : "the stored fallback score"));
        return result;
    }

    switch (cfg.rule) {
        case FusionRule::LlrSum:
            result.fused = fuse_llr_sum(contributions);
            break;
        case FusionRule::LlrMax:
            result.fused = fuse_llr_max(contributions);
            break;
        case FusionRule::TanhMean:
            result.fused = rule_fuse(contributions, BaselineRule::Mean);
            break;
        case FusionRule::TanhMin:
            result.fused = rule_fuse(contributions, BaselineRule::Min);
            break;
        default:
            result.fused = rule_fuse(contributions, BaselineRule::Max);
            break;
    }
    result.audit.push_back(std::string("fuse: ") + to_string(cfg.rule) + " -> " +
                           format_score(result.fused));
    return result;
}

namespace {

void fit_face_calibrator(ModelSet& models, const std::string& key,
                         const std::vector<double>& genuine,
                         const std::vector<double>& impostor, const TrainingConfig& cfg,
                         std::vector<std::string>* notes) {
    if (genuine.size() < 2 || impostor.size() < 2) {
        if (notes) notes->push_back("skipped calibrator " + key + ": too few samples");
        return;
    }
    Eigen::MatrixXd t(static_cast<Eigen::Index>(genuine.size()), 1);
    Eigen::MatrixXd n(static_cast<Eigen::Index>(impostor.size()), 1);
    for (size_t i = 0; i < genuine.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = genuine[i];
    for (size_t i = 0; i < impostor.size(); ++i) n(static_cast<Eigen::Index>(i), 0) = impostor[i];
    models.calibrators[key] = train_calibrator(t, n, cfg);
}

void fit_finger_calibrator(ModelSet& models, const std::string& key,
                           const std::vector<std::array<double, 3>>& genuine,
                           const std::vector<std::array<double, 3>>& impostor,
                           const TrainingConfig& cfg, std::vector<std::string>* notes) {
    if (genuine.size() < 4 || impostor.size() < 4) {
        if (notes) notes->push_back("skipped calibrator " + key + ": too few samples");
        return;
    }
    Eigen::MatrixXd t(static_cast<Eigen::Index>(genuine.size()), 3);
    Eigen::MatrixXd n(static_cast<Eigen::Index>(impostor.size()), 3);
    for (size_t i = 0; i < genuine.size(); ++i)
        for (int j = 0; j < 3; ++j)
            t(static_cast<Eigen::Index>(i), j) = genuine[i][static_cast<size_t>(j)];
    for (size_t i = 0; i < impostor.size(); ++i)
        for (int j = 0; j < 3; ++j)
            n(static_cast<Eigen::Index>(i), j) = impostor[i][static_cast<size_t>(j)];
    models.calibrators[key] = train_calibrator(t, n, cfg);
}

void fit_normalizer(ModelSet& models, const std::string& key,
                    const std::vector<double>& genuine, std::vector<std::string>* notes) {
    if (genuine.size() < 2) {
        if (notes) notes->push_back("skipped normalizer " + key + ": too few genuine scores");
        return;
    }
    models.normalizers[key] = fit_tanh(genuine);
}

Eigen::MatrixXd to_matrix(const std::vector<Eigen::VectorXd>& rows) {
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
}

}  // namespace

ModelSet fit_model_set(const Dataset& imputed_training, const TrainingConfig& cfg,
                       const FeatureSelection& face_features,
                       const FeatureSelection& finger_features,
                       std::vector<std::string>* notes) {
    ModelSet models;
    models.face_features = face_features;
    models.finger_features = finger_features;

    // Score pools. Face scores keyed by condition; fingerprint accesses keep
    // their 3-vector structure for the multivariate calibrator.
    std::map<std::string, std::vector<double>> face_genuine, face_impostor;
    std::map<std::string, std::vector<std::array<double, 3>>> fp_genuine, fp_impostor;
    std::map<std::string, std::vector<double>> genuine_by_channel;  // normalizers
    std::vector<Eigen::VectorXd> face_q_same, face_q_cross;
    std::vector<Eigen::VectorXd> fp_q_same, fp_q_cross;

    for (const Access& a : imputed_training.accesses) {
        const Label label = a.label();
        if (label == Label::Unknown)
            throw std::invalid_argument("fit_model_set: access '" + a.access_id +
                                        "' is unlabeled");
        const bool genuine = label == Label::Target;

        if (a.face && a.face->score) {
            // Pooled pools accept every scored record; the per-condition
            // pools and the device classifier need the condition label.
            (genuine ? face_genuine : face_impostor)["face/pooled"].push_back(*a.face->score);
            if (genuine) genuine_by_channel["face/pooled"].push_back(*a.face->score);
            if (a.face->device_true) {
                const std::string cond = to_string(*a.face->device_true);
                (genuine ? face_genuine : face_impostor)["face/" + cond].push_back(
                    *a.face->score);
                if (genuine) genuine_by_channel["face/" + cond].push_back(*a.face->score);
                if (a.face->q_query.arity() == kFaceQualityArity &&
                    a.face->q_query.all_present()) {
                    auto f = select_face_features(a.face->q_query, face_features);
                    (is_cross_device(*a.face->device_true) ? face_q_cross : face_q_same)
                        .push_back(std::move(f));
                }
            }
        }

        const auto fp_device = a.finger_device();
        bool scores_complete = true;
        bool qualities_complete = true;
        std::array<double, 3> scores{}, q_template{}, q_query{};
        for (int i = 0; i < 3; ++i) {
            const auto& f = a.fingers[static_cast<size_t>(i)];
            if (!f || !f->score) {
                scores_complete = false;
                qualities_complete = false;
                break;
            }
            scores[static_cast<size_t>(i)] = *f->score;
            if (f->q_template.arity() > 0 && f->q_template.has(0) &&
                f->q_query.arity() > 0 && f->q_query.has(0)) {
                q_template[static_cast<size_t>(i)] = f->q_template.value(0);
                q_query[static_cast<size_t>(i)] = f->q_query.value(0);
            } else {
                qualities_complete = false;
            }
        }
        if (scores_complete) {
            (genuine ? fp_genuine : fp_impostor)["fp/pooled"].push_back(scores);
            if (genuine)
                for (int i = 0; i < 3; ++i)
                    genuine_by_channel["fp" + std::to_string(i + 1) + "/pooled"].push_back(
                        scores[static_cast<size_t>(i)]);
            if (fp_device) {
                const std::string cond = to_string(*fp_device);
                (genuine ? fp_genuine : fp_impostor)["fp/" + cond].push_back(scores);
                if (genuine)
                    for (int i = 0; i < 3; ++i)
                        genuine_by_channel["fp" + std::to_string(i + 1) + "/" + cond]
                            .push_back(scores[static_cast<size_t>(i)]);
                if (qualities_complete) {
                    auto f = select_fp_features(derive_fp_features(q_template, q_query),
                                                finger_features);
                    (is_cross_device(*fp_device) ? fp_q_cross : fp_q_same)
                        .push_back(std::move(f));
                }
            }
        }
    }

    for (const auto& [key, genuine] : face_genuine)
        if (face_impostor.count(key))
            fit_face_calibrator(models, key, genuine, face_impostor.at(key), cfg, notes);
    for (const auto& [key, genuine] : fp_genuine)
        if (fp_impostor.count(key))
            fit_finger_calibrator(models, key, genuine, fp_impostor.at(key), cfg, notes);
    for (const auto& [key, genuine] : genuine_by_channel)
        fit_normalizer(models, key, genuine, notes);

    auto fit_qda = [&](Modality modality, const std::vector<Eigen::VectorXd>& same,
                       const std::vector<Eigen::VectorXd>& cross,
                       std::optional<QdaModel>& slot, const char* name) {
        const Eigen::Index dim = same.empty() ? 0 : same.front().size();
        if (same.size() < static_cast<size_t>(dim + 1) ||
            cross.size() < static_cast<size_t>(dim + 1) || dim == 0) {
            if (notes)
                notes->push_back(std::string("skipped ") + name +
                                 " QDA: a device class has too few samples");
            return;
        }
        slot = qda_fit(modality, to_matrix(same), to_matrix(cross));
    };
    fit_qda(Modality::Face, face_q_same, face_q_cross, models.face_qda, "face");
    fit_qda(Modality::Fingerprint, fp_q_same, fp_q_cross, models.finger_qda, "fingerprint");

    // Per-rule fallback: the training-set EER threshold of the fused scores
    // for the tanh rules, zero support for the LLR rules.
    models.fallbacks[to_string(FusionRule::LlrSum)] = 0.0;
    models.fallbacks[to_string(FusionRule::LlrMax)] = 0.0;
    for (FusionRule rule : {FusionRule::TanhMean, FusionRule::TanhMin, FusionRule::TanhMax}) {
        auto threshold_under = [&](DeviceMode mode) {
            PipelineConfig cfg_rule;
            cfg_rule.device_mode = mode;
            cfg_rule.rule = rule;
            std::vector<double> genuine, impostor;
            for (const Access& a : imputed_training.accesses) {
                const PipelineResult r = run_pipeline(a, cfg_rule, models);
                if (r.fallback_applied) continue;
                (a.label() == Label::Target ? genuine : impostor).push_back(r.fused);
            }
            if (genuine.empty() || impostor.empty())
                throw std::runtime_error("a fused-score class is empty");
            return eer(genuine, impostor).threshold;
        };
        try {
            models.fallbacks[to_string(rule)] = threshold_under(DeviceMode::Oracle);
        } catch (const std::exception&) {
            // Device-less training data: the pooled models still define a
            // training operating point.
            try {
                models.fallbacks[to_string(rule)] = threshold_under(DeviceMode::Pooled);
            } catch (const std::exception& e) {
                if (notes)
                    notes->push_back(std::string("no fallback threshold for rule ") +
                                     to_string(rule) + ": " + e.what());
            }
        }
    }
    return models;
}

}  // namespace qfuse
