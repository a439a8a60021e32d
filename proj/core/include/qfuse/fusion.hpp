#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfuse/calibration.hpp"
#include "qfuse/device_inference.hpp"
#include "qfuse/normalization.hpp"
#include "qfuse/quality_gate.hpp"
#include "qfuse/types.hpp"

namespace qfuse {

/// Sum of independent log-likelihood-ratios, itself a calibrated LLR for any
/// number of sources.
double fuse_llr_sum(std::span<const double> llrs);

/// Maximum of the modality LLRs.
double fuse_llr_max(std::span<const double> llrs);

enum class FusionRule { LlrSum, LlrMax, TanhMean, TanhMin, TanhMax };

bool is_llr_rule(FusionRule r);
const char* to_string(FusionRule r);
std::optional<FusionRule> fusion_rule_from_string(const std::string& s);

/// How the per-query device condition is obtained.
enum class DeviceMode {
    Oracle,    // trust device_true on the records
    Inferred,  // quadratic discriminant on the quality measures
    Pooled,    // no conditioning: one model per modality
};

const char* to_string(DeviceMode m);
std::optional<DeviceMode> device_mode_from_string(const std::string& s);

/// Everything `train` fits and `fuse` consumes. Calibrators are keyed
/// "face/fnf1", "face/xfa1", "face/pooled", "fp/fo", "fp/xft", "fp/pooled"
/// (the fingerprint 3-vector feeds one multivariate calibrator; "fp/pooled"
/// is the shared-across-conditions default). Normalizers are keyed per
/// channel, e.g. "fp2/xft" or "face/pooled". Fallbacks, one per fusion rule,
/// hold the fused score emitted when an access carries no information.
struct ModelSet {
    std::map<std::string, Calibrator> calibrators;
    std::map<std::string, TanhNormalizer> normalizers;
    std::optional<QdaModel> face_qda;
    std::optional<QdaModel> finger_qda;
    FeatureSelection face_features{{8}};
    FeatureSelection finger_features{{2}};
    std::map<std::string, double> fallbacks;

    const Calibrator& calibrator(const std::string& key) const;
    const TanhNormalizer& normalizer(const std::string& key) const;
    double fallback(FusionRule rule) const;
};

struct PipelineConfig {
    DeviceMode device_mode = DeviceMode::Oracle;
    FusionRule rule = FusionRule::LlrSum;
    std::optional<GateThresholds> gate;  // absent and all-disabled behave identically
    /// Fused score emitted for a no-information access under the tanh rules
    /// (the training-set EER threshold); overrides the trained value when
    /// set. LLR rules always fall back to zero support.
    std::optional<double> fallback;
    /// Uses one fingerprint calibrator per condition instead of the shared one.
    bool per_device_fingerprint = false;
    DecisionPolicy decision{0.0};
};

struct PipelineResult {
    double fused = 0.0;
    bool face_used = false;
    bool fingers_used = false;
    bool fallback_applied = false;
    std::optional<DeviceClass> face_condition;    // resolved, absent in pooled mode
    std::optional<DeviceClass> finger_condition;
    std::vector<std::string> audit;
};

/// Runs one access through imputation, optional gating, device conditioning,
/// calibration or normalization, and the fusion rule. Pure: the result
/// depends only on the access, config and models.
PipelineResult run_pipeline(const Access& a, const PipelineConfig& cfg,
                            const ModelSet& models);

enum class Decision { Accept, Reject };

/// Accept iff fused > threshold; equality rejects.
Decision decide(double fused, const DecisionPolicy& policy);

/// Fits every calibrator, normalizer and QDA model the training data
/// supports, plus per-rule fallback scores (the training-set EER threshold
/// for the tanh rules, zero for the LLR rules). Expects an imputed, labeled
/// training dataset. Pieces the data cannot support (for example a device
/// condition that never occurs) are skipped and reported through `notes`.
ModelSet fit_model_set(const Dataset& imputed_training, const TrainingConfig& cfg,
                       const FeatureSelection& face_features,
                       const FeatureSelection& finger_features,
                       std::vector<std::string>* notes = nullptr);

}  // namespace qfuse
