#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qfuse/fusion.hpp"
#include "qfuse/synthetic.hpp"

namespace qfuse::cli {

/// Fully resolved run configuration: built-in defaults, overlaid by the
/// --config document, overlaid by command line flags. Unknown document keys
/// are rejected and every run echoes the resolved form into its manifest.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    FusionRule rule = FusionRule::LlrSum;
    DeviceMode device_mode = DeviceMode::Oracle;
    std::string gate_mode = "off";  // off | fixed | auto
    GateThresholds gate_thresholds; // used by gate_mode == fixed
    double prior = 0.5;
    double decision_threshold = 0.0;
    std::optional<double> fallback;  // tanh-rule fallback override
    bool per_device_fingerprint = false;
    bool verbose = false;
    TrainingConfig training;
    FeatureSelection face_features{{8}};
    FeatureSelection finger_features{{2}};
    SynthSpec synth;

    // Artifact paths; empty means the default under out_dir.
    std::string train_scores;
    std::string eval_scores;
    std::string models;
    std::string fused_scores;

    std::string train_scores_path() const;
    std::string eval_scores_path() const;
    std::string models_path() const;
    std::string fused_scores_path() const;
};

/// Parses a config document (JSON) over the defaults. Throws on unknown keys
/// or ill-typed values.
RunConfig parse_config(const std::string& json_text);

/// Resolved-config echo, deterministic key order.
std::string config_to_json(const RunConfig& cfg, const std::string& command);

/// Entry point behind main(): `args` excludes the program name. Returns the
/// process exit status and prints a single-line diagnostic on failure.
int dispatch(const std::vector<std::string>& args);

}  // namespace qfuse::cli
