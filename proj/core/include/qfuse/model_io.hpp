#pragma once

#include <optional>
#include <string>

#include "qfuse/fusion.hpp"

namespace qfuse {

/// Serialized bundle: every fitted model plus the gate thresholds, if any.
struct StoredModels {
    ModelSet models;
    std::optional<GateThresholds> gate;
};

/// Plain-text model block format, one keyword per line. Decimals carry 17
/// significant digits so a save/load cycle restores values exactly.
std::string write_models(const StoredModels& stored);
StoredModels parse_models(const std::string& text);

void save_models(const std::string& path, const StoredModels& stored);
StoredModels load_models(const std::string& path);

}  // namespace qfuse
