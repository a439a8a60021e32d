#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qfuse/types.hpp"

namespace qfuse {

/// Fills every missing training score with the mean of the remaining valid
/// scores of the same (channel, label) cell, and every missing quality
/// measure with the mean of the valid same-channel measures at that position.
/// Valid entries are preserved bit-exact; the operation is idempotent.
/// Throws when a needed cell has no valid donors or a record is unlabeled.
Dataset impute_training(const Dataset& ds);

/// What the fusion should do with an access after evaluation-time imputation.
struct ImputationOutcome {
    Access access;
    bool face_usable = false;
    bool fingers_usable = false;
    bool both_modalities_missing = false;  // emit the fallback as fused score
    std::vector<std::string> notes;
};

/// Evaluation-time policy (labels unknown): a missing fingerprint score or
/// quality is set to the mean of the access's remaining valid fingerprint
/// values; a modality with no valid score is excluded from the fusion; if
/// both modalities are empty the fused score must be the supplied fallback.
/// A face record whose score is missing is excluded, not imputed.
ImputationOutcome impute_evaluation(const Access& a);

struct ProtocolSplit {
    Dataset train;             // session-2 accesses with known labels
    Dataset eval;              // session-2 accesses with sequestered labels
    Dataset unused_session1;   // retained but not used by this pipeline
};

/// Applies the session rule of the evaluation protocol: only Session 2 is
/// used, labeled accesses form the training side and unlabeled ones the
/// evaluation side. Throws when no session-2 data exists.
ProtocolSplit split_protocol(const Dataset& ds);

}  // namespace qfuse
