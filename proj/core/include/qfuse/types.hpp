#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qfuse {

/// Ground-truth claim type of a comparison. Evaluation data may carry
/// Unknown labels (they are scored by whoever holds the key).
enum class Label { Target, NonTarget, Unknown };

enum class Modality { Face, Fingerprint };

/// One score stream: the face camera or one of the three right-hand fingers
/// (1 = thumb, 2 = index, 3 = middle).
struct ChannelId {
    Modality modality = Modality::Face;
    int finger_index = 0;  // 0 for face, 1..3 for fingerprints

    static ChannelId face() { return {Modality::Face, 0}; }
    static ChannelId fingerprint(int finger);

    bool operator==(const ChannelId&) const = default;
};

/// Acquisition condition of the query sample. Templates always come from the
/// high-quality device; "cross" means the query device differs from it.
enum class DeviceClass {
    FaceHighRes,    // fnf1: query from the high resolution camera
    FaceCross,      // xfa1: query from the low resolution webcam
    FingerOptical,  // fo:   query from the flat optical sensor
    FingerCross,    // xft:  query from the sweeping thermal sensor
};

Modality modality_of(DeviceClass d);
bool is_cross_device(DeviceClass d);

/// Device combination of one access:
///   1 = fnf1/fo, 2 = fnf1/xft, 3 = xfa1/fo, 4 = xfa1/xft.
struct MixtureId {
    int id = 0;
    bool operator==(const MixtureId&) const = default;
};

MixtureId mixture_of(DeviceClass face_device, DeviceClass finger_device);

/// Fixed quality-vector arities: 14 measures per face image, a single
/// texture-richness measure per fingerprint.
inline constexpr int kFaceQualityArity = 14;
inline constexpr int kFingerQualityArity = 1;

int quality_arity(ChannelId channel);

/// Ordered quality measures for one sample. Missing values are an explicit
/// state, never a sentinel number.
class QualityVector {
public:
    QualityVector() = default;
    explicit QualityVector(std::vector<std::optional<double>> values)
        : values_(std::move(values)) {}

    static QualityVector all_missing(int arity);
    static QualityVector of(std::vector<double> values);

    int arity() const { return static_cast<int>(values_.size()); }
    bool has(int i) const { return values_[static_cast<size_t>(i)].has_value(); }
    double value(int i) const { return *values_[static_cast<size_t>(i)]; }
    const std::optional<double>& raw(int i) const { return values_[static_cast<size_t>(i)]; }
    void set(int i, double v) { values_[static_cast<size_t>(i)] = v; }
    void clear(int i) { values_[static_cast<size_t>(i)].reset(); }
    bool all_present() const;
    bool any_present() const;

    bool operator==(const QualityVector&) const = default;

private:
    std::vector<std::optional<double>> values_;
};

/// One raw matcher comparison as released in a score file.
struct ScoreRecord {
    std::string access_id;
    int session = 2;  // 1 or 2
    ChannelId channel;
    std::optional<DeviceClass> device_true;
    std::optional<double> score;  // similarity, higher = more genuine
    QualityVector q_template;
    QualityVector q_query;
    Label label = Label::Unknown;
};

/// One verification attempt: a face comparison plus up to three fingerprint
/// comparisons against the claimed identity, all sharing one access id.
struct Access {
    std::string access_id;
    std::optional<ScoreRecord> face;
    std::array<std::optional<ScoreRecord>, 3> fingers;  // index 0 = thumb
    std::optional<MixtureId> mixture;

    /// Count of non-missing scores across the four slots (M in the fusion).
    int present_score_count() const;

    /// Label of the access, taken from its records (Unknown if none agree
    /// or no record is present).
    Label label() const;

    std::optional<DeviceClass> face_device() const;
    /// Common device of the fingerprint records, if they agree.
    std::optional<DeviceClass> finger_device() const;

    std::vector<const ScoreRecord*> present_records() const;
};

enum class DatasetRole { Training, Evaluation };

struct Dataset {
    std::vector<Access> accesses;
    DatasetRole role = DatasetRole::Training;

    int target_count() const;
    int nontarget_count() const;
};

/// Accept/reject threshold in the fused-score domain. For log-likelihood-ratio
/// rules zero is the natural choice (no support to either hypothesis).
struct DecisionPolicy {
    double threshold = 0.0;
};

/// Groups records into accesses keyed by access id, output sorted by id.
/// Throws std::runtime_error on a duplicate (access_id, channel) pair.
std::vector<Access> group_records(const std::vector<ScoreRecord>& records);

/// Inverse of group_records: canonical record order is face, fp1, fp2, fp3
/// per access, accesses sorted by id.
std::vector<ScoreRecord> flatten(const std::vector<Access>& accesses);

/// Returns one human-readable diagnostic per violated invariant; empty
/// means the access is well formed. Never throws.
std::vector<std::string> validate_access(const Access& a);

const char* to_string(Label l);
const char* to_string(DeviceClass d);
std::string to_string(ChannelId c);

}  // namespace qfuse
