#include "qfuse/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace qfuse {

ChannelId ChannelId::fingerprint(int finger) {
    if (finger < 1 || finger > 3)
        throw std::invalid_argument("fingerprint index must be 1, 2 or 3, got " +
                                    std::to_string(finger));
    return {Modality::Fingerprint, finger};
}

Modality modality_of(DeviceClass d) {
    switch (d) {
        case DeviceClass::FaceHighRes:
        case DeviceClass::FaceCross:
            return Modality::Face;
        default:
            return Modality::Fingerprint;
    }
}

bool is_cross_device(DeviceClass d) {
    return d == DeviceClass::FaceCross || d == DeviceClass::FingerCross;
}

MixtureId mixture_of(DeviceClass face_device, DeviceClass finger_device) {
    if (modality_of(face_device) != Modality::Face ||
        modality_of(finger_device) != Modality::Fingerprint)
        throw std::invalid_argument("mixture_of expects a face and a fingerprint device");
    const bool face_cross = is_cross_device(face_device);
    const bool finger_cross = is_cross_device(finger_device);
    if (!face_cross && !finger_cross) return {1};
    if (!face_cross && finger_cross) return {2};
    if (face_cross && !finger_cross) return {3};
    return {4};
}

int quality_arity(ChannelId channel) {
    return channel.modality == Modality::Face ? kFaceQualityArity : kFingerQualityArity;
}

QualityVector QualityVector::all_missing(int arity) {
    return QualityVector(std::vector<std::optional<double>>(static_cast<size_t>(arity)));
}

QualityVector QualityVector::of(std::vector<double> values) {
    std::vector<std::optional<double>> v;
    v.reserve(values.size());
    for (double x : values) v.emplace_back(x);
    return QualityVector(std::move(v));
}

bool QualityVector::all_present() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](const auto& v) { return v.has_value(); });
}

bool QualityVector::any_present() const {
    return std::any_of(values_.begin(), values_.end(),
                       [](const auto& v) { return v.has_value(); });
}

int Access::present_score_count() const {
    int m = 0;
    if (face && face->score) ++m;
    for (const auto& f : fingers)
        if (f && f->score) ++m;
    return m;
}

Label Access::label() const {
    Label result = Label::Unknown;
    for (const ScoreRecord* r : present_records()) {
        if (r->label == Label::Unknown) continue;
        if (result == Label::Unknown)
            result = r->label;
        else if (result != r->label)
            return Label::Unknown;  // inconsistent, caught by validate_access
    }
    return result;
}

std::optional<DeviceClass> Access::face_device() const {
    if (face && face->device_true) return face->device_true;
    return std::nullopt;
}

std::optional<DeviceClass> Access::finger_device() const {
    std::optional<DeviceClass> result;
    for (const auto& f : fingers) {
        if (!f || !f->device_true) continue;
        if (!result)
            result = f->device_true;
        else if (*result != *f->device_true)
            return std::nullopt;
    }
    return result;
}

std::vector<const ScoreRecord*> Access::present_records() const {
    std::vector<const ScoreRecord*> out;
    if (face) out.push_back(&*face);
    for (const auto& f : fingers)
        if (f) out.push_back(&*f);
    return out;
}

int Dataset::target_count() const {
    int n = 0;
    for (const auto& a : accesses)
        if (a.label() == Label::Target) ++n;
    return n;
}

int Dataset::nontarget_count() const {
    int n = 0;
    for (const auto& a : accesses)
        if (a.label() == Label::NonTarget) ++n;
    return n;
}

std::vector<Access> group_records(const std::vector<ScoreRecord>& records) {
    std::map<std::string, Access> by_id;
    for (const ScoreRecord& r : records) {
        Access& a = by_id[r.access_id];
        a.access_id = r.access_id;
        if (r.channel.modality == Modality::Face) {
            if (a.face)
                throw std::runtime_error("duplicate face record for access '" +
                                         r.access_id + "'");
            a.face = r;
        } else {
            auto& slot = a.fingers[static_cast<size_t>(r.channel.finger_index - 1)];
            if (slot)
                throw std::runtime_error("duplicate fp" +
                                         std::to_string(r.channel.finger_index) +
                                         " record for access '" + r.access_id + "'");
            slot = r;
        }
    }
    std::vector<Access> out;
    out.reserve(by_id.size());
    for (auto& [id, a] : by_id) {
        const auto fd = a.face_device();
        const auto gd = a.finger_device();
        if (fd && gd) a.mixture = mixture_of(*fd, *gd);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<ScoreRecord> flatten(const std::vector<Access>& accesses) {
    std::vector<Access> sorted = accesses;
    std::sort(sorted.begin(), sorted.end(),
              [](const Access& a, const Access& b) { return a.access_id < b.access_id; });
    std::vector<ScoreRecord> out;
    for (const Access& a : sorted) {
        if (a.face) out.push_back(*a.face);
        for (const auto& f : a.fingers)
            if (f) out.push_back(*f);
    }
    return out;
}

std::vector<std::string> validate_access(const Access& a) {
    std::vector<std::string> diags;
    auto flag = [&](std::string msg) { diags.push_back(a.access_id + ": " + std::move(msg)); };

    if (!a.face) flag("missing face record");

    // All records must agree on session and carry matching quality arities.
    std::optional<int> session;
    std::optional<Label> label;
    for (const ScoreRecord* r : a.present_records()) {
        if (r->access_id != a.access_id) flag("record access id mismatch");
        if (r->session != 1 && r->session != 2)
            flag("session must be 1 or 2, got " + std::to_string(r->session));
        if (!session)
            session = r->session;
        else if (*session != r->session)
            flag("records span multiple sessions");
        if (r->label != Label::Unknown) {
            if (!label)
                label = r->label;
            else if (*label != r->label)
                flag("records carry conflicting labels");
        }
        const int want = quality_arity(r->channel);
        if (r->q_template.arity() != want)
            flag(to_string(r->channel) + " template quality arity " +
                 std::to_string(r->q_template.arity()) + ", expected " + std::to_string(want));
        if (r->q_query.arity() != want)
            flag(to_string(r->channel) + " query quality arity " +
                 std::to_string(r->q_query.arity()) + ", expected " + std::to_string(want));
        if (r->score && !std::isfinite(*r->score))
            flag(to_string(r->channel) + " score is not finite");
        if (r->device_true && modality_of(*r->device_true) != r->channel.modality)
            flag(to_string(r->channel) + " device class does not match channel modality");
    }

    // All fingerprints of one access come from the same device.
    std::optional<DeviceClass> fp_device;
    bool fp_mixed = false;
    for (const auto& f : a.fingers) {
        if (!f || !f->device_true) continue;
        if (!fp_device)
            fp_device = f->device_true;
        else if (*fp_device != *f->device_true)
            fp_mixed = true;
    }
    if (fp_mixed) flag("fingerprint records acquired with different devices");

    if (a.mixture) {
        if (a.mixture->id < 1 || a.mixture->id > 4)
            flag("mixture id out of range");
        else if (const auto fd = a.face_device(), gd = a.finger_device(); fd && gd &&
                 !(mixture_of(*fd, *gd) == *a.mixture))
            flag("mixture tag inconsistent with record devices");
    }
    return diags;
}

const char* to_string(Label l) {
    switch (l) {
        case Label::Target: return "genuine";
        case Label::NonTarget: return "impostor";
        default: return "unknown";
    }
}

const char* to_string(DeviceClass d) {
    switch (d) {
        case DeviceClass::FaceHighRes: return "fnf1";
        case DeviceClass::FaceCross: return "xfa1";
        case DeviceClass::FingerOptical: return "fo";
        default: return "xft";
    }
}

std::string to_string(ChannelId c) {
    if (c.modality == Modality::Face) return "face";
    return "fp" + std::to_string(c.finger_index);
}

}  // namespace qfuse
