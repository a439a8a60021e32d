#include "qfuse/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "qfuse/rng.hpp"

namespace qfuse {

namespace {

void check_model(const ScoreModel& m, const char* name) {
    if (m.genuine_sigma <= 0.0 || m.impostor_sigma <= 0.0)
        throw std::invalid_argument(std::string("score sigma must be positive for ") + name);
}

void check_quality(const QualityModel& m, const char* name) {
    if (m.sigma <= 0.0)
        throw std::invalid_argument(std::string("quality sigma must be positive for ") + name);
}

void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

void check_spec(const SynthSpec& spec) {
    check_model(spec.face_same, "face/fnf1");
    check_model(spec.face_cross, "face/xfa1");
    for (const auto& m : spec.finger_same) check_model(m, "fp/fo");
    for (const auto& m : spec.finger_cross) check_model(m, "fp/xft");
    check_quality(spec.face_template_quality, "face template");
    check_quality(spec.finger_template_quality, "fp template");
    check_quality(spec.face_query_quality_same, "face query fnf1");
    check_quality(spec.face_query_quality_cross, "face query xfa1");
    check_quality(spec.finger_query_quality_same, "fp query fo");
    check_quality(spec.finger_query_quality_cross, "fp query xft");
    check_quality(spec.corruption.low_quality, "low-quality cluster");
    check_prob(spec.corruption.face_prob, "face corruption probability");
    check_prob(spec.corruption.finger_prob, "fingerprint corruption probability");
    check_prob(spec.face_missing_rate, "face missing rate");
    check_prob(spec.finger_missing_rate, "fingerprint missing rate");
    if (spec.training_subjects < 1 || spec.evaluation_subjects < 1)
        throw std::invalid_argument("subject counts must be positive");
    if (spec.accesses_per_mixture < 1)
        throw std::invalid_argument("accesses_per_mixture must be positive");
}

double quality_draw(CounterRng& rng, const QualityModel& m) {
    return std::max(0.0, rng.normal(m.mean, m.sigma));
}

QualityVector quality_vector(CounterRng& rng, const QualityModel& m, int arity) {
    std::vector<double> v(static_cast<size_t>(arity));
    for (double& x : v) x = quality_draw(rng, m);
    return QualityVector::of(std::move(v));
}

struct MixtureDevices {
    DeviceClass face;
    DeviceClass finger;
};

constexpr std::array<MixtureDevices, 4> kMixtures{{
    {DeviceClass::FaceHighRes, DeviceClass::FingerOptical},
    {DeviceClass::FaceHighRes, DeviceClass::FingerCross},
    {DeviceClass::FaceCross, DeviceClass::FingerOptical},
    {DeviceClass::FaceCross, DeviceClass::FingerCross},
}};

ScoreRecord make_record(CounterRng& rng, const SynthSpec& spec, ChannelId channel,
                        DeviceClass device, bool genuine) {
    const bool face = channel.modality == Modality::Face;
    const bool cross = is_cross_device(device);

    const ScoreModel& law =
        face ? (cross ? spec.face_cross : spec.face_same)
             : (cross ? spec.finger_cross[static_cast<size_t>(channel.finger_index - 1)]
                      : spec.finger_same[static_cast<size_t>(channel.finger_index - 1)]);

    ScoreRecord r;
    r.session = 2;
    r.channel = channel;
    r.device_true = device;
    r.label = genuine ? Label::Target : Label::NonTarget;

    double score = genuine ? rng.normal(law.genuine_mean, law.genuine_sigma)
                           : rng.normal(law.impostor_mean, law.impostor_sigma);

    const int arity = quality_arity(channel);
    r.q_template = quality_vector(
        rng, face ? spec.face_template_quality : spec.finger_template_quality, arity);
    const QualityModel& query_model =
        face ? (cross ? spec.face_query_quality_cross : spec.face_query_quality_same)
             : (cross ? spec.finger_query_quality_cross : spec.finger_query_quality_same);
    r.q_query = quality_vector(rng, query_model, arity);

    const double corruption_prob =
        face ? spec.corruption.face_prob : spec.corruption.finger_prob;
    if (rng.bernoulli(corruption_prob)) {
        score = rng.normal(law.impostor_mean, law.impostor_sigma);
        r.q_query = quality_vector(rng, spec.corruption.low_quality, arity);
    }

    const double missing_rate = face ? spec.face_missing_rate : spec.finger_missing_rate;
    if (!rng.bernoulli(missing_rate)) r.score = score;
    for (int i = 0; i < arity; ++i) {
        if (rng.bernoulli(missing_rate)) r.q_template.clear(i);
        if (rng.bernoulli(missing_rate)) r.q_query.clear(i);
    }
    return r;
}

Dataset generate_split(const SynthSpec& spec, DatasetRole role, const char* id_prefix,
                       int subjects, std::uint64_t stream) {
    CounterRng rng(spec.seed, stream);
    Dataset ds;
    ds.role = role;

    int serial = 0;
    for (int mixture = 0; mixture < 4; ++mixture) {
        const MixtureDevices& devices = kMixtures[static_cast<size_t>(mixture)];
        for (int label_pass = 0; label_pass < 2; ++label_pass) {
            const bool genuine = label_pass == 0;
            for (int k = 0; k < spec.accesses_per_mixture; ++k) {
                char id[48];
                std::snprintf(id, sizeof(id), "%s-s%03d-a%07d", id_prefix,
                              serial % subjects, serial);
                ++serial;

                Access a;
                a.access_id = id;
                a.mixture = MixtureId{mixture + 1};
                a.face = make_record(rng, spec, ChannelId::face(), devices.face, genuine);
                a.face->access_id = a.access_id;
                for (int finger = 1; finger <= 3; ++finger) {
                    auto r = make_record(rng, spec, ChannelId::fingerprint(finger),
                                         devices.finger, genuine);
                    r.access_id = a.access_id;
                    a.fingers[static_cast<size_t>(finger - 1)] = std::move(r);
                }
                ds.accesses.push_back(std::move(a));
            }
        }
    }
    std::sort(ds.accesses.begin(), ds.accesses.end(),
              [](const Access& a, const Access& b) { return a.access_id < b.access_id; });
    return ds;
}

}  // namespace

GeneratedData gen_dataset(const SynthSpec& spec) {
    check_spec(spec);
    GeneratedData data;
    data.training = generate_split(spec, DatasetRole::Training, "trn",
                                   spec.training_subjects, 0x74726e);
    data.evaluation = generate_split(spec, DatasetRole::Evaluation, "evl",
                                     spec.evaluation_subjects, 0x65766c);
    return data;
}

}  // namespace qfuse
