#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "qfuse/fusion.hpp"
#include "qfuse/metrics.hpp"
#include "qfuse/model_io.hpp"
#include "qfuse/protocol.hpp"
#include "qfuse/rng.hpp"
#include "qfuse/synthetic.hpp"

using namespace qfuse;

namespace {

Calibrator affine(double intercept, std::vector<double> weights) {
    Calibrator c;
    c.intercept = intercept;
    c.weights = Eigen::VectorXd(static_cast<Eigen::Index>(weights.size()));
    for (size_t i = 0; i < weights.size(); ++i)
        c.weights[static_cast<Eigen::Index>(i)] = weights[i];
    return c;
}

// Identity-ish model set: face llr = 2 s, fingerprint llr = 2(s1+s2+s3),
// so llr-sum equals the sum of four per-score calibrations.
ModelSet simple_models() {
    ModelSet m;
    m.calibrators["face/fnf1"] = affine(0.0, {2.0});
    m.calibrators["face/xfa1"] = affine(0.0, {2.0});
    m.calibrators["face/pooled"] = affine(0.0, {2.0});
    m.calibrators["fp/pooled"] = affine(0.0, {2.0, 2.0, 2.0});
    m.calibrators["fp/fo"] = affine(0.0, {2.0, 2.0, 2.0});
    m.calibrators["fp/xft"] = affine(0.0, {2.0, 2.0, 2.0});
    for (const char* cond : {"fnf1", "xfa1", "pooled"})
        m.normalizers[std::string("face/") + cond] = TanhNormalizer{1.0, 1.0};
    for (int finger = 1; finger <= 3; ++finger)
        for (const char* cond : {"fo", "xft", "pooled"})
            m.normalizers["fp" + std::to_string(finger) + "/" + cond] =
                TanhNormalizer{1.0, 1.0};
    m.fallbacks["llr-sum"] = 0.0;
    m.fallbacks["llr-max"] = 0.0;
    m.fallbacks["mean"] = 0.42;
    m.fallbacks["min"] = 0.41;
    m.fallbacks["max"] = 0.43;
    return m;
}

ScoreRecord record(const std::string& id, ChannelId channel, std::optional<double> score,
                   double quality, DeviceClass device) {
    ScoreRecord r;
    r.access_id = id;
    r.session = 2;
    r.channel = channel;
    r.device_true = device;
    r.score = score;
    r.label = Label::Unknown;
    const int arity = quality_arity(channel);
    r.q_template = QualityVector::of(std::vector<double>(static_cast<size_t>(arity), quality));
    r.q_query = QualityVector::of(std::vector<double>(static_cast<size_t>(arity), quality));
    return r;
}

Access full_access(double face_score, std::array<double, 3> fp_scores,
                   double quality = 0.8) {
    Access a;
    a.access_id = "a1";
    a.face = record("a1", ChannelId::face(), face_score, quality, DeviceClass::FaceHighRes);
    for (int i = 0; i < 3; ++i)
        a.fingers[static_cast<size_t>(i)] =
            record("a1", ChannelId::fingerprint(i + 1), fp_scores[static_cast<size_t>(i)],
                   quality, DeviceClass::FingerOptical);
    a.mixture = MixtureId{1};
    return a;
}

}  // namespace

TEST_CASE("llr sum and max behave like their names") {
    const std::vector<double> two{2.0, -0.5};
    CHECK(fuse_llr_sum(two) == doctest::Approx(1.5));
    CHECK(fuse_llr_max(two) == doctest::Approx(2.0));

    const std::vector<double> one{0.7};
    CHECK(fuse_llr_sum(one) == doctest::Approx(0.7));
    CHECK(fuse_llr_max(one) == doctest::Approx(0.7));

    const std::vector<double> equal{1.1, 1.1, 1.1};
    CHECK(fuse_llr_max(equal) == doctest::Approx(1.1));
    CHECK(fuse_llr_max(two) >= fuse_llr_sum(two) / 2.0);  // max >= mean

    const std::vector<double> permuted{-0.5, 2.0};
    CHECK(fuse_llr_sum(permuted) == doctest::Approx(fuse_llr_sum(two)));

    CHECK_THROWS_AS(fuse_llr_sum({}), std::invalid_argument);
    CHECK_THROWS_AS(fuse_llr_max({}), std::invalid_argument);
}

TEST_CASE("decide accepts strictly above the threshold") {
    CHECK(decide(1.2, {0.0}) == Decision::Accept);
    CHECK(decide(-0.3, {0.0}) == Decision::Reject);
    CHECK(decide(0.0, {0.0}) == Decision::Reject);  // equality rejects
    CHECK(decide(0.5, {0.5}) == Decision::Reject);
}

TEST_CASE("a complete access under llr-sum adds the four calibrated scores") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    cfg.rule = FusionRule::LlrSum;
    const Access a = full_access(0.5, {1.0, 2.0, 3.0});
    const PipelineResult r = run_pipeline(a, cfg, models);
    CHECK(r.fused == doctest::Approx(2.0 * (0.5 + 1.0 + 2.0 + 3.0)));
    CHECK(r.face_used);
    CHECK(r.fingers_used);
    CHECK_FALSE(r.fallback_applied);
}

TEST_CASE("llr-max takes the larger of the two modality llrs") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    cfg.rule = FusionRule::LlrMax;
    const Access a = full_access(4.0, {0.1, 0.1, 0.1});
    const PipelineResult r = run_pipeline(a, cfg, models);
    CHECK(r.fused == doctest::Approx(std::max(2.0 * 4.0, 2.0 * 0.3)));
}

TEST_CASE("tanh rules fuse the four normalized channels") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    cfg.rule = FusionRule::TanhMean;
    const Access a = full_access(1.0, {1.0, 1.0, 1.0});
    // Every channel normalizes to exactly one half at its genuine mean.
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(0.5));

    cfg.rule = FusionRule::TanhMax;
    const Access b = full_access(5.0, {1.0, 1.0, 1.0});
    const double expected = 0.5 * (std::tanh(0.01 * 4.0) + 1.0);
    CHECK(run_pipeline(b, cfg, models).fused == doctest::Approx(expected));
}

TEST_CASE("an access with every score missing falls back per rule family") {
    const ModelSet models = simple_models();
    Access a = full_access(0.0, {0.0, 0.0, 0.0});
    a.face->score.reset();
    for (auto& f : a.fingers) f->score.reset();

    PipelineConfig cfg;
    for (FusionRule rule : {FusionRule::LlrSum, FusionRule::LlrMax}) {
        cfg.rule = rule;
        const PipelineResult r = run_pipeline(a, cfg, models);
        CHECK(r.fallback_applied);
        CHECK(r.fused == 0.0);
    }
    cfg.rule = FusionRule::TanhMean;
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(0.42));
    cfg.rule = FusionRule::TanhMin;
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(0.41));
    cfg.rule = FusionRule::TanhMax;
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(0.43));

    // A config-level fallback overrides the trained one for tanh rules only.
    cfg.fallback = 0.77;
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(0.77));
    cfg.rule = FusionRule::LlrSum;
    CHECK(run_pipeline(a, cfg, models).fused == 0.0);
}

TEST_CASE("a missing modality drops out of the sum") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;

    Access no_face = full_access(9.0, {1.0, 1.0, 1.0});
    no_face.face->score.reset();
    CHECK(run_pipeline(no_face, cfg, models).fused == doctest::Approx(2.0 * 3.0));

    Access no_fp = full_access(1.5, {0.0, 0.0, 0.0});
    for (auto& f : no_fp.fingers) f->score.reset();
    CHECK(run_pipeline(no_fp, cfg, models).fused == doctest::Approx(3.0));
}

TEST_CASE("a disabled gate and an absent gate are bit-identical") {
    const ModelSet models = simple_models();
    const Access a = full_access(0.7, {0.9, -0.4, 1.3}, 0.3);

    PipelineConfig absent;
    PipelineConfig disabled;
    disabled.gate = GateThresholds{};  // present but nothing enabled

    for (FusionRule rule : {FusionRule::LlrSum, FusionRule::LlrMax, FusionRule::TanhMean}) {
        absent.rule = rule;
        disabled.rule = rule;
        const PipelineResult ra = run_pipeline(a, absent, models);
        const PipelineResult rd = run_pipeline(a, disabled, models);
        CHECK(ra.fused == rd.fused);  // exact, not approximate
        CHECK(ra.audit == rd.audit);
    }
}

TEST_CASE("the gate stage feeds the fusion") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    GateThresholds gate;
    gate.finger_same = 0.5;
    cfg.gate = gate;

    // fp2 carries a low quality: its score gets replaced by the best finger's.
    Access a = full_access(1.0, {1.0, -5.0, 3.0});
    a.fingers[1]->q_template = QualityVector::of({0.1});
    a.fingers[1]->q_query = QualityVector::of({0.1});
    a.fingers[2]->q_template = QualityVector::of({0.9});
    a.fingers[2]->q_query = QualityVector::of({0.9});

    const PipelineResult r = run_pipeline(a, cfg, models);
    CHECK(r.fused == doctest::Approx(2.0 * (1.0 + 1.0 + 3.0 + 3.0)));
}

TEST_CASE("gating everything away forces zero under llr rules") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    GateThresholds gate;
    gate.finger_same = 0.5;
    gate.face_same = 0.5;
    cfg.gate = gate;

    const Access a = full_access(3.0, {1.0, 2.0, 3.0}, 0.1);  // all qualities low
    const PipelineResult r = run_pipeline(a, cfg, models);
    CHECK(r.fallback_applied);
    CHECK(r.fused == 0.0);
}

TEST_CASE("the pipeline result ignores record storage order") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    Access a = full_access(0.5, {1.0, 2.0, 3.0});

    std::vector<ScoreRecord> records = flatten({a});
    std::reverse(records.begin(), records.end());
    const auto regrouped = group_records(records);
    REQUIRE(regrouped.size() == 1);

    const PipelineResult r1 = run_pipeline(a, cfg, models);
    const PipelineResult r2 = run_pipeline(regrouped[0], cfg, models);
    CHECK(r1.fused == r2.fused);
    CHECK(decide(r1.fused, cfg.decision) == decide(r2.fused, cfg.decision));
}

TEST_CASE("oracle mode without device truth is an error") {
    const ModelSet models = simple_models();
    PipelineConfig cfg;
    Access a = full_access(0.5, {1.0, 2.0, 3.0});
    a.face->device_true.reset();
    CHECK_THROWS_AS(run_pipeline(a, cfg, models), std::runtime_error);
}

TEST_CASE("a missing calibrator for the selected condition is an error") {
    ModelSet models = simple_models();
    models.calibrators.erase("face/xfa1");
    PipelineConfig cfg;
    Access a = full_access(0.5, {1.0, 2.0, 3.0});
    a.face->device_true = DeviceClass::FaceCross;
    CHECK_THROWS_AS(run_pipeline(a, cfg, models), std::runtime_error);
}

TEST_CASE("pooled mode uses the pooled models and no condition") {
    ModelSet models = simple_models();
    models.calibrators["face/pooled"] = affine(1.0, {3.0});
    PipelineConfig cfg;
    cfg.device_mode = DeviceMode::Pooled;
    Access a = full_access(0.5, {1.0, 2.0, 3.0});
    a.face->device_true.reset();  // pooled mode must not need it
    for (auto& f : a.fingers) f->device_true.reset();
    const PipelineResult r = run_pipeline(a, cfg, models);
    CHECK(r.fused == doctest::Approx((1.0 + 3.0 * 0.5) + 2.0 * 6.0));
    CHECK_FALSE(r.face_condition.has_value());
}

TEST_CASE("inferred mode routes the face through the classified condition") {
    ModelSet models = simple_models();
    models.calibrators["face/fnf1"] = affine(0.0, {2.0});
    models.calibrators["face/xfa1"] = affine(100.0, {2.0});  // easy to tell apart

    // Face QDA over feature 8: same-device quality near 0.8, cross near 0.4.
    Eigen::MatrixXd same(20, 1), cross(20, 1);
    CounterRng rng(71, 0);
    for (int i = 0; i < 20; ++i) {
        same(i, 0) = rng.normal(0.8, 0.02);
        cross(i, 0) = rng.normal(0.4, 0.02);
    }
    models.face_qda = qda_fit(Modality::Face, same, cross);
    models.face_features = FeatureSelection{{8}};
    Eigen::MatrixXd fp_same(20, 1), fp_cross(20, 1);
    for (int i = 0; i < 20; ++i) {
        fp_same(i, 0) = rng.normal(0.8, 0.02);
        fp_cross(i, 0) = rng.normal(0.4, 0.02);
    }
    models.finger_qda = qda_fit(Modality::Fingerprint, fp_same, fp_cross);
    models.finger_features = FeatureSelection{{2}};

    PipelineConfig cfg;
    cfg.device_mode = DeviceMode::Inferred;

    Access high = full_access(1.0, {0.0, 0.0, 0.0}, 0.8);
    high.face->device_true.reset();  // inference must not need the truth
    const PipelineResult r_high = run_pipeline(high, cfg, models);
    CHECK(r_high.face_condition == DeviceClass::FaceHighRes);
    CHECK(r_high.fused == doctest::Approx(2.0));  // fnf1 calibrator, fp llr 0

    Access low = full_access(1.0, {0.0, 0.0, 0.0}, 0.8);
    // Cross-device-looking face qualities, same-device fingerprints.
    low.face->q_query = QualityVector::of(std::vector<double>(14, 0.4));
    const PipelineResult r_low = run_pipeline(low, cfg, models);
    CHECK(r_low.face_condition == DeviceClass::FaceCross);
    CHECK(r_low.fused == doctest::Approx(102.0));  // xfa1 calibrator fired

    // Incomplete face qualities fall back to the same-device condition.
    Access partial = full_access(1.0, {0.0, 0.0, 0.0}, 0.8);
    partial.face->q_query.clear(3);
    const PipelineResult r_partial = run_pipeline(partial, cfg, models);
    CHECK(r_partial.face_condition == DeviceClass::FaceHighRes);
}

TEST_CASE("the per-device fingerprint switch selects condition calibrators") {
    ModelSet models = simple_models();
    models.calibrators["fp/fo"] = affine(50.0, {2.0, 2.0, 2.0});

    Access a = full_access(1.0, {1.0, 1.0, 1.0});
    PipelineConfig cfg;
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(2.0 + 6.0));

    cfg.per_device_fingerprint = true;  // now fp/fo applies to this fo access
    CHECK(run_pipeline(a, cfg, models).fused == doctest::Approx(2.0 + 56.0));
}

TEST_CASE("fit_model_set produces the expected registry on synthetic data") {
    SynthSpec spec;
    spec.accesses_per_mixture = 300;
    spec.corruption.face_prob = 0.0;
    spec.corruption.finger_prob = 0.0;
    const GeneratedData data = gen_dataset(spec);

    std::vector<std::string> notes;
    const ModelSet models = fit_model_set(data.training, {}, FeatureSelection{{8}},
                                          FeatureSelection{{2}}, &notes);
    CHECK(notes.empty());
    for (const char* key : {"face/fnf1", "face/xfa1", "face/pooled", "fp/fo", "fp/xft",
                            "fp/pooled"})
        CHECK(models.calibrators.count(key) == 1);
    CHECK(models.normalizers.size() == 12);
    CHECK(models.face_qda.has_value());
    CHECK(models.finger_qda.has_value());
    CHECK(models.fallback(FusionRule::LlrSum) == 0.0);
    CHECK(models.fallback(FusionRule::LlrMax) == 0.0);

    // The tanh fallbacks are the training-set eer thresholds of the fused
    // scores; recompute one to pin the contract.
    PipelineConfig cfg;
    cfg.rule = FusionRule::TanhMean;
    std::vector<double> genuine, impostor;
    for (const Access& a : data.training.accesses) {
        const PipelineResult r = run_pipeline(a, cfg, models);
        (a.label() == Label::Target ? genuine : impostor).push_back(r.fused);
    }
    CHECK(models.fallback(FusionRule::TanhMean) ==
          doctest::Approx(eer(genuine, impostor).threshold).epsilon(1e-12));

    // Calibrated face scores on the same-device condition recover the
    // analytic llr slope of the configured score law.
    const Calibrator& cal = models.calibrators.at("face/fnf1");
    const double slope = spec.face_same.genuine_mean - spec.face_same.impostor_mean;
    CHECK(std::abs(cal.weights[0] - slope) < 0.25);
}

TEST_CASE("device-less training data still yields the pooled models") {
    SynthSpec spec;
    spec.accesses_per_mixture = 150;
    GeneratedData data = gen_dataset(spec);
    for (Access& a : data.training.accesses) {
        a.face->device_true.reset();
        for (auto& f : a.fingers) f->device_true.reset();
        a.mixture.reset();
    }

    std::vector<std::string> notes;
    const ModelSet models = fit_model_set(data.training, {}, FeatureSelection{{8}},
                                          FeatureSelection{{2}}, &notes);
    CHECK(models.calibrators.count("face/pooled") == 1);
    CHECK(models.calibrators.count("fp/pooled") == 1);
    CHECK(models.calibrators.count("face/fnf1") == 0);
    CHECK_FALSE(models.face_qda.has_value());
    CHECK(models.fallbacks.count("mean") == 1);  // computed in pooled mode

    PipelineConfig cfg;
    cfg.device_mode = DeviceMode::Pooled;
    const PipelineResult r = run_pipeline(data.training.accesses[0], cfg, models);
    CHECK(std::isfinite(r.fused));
}

TEST_CASE("model io round-trips the registry exactly") {
    SynthSpec spec;
    spec.accesses_per_mixture = 120;
    const GeneratedData data = gen_dataset(spec);
    StoredModels stored;
    stored.models = fit_model_set(data.training, {}, FeatureSelection{{8}},
                                  FeatureSelection{{2}}, nullptr);
    GateThresholds gate;
    gate.face_same = 0.25;
    gate.finger_cross = 0.5;
    gate.face_quality_index = 3;
    stored.gate = gate;

    const std::string text = write_models(stored);
    const StoredModels loaded = parse_models(text);
    CHECK(write_models(loaded) == text);

    REQUIRE(loaded.gate.has_value());
    CHECK(loaded.gate->face_same == gate.face_same);
    CHECK_FALSE(loaded.gate->face_cross.has_value());
    CHECK(loaded.gate->face_quality_index == 3);

    const Calibrator& a = stored.models.calibrators.at("fp/pooled");
    const Calibrator& b = loaded.models.calibrators.at("fp/pooled");
    CHECK(a.intercept == b.intercept);
    CHECK(a.weights == b.weights);

    // A loaded model set drives the pipeline to identical outputs.
    PipelineConfig cfg;
    for (const Access& access : data.evaluation.accesses) {
        const double x = run_pipeline(access, cfg, stored.models).fused;
        const double y = run_pipeline(access, cfg, loaded.models).fused;
        CHECK(x == y);
    }
}

TEST_CASE("a zero-information channel barely moves the llr-sum eer") {
    // Face is informative, all fingerprints share one law for both classes.
    SynthSpec spec;
    spec.face_same = {1.0, 1.0, -1.0, 1.0};
    spec.face_cross = {1.0, 1.0, -1.0, 1.0};
    for (auto* block : {&spec.finger_same, &spec.finger_cross})
        for (auto& m : *block) m = {0.0, 1.0, 0.0, 1.0};
    spec.corruption.face_prob = 0.0;
    spec.corruption.finger_prob = 0.0;
    spec.accesses_per_mixture = 2500;
    const GeneratedData data = gen_dataset(spec);

    const ModelSet models = fit_model_set(data.training, {}, FeatureSelection{{8}},
                                          FeatureSelection{{2}}, nullptr);

    PipelineConfig cfg;
    std::vector<double> fused_genuine, fused_impostor, face_genuine, face_impostor;
    std::vector<double> mean_genuine, mean_impostor;
    PipelineConfig mean_cfg;
    mean_cfg.rule = FusionRule::TanhMean;
    for (const Access& a : data.evaluation.accesses) {
        const double fused = run_pipeline(a, cfg, models).fused;
        const double mean_fused = run_pipeline(a, mean_cfg, models).fused;
        if (a.label() == Label::Target) {
            fused_genuine.push_back(fused);
            mean_genuine.push_back(mean_fused);
            face_genuine.push_back(*a.face->score);
        } else {
            fused_impostor.push_back(fused);
            mean_impostor.push_back(mean_fused);
            face_impostor.push_back(*a.face->score);
        }
    }
    const double fused_eer = eer(fused_genuine, fused_impostor).eer;
    const double face_eer = eer(face_genuine, face_impostor).eer;
    const double mean_eer = eer(mean_genuine, mean_impostor).eer;

    CHECK(std::abs(fused_eer - face_eer) < 0.01);  // within one point
    CHECK(fused_eer <= mean_eer);  // equal weighting dilutes the informative channel
}
