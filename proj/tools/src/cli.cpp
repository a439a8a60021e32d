#include "qfuse_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "qfuse/metrics.hpp"
#include "qfuse/model_io.hpp"
#include "qfuse/probit.hpp"
#include "qfuse/protocol.hpp"
#include "qfuse/quality_gate.hpp"
#include "qfuse/score_file.hpp"

namespace qfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "qfuse 0.1.0";

// ---------------------------------------------------------------------------
// Config document handling
// ---------------------------------------------------------------------------

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
    if (!obj.is_object())
        throw std::runtime_error("config: expected an object at " + where);
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw std::runtime_error("config: unknown key '" + key + "' in " + where);
}

ScoreModel score_model_from_json(const json& j, const std::string& where) {
    check_keys(j, {"genuine_mean", "genuine_sigma", "impostor_mean", "impostor_sigma"},
               where);
    ScoreModel m;
    m.genuine_mean = j.value("genuine_mean", m.genuine_mean);
    m.genuine_sigma = j.value("genuine_sigma", m.genuine_sigma);
    m.impostor_mean = j.value("impostor_mean", m.impostor_mean);
    m.impostor_sigma = j.value("impostor_sigma", m.impostor_sigma);
    return m;
}

json score_model_to_json(const ScoreModel& m) {
    return {{"genuine_mean", m.genuine_mean},
            {"genuine_sigma", m.genuine_sigma},
            {"impostor_mean", m.impostor_mean},
            {"impostor_sigma", m.impostor_sigma}};
}

QualityModel quality_model_from_json(const json& j, const std::string& where) {
    check_keys(j, {"mean", "sigma"}, where);
    QualityModel m;
    m.mean = j.value("mean", m.mean);
    m.sigma = j.value("sigma", m.sigma);
    return m;
}

json quality_model_to_json(const QualityModel& m) {
    return {{"mean", m.mean}, {"sigma", m.sigma}};
}

void synth_from_json(const json& j, SynthSpec& spec) {
    check_keys(j,
               {"face_same", "face_cross", "finger_same", "finger_cross",
                "face_template_quality", "finger_template_quality",
                "face_query_quality_same", "face_query_quality_cross",
                "finger_query_quality_same", "finger_query_quality_cross", "corruption",
                "training_subjects", "evaluation_subjects", "accesses_per_mixture",
                "face_missing_rate", "finger_missing_rate"},
               "synth");
    if (j.contains("face_same"))
        spec.face_same = score_model_from_json(j["face_same"], "synth.face_same");
    if (j.contains("face_cross"))
        spec.face_cross = score_model_from_json(j["face_cross"], "synth.face_cross");
    for (const char* key : {"finger_same", "finger_cross"}) {
        if (!j.contains(key)) continue;
        const json& arr = j[key];
        if (!arr.is_array() || arr.size() != 3)
            throw std::runtime_error(std::string("config: synth.") + key +
                                     " must be an array of three score models");
        auto& target = std::string(key) == "finger_same" ? spec.finger_same
                                                         : spec.finger_cross;
        for (size_t i = 0; i < 3; ++i)
            target[i] = score_model_from_json(arr[i], std::string("synth.") + key);
    }
    if (j.contains("face_template_quality"))
        spec.face_template_quality =
            quality_model_from_json(j["face_template_quality"], "synth.face_template_quality");
    if (j.contains("finger_template_quality"))
        spec.finger_template_quality = quality_model_from_json(
            j["finger_template_quality"], "synth.finger_template_quality");
    if (j.contains("face_query_quality_same"))
        spec.face_query_quality_same = quality_model_from_json(
            j["face_query_quality_same"], "synth.face_query_quality_same");
    if (j.contains("face_query_quality_cross"))
        spec.face_query_quality_cross = quality_model_from_json(
            j["face_query_quality_cross"], "synth.face_query_quality_cross");
    if (j.contains("finger_query_quality_same"))
        spec.finger_query_quality_same = quality_model_from_json(
            j["finger_query_quality_same"], "synth.finger_query_quality_same");
    if (j.contains("finger_query_quality_cross"))
        spec.finger_query_quality_cross = quality_model_from_json(
            j["finger_query_quality_cross"], "synth.finger_query_quality_cross");
    if (j.contains("corruption")) {
        const json& c = j["corruption"];
        check_keys(c, {"face_prob", "finger_prob", "low_quality"}, "synth.corruption");
        spec.corruption.face_prob = c.value("face_prob", spec.corruption.face_prob);
        spec.corruption.finger_prob = c.value("finger_prob", spec.corruption.finger_prob);
        if (c.contains("low_quality"))
            spec.corruption.low_quality =
                quality_model_from_json(c["low_quality"], "synth.corruption.low_quality");
    }
    spec.training_subjects = j.value("training_subjects", spec.training_subjects);
    spec.evaluation_subjects = j.value("evaluation_subjects", spec.evaluation_subjects);
    spec.accesses_per_mixture = j.value("accesses_per_mixture", spec.accesses_per_mixture);
    spec.face_missing_rate = j.value("face_missing_rate", spec.face_missing_rate);
    spec.finger_missing_rate = j.value("finger_missing_rate", spec.finger_missing_rate);
}

json synth_to_json(const SynthSpec& spec) {
    json j;
    j["face_same"] = score_model_to_json(spec.face_same);
    j["face_cross"] = score_model_to_json(spec.face_cross);
    j["finger_same"] = json::array();
    j["finger_cross"] = json::array();
    for (const auto& m : spec.finger_same) j["finger_same"].push_back(score_model_to_json(m));
    for (const auto& m : spec.finger_cross) j["finger_cross"].push_back(score_model_to_json(m));
    j["face_template_quality"] = quality_model_to_json(spec.face_template_quality);
    j["finger_template_quality"] = quality_model_to_json(spec.finger_template_quality);
    j["face_query_quality_same"] = quality_model_to_json(spec.face_query_quality_same);
    j["face_query_quality_cross"] = quality_model_to_json(spec.face_query_quality_cross);
    j["finger_query_quality_same"] = quality_model_to_json(spec.finger_query_quality_same);
    j["finger_query_quality_cross"] = quality_model_to_json(spec.finger_query_quality_cross);
    j["corruption"] = {{"face_prob", spec.corruption.face_prob},
                       {"finger_prob", spec.corruption.finger_prob},
                       {"low_quality", quality_model_to_json(spec.corruption.low_quality)}};
    j["training_subjects"] = spec.training_subjects;
    j["evaluation_subjects"] = spec.evaluation_subjects;
    j["accesses_per_mixture"] = spec.accesses_per_mixture;
    j["face_missing_rate"] = spec.face_missing_rate;
    j["finger_missing_rate"] = spec.finger_missing_rate;
    return j;
}

std::vector<int> feature_list_from_json(const json& j, const std::string& where,
                                        int universe) {
    if (!j.is_array() || j.empty())
        throw std::runtime_error("config: " + where + " must be a nonempty array of indices");
    std::vector<int> out;
    for (const auto& v : j) {
        const int idx = v.get<int>();
        if (idx < 1 || idx > universe)
            throw std::runtime_error("config: " + where + " index " + std::to_string(idx) +
                                     " outside 1.." + std::to_string(universe));
        if (std::count(out.begin(), out.end(), idx) > 0)
            throw std::runtime_error("config: " + where + " repeats index " +
                                     std::to_string(idx));
        out.push_back(idx);
    }
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: ") + e.what());
    }
    check_keys(doc,
               {"seed", "out", "rule", "device_mode", "gate", "gate_thresholds", "prior",
                "decision_threshold", "fallback", "per_device_fingerprint", "verbose",
                "training", "face_features", "finger_features", "synth", "train_scores",
                "eval_scores", "models", "fused_scores"},
               "top level");

    RunConfig cfg;
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.out_dir = doc.value("out", cfg.out_dir);
    if (doc.contains("rule")) {
        const auto rule = fusion_rule_from_string(doc["rule"].get<std::string>());
        if (!rule) throw std::runtime_error("config: unknown rule");
        cfg.rule = *rule;
    }
    if (doc.contains("device_mode")) {
        const auto mode = device_mode_from_string(doc["device_mode"].get<std::string>());
        if (!mode) throw std::runtime_error("config: unknown device_mode");
        cfg.device_mode = *mode;
    }
    if (doc.contains("gate")) {
        cfg.gate_mode = doc["gate"].get<std::string>();
        if (cfg.gate_mode != "off" && cfg.gate_mode != "fixed" && cfg.gate_mode != "auto")
            throw std::runtime_error("config: gate must be off, fixed or auto");
    }
    if (doc.contains("gate_thresholds")) {
        const json& g = doc["gate_thresholds"];
        check_keys(g, {"face/fnf1", "face/xfa1", "fp/fo", "fp/xft", "face_quality_index"},
                   "gate_thresholds");
        if (g.contains("face/fnf1")) cfg.gate_thresholds.face_same = g["face/fnf1"].get<double>();
        if (g.contains("face/xfa1")) cfg.gate_thresholds.face_cross = g["face/xfa1"].get<double>();
        if (g.contains("fp/fo")) cfg.gate_thresholds.finger_same = g["fp/fo"].get<double>();
        if (g.contains("fp/xft")) cfg.gate_thresholds.finger_cross = g["fp/xft"].get<double>();
        cfg.gate_thresholds.face_quality_index =
            g.value("face_quality_index", cfg.gate_thresholds.face_quality_index);
        if (cfg.gate_thresholds.face_quality_index < 1 ||
            cfg.gate_thresholds.face_quality_index > kFaceQualityArity)
            throw std::runtime_error("config: face_quality_index outside 1.." +
                                     std::to_string(kFaceQualityArity));
    }
    cfg.prior = doc.value("prior", cfg.prior);
    cfg.decision_threshold = doc.value("decision_threshold", cfg.decision_threshold);
    if (!std::isfinite(cfg.decision_threshold))
        throw std::runtime_error("config: decision_threshold must be finite");
    if (doc.contains("fallback")) cfg.fallback = doc["fallback"].get<double>();
    cfg.per_device_fingerprint =
        doc.value("per_device_fingerprint", cfg.per_device_fingerprint);
    cfg.verbose = doc.value("verbose", cfg.verbose);
    if (doc.contains("training")) {
        const json& t = doc["training"];
        check_keys(t, {"convergence_tol", "max_iters"}, "training");
        cfg.training.convergence_tol = t.value("convergence_tol", cfg.training.convergence_tol);
        cfg.training.max_iters = t.value("max_iters", cfg.training.max_iters);
    }
    if (doc.contains("face_features"))
        cfg.face_features.indices =
            feature_list_from_json(doc["face_features"], "face_features", kFaceQualityArity);
    if (doc.contains("finger_features"))
        cfg.finger_features.indices =
            feature_list_from_json(doc["finger_features"], "finger_features", 8);
    if (doc.contains("synth")) synth_from_json(doc["synth"], cfg.synth);
    cfg.train_scores = doc.value("train_scores", cfg.train_scores);
    cfg.eval_scores = doc.value("eval_scores", cfg.eval_scores);
    cfg.models = doc.value("models", cfg.models);
    cfg.fused_scores = doc.value("fused_scores", cfg.fused_scores);
    return cfg;
}

std::string RunConfig::train_scores_path() const {
    return train_scores.empty() ? out_dir + "/train.scores" : train_scores;
}
std::string RunConfig::eval_scores_path() const {
    return eval_scores.empty() ? out_dir + "/eval.scores" : eval_scores;
}
std::string RunConfig::models_path() const {
    return models.empty() ? out_dir + "/models.txt" : models;
}
std::string RunConfig::fused_scores_path() const {
    return fused_scores.empty() ? out_dir + "/fused.scores" : fused_scores;
}

std::string config_to_json(const RunConfig& cfg, const std::string& command) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    json c;
    c["seed"] = cfg.seed;
    c["out"] = cfg.out_dir;
    c["rule"] = to_string(cfg.rule);
    c["device_mode"] = to_string(cfg.device_mode);
    c["gate"] = cfg.gate_mode;
    json g;
    if (cfg.gate_thresholds.face_same) g["face/fnf1"] = *cfg.gate_thresholds.face_same;
    if (cfg.gate_thresholds.face_cross) g["face/xfa1"] = *cfg.gate_thresholds.face_cross;
    if (cfg.gate_thresholds.finger_same) g["fp/fo"] = *cfg.gate_thresholds.finger_same;
    if (cfg.gate_thresholds.finger_cross) g["fp/xft"] = *cfg.gate_thresholds.finger_cross;
    g["face_quality_index"] = cfg.gate_thresholds.face_quality_index;
    c["gate_thresholds"] = g;
    c["prior"] = cfg.prior;
    c["decision_threshold"] = cfg.decision_threshold;
    if (cfg.fallback) c["fallback"] = *cfg.fallback;
    c["per_device_fingerprint"] = cfg.per_device_fingerprint;
    c["verbose"] = cfg.verbose;
    c["training"] = {{"convergence_tol", cfg.training.convergence_tol},
                     {"max_iters", cfg.training.max_iters}};
    c["face_features"] = cfg.face_features.indices;
    c["finger_features"] = cfg.finger_features.indices;
    c["synth"] = synth_to_json(cfg.synth);
    c["train_scores"] = cfg.train_scores_path();
    c["eval_scores"] = cfg.eval_scores_path();
    c["models"] = cfg.models_path();
    c["fused_scores"] = cfg.fused_scores_path();
    j["config"] = c;
    return j.dump(2) + "\n";
}

namespace {

// ---------------------------------------------------------------------------
// Shared command plumbing
// ---------------------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/run_manifest.json", config_to_json(cfg, command));
}

Dataset load_training_dataset(const RunConfig& cfg) {
    Dataset ds;
    ds.role = DatasetRole::Training;
    ds.accesses = group_records(read_score_file(cfg.train_scores_path()));
    ProtocolSplit split = split_protocol(ds);
    if (split.train.accesses.empty())
        throw std::runtime_error("training file has no labeled session-2 accesses");
    return impute_training(split.train);
}

std::vector<Access> load_evaluation_accesses(const RunConfig& cfg) {
    Dataset ds;
    ds.role = DatasetRole::Evaluation;
    ds.accesses = group_records(read_score_file(cfg.eval_scores_path()));
    ProtocolSplit split = split_protocol(ds);
    std::vector<Access> accesses = std::move(split.train.accesses);
    accesses.insert(accesses.end(), split.eval.accesses.begin(), split.eval.accesses.end());
    std::sort(accesses.begin(), accesses.end(),
              [](const Access& a, const Access& b) { return a.access_id < b.access_id; });
    if (accesses.empty()) throw std::runtime_error("evaluation file has no session-2 accesses");
    return accesses;
}

std::string format_sweep(const std::vector<std::pair<std::string, SweepResult>>& curves) {
    std::string out = "group,threshold,eer,rejected\n";
    for (const auto& [group, sweep] : curves)
        for (const SweepPoint& p : sweep.curve)
            out += group + "," + format_score(p.threshold) + "," + format_score(p.eer) +
                   "," + std::to_string(p.rejected) + "\n";
    for (const auto& [group, sweep] : curves)
        out += "# chosen " + group + " " + format_score(sweep.best_threshold) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg) {
    SynthSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    const GeneratedData data = gen_dataset(spec);
    fs::create_directories(cfg.out_dir);
    write_score_file(cfg.train_scores_path(), flatten(data.training.accesses));
    write_score_file(cfg.eval_scores_path(), flatten(data.evaluation.accesses));
    write_manifest(cfg, "gen");
    std::cout << "gen: wrote " << data.training.accesses.size() << " training and "
              << data.evaluation.accesses.size() << " evaluation accesses under "
              << cfg.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg) {
    const Dataset train = load_training_dataset(cfg);

    TrainingConfig tc = cfg.training;
    tc.prior = cfg.prior;
    std::vector<std::string> notes;
    StoredModels stored;
    stored.models = fit_model_set(train, tc, cfg.face_features, cfg.finger_features, &notes);

    if (cfg.gate_mode == "auto") {
        const AutoSweepOutcome sweep =
            auto_sweep_gate(train, cfg.device_mode == DeviceMode::Pooled,
                            cfg.gate_thresholds.face_quality_index);
        stored.gate = sweep.thresholds;
        write_text(cfg.out_dir + "/gate_sweep.txt", format_sweep(sweep.curves));
    } else if (cfg.gate_mode == "fixed") {
        if (!cfg.gate_thresholds.any_enabled())
            throw std::runtime_error("gate mode is 'fixed' but no gate_thresholds configured");
        stored.gate = cfg.gate_thresholds;
    }

    fs::create_directories(cfg.out_dir);
    save_models(cfg.models_path(), stored);
    write_manifest(cfg, "train");

    std::cout << "train: fitted " << stored.models.calibrators.size() << " calibrators, "
              << stored.models.normalizers.size() << " normalizers, qda face="
              << (stored.models.face_qda ? "yes" : "no")
              << " fp=" << (stored.models.finger_qda ? "yes" : "no") << "\n";
    for (const auto& n : notes) std::cout << "train: note: " << n << "\n";
    if (stored.gate) {
        auto show = [](const std::optional<double>& t) {
            return t ? format_score(*t) : std::string("disabled");
        };
        std::cout << "train: gate thresholds face/fnf1=" << show(stored.gate->face_same)
                  << " face/xfa1=" << show(stored.gate->face_cross)
                  << " fp/fo=" << show(stored.gate->finger_same)
                  << " fp/xft=" << show(stored.gate->finger_cross) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// infer-device
// ---------------------------------------------------------------------------

struct DeviceFeaturePools {
    // Full-width feature rows (14 face measures / 8 fingerprint statistics).
    std::vector<Eigen::VectorXd> face_same, face_cross;
    std::vector<Eigen::VectorXd> finger_same, finger_cross;
};

void collect_device_features(const std::vector<Access>& accesses, DeviceFeaturePools& pools) {
    for (const Access& a : accesses) {
        if (a.face && a.face->device_true && a.face->q_query.arity() == kFaceQualityArity &&
            a.face->q_query.all_present()) {
            Eigen::VectorXd row(kFaceQualityArity);
            for (int i = 0; i < kFaceQualityArity; ++i) row[i] = a.face->q_query.value(i);
            (is_cross_device(*a.face->device_true) ? pools.face_cross : pools.face_same)
                .push_back(std::move(row));
        }
        const auto fp_device = a.finger_device();
        if (!fp_device) continue;
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
        if (!complete) continue;
        const FpQualityFeatures f = derive_fp_features(q_template, q_query);
        Eigen::VectorXd row(8);
        for (int i = 0; i < 8; ++i) row[i] = f.values[static_cast<size_t>(i)];
        (is_cross_device(*fp_device) ? pools.finger_cross : pools.finger_same)
            .push_back(std::move(row));
    }
}

Eigen::MatrixXd project_columns(const std::vector<Eigen::VectorXd>& rows,
                                const std::vector<int>& indices) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(indices.size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < indices.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][indices[c] - 1];
    return m;
}

struct ErrorPair {
    double same = -1.0;   // negative means not measurable
    double cross = -1.0;
};

ErrorPair classify_errors(const QdaModel& model, const Eigen::MatrixXd& same,
                          const Eigen::MatrixXd& cross) {
    ErrorPair e;
    if (same.rows() > 0) {
        int wrong = 0;
        for (Eigen::Index i = 0; i < same.rows(); ++i)
            if (qda_classify(model, same.row(i).transpose()).device !=
                model.same_device_class())
                ++wrong;
        e.same = static_cast<double>(wrong) / static_cast<double>(same.rows());
    }
    if (cross.rows() > 0) {
        int wrong = 0;
        for (Eigen::Index i = 0; i < cross.rows(); ++i)
            if (qda_classify(model, cross.row(i).transpose()).device !=
                model.cross_device_class())
                ++wrong;
        e.cross = static_cast<double>(wrong) / static_cast<double>(cross.rows());
    }
    return e;
}

std::string feature_label(const std::vector<int>& indices) {
    std::string s;
    for (size_t i = 0; i < indices.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(indices[i]);
    }
    return s;
}

std::string rate(double v) { return v < 0.0 ? "n/a" : format_score(v); }

void enumerate_subsets(int universe, int max_size, std::vector<std::vector<int>>& out) {
    std::vector<int> current;
    // Depth-first over ascending indices keeps the output order stable.
    auto rec = [&](auto&& self, int next) -> void {
        if (!current.empty()) out.push_back(current);
        if (static_cast<int>(current.size()) == max_size) return;
        for (int i = next; i <= universe; ++i) {
            current.push_back(i);
            self(self, i + 1);
            current.pop_back();
        }
    };
    rec(rec, 1);
}

int cmd_infer_device(const RunConfig& cfg, bool search_features) {
    const Dataset train = load_training_dataset(cfg);
    DeviceFeaturePools train_pools;
    collect_device_features(train.accesses, train_pools);

    DeviceFeaturePools eval_pools;
    if (fs::exists(cfg.eval_scores_path())) {
        std::vector<Access> eval_accesses = load_evaluation_accesses(cfg);
        std::vector<Access> imputed;
        imputed.reserve(eval_accesses.size());
        for (const Access& a : eval_accesses)
            imputed.push_back(impute_evaluation(a).access);
        collect_device_features(imputed, eval_pools);
    }

    struct Row {
        std::string modality;
        std::string features;
        ErrorPair train_err;
        ErrorPair eval_err;
        double rank = 2.0;
    };
    std::vector<Row> rows;

    auto measure = [&](Modality modality, const std::vector<int>& sel) {
        const bool face = modality == Modality::Face;
        const auto& same = face ? train_pools.face_same : train_pools.finger_same;
        const auto& cross = face ? train_pools.face_cross : train_pools.finger_cross;
        const size_t need = sel.size() + 1;
        if (same.size() < need || cross.size() < need) return;
        QdaModel model;
        try {
            model = qda_fit(modality, project_columns(same, sel),
                            project_columns(cross, sel));
        } catch (const std::invalid_argument&) {
            return;  // degenerate subset (a zero-variance feature), skip it
        }
        Row row;
        row.modality = face ? "face" : "fingerprint";
        row.features = feature_label(sel);
        row.train_err = classify_errors(model, project_columns(same, sel),
                                        project_columns(cross, sel));
        const auto& esame = face ? eval_pools.face_same : eval_pools.finger_same;
        const auto& ecross = face ? eval_pools.face_cross : eval_pools.finger_cross;
        row.eval_err = classify_errors(model, project_columns(esame, sel),
                                       project_columns(ecross, sel));
        const ErrorPair& ranked = row.eval_err.same >= 0.0 || row.eval_err.cross >= 0.0
                                      ? row.eval_err
                                      : row.train_err;
        row.rank = 0.5 * (std::max(ranked.same, 0.0) + std::max(ranked.cross, 0.0));
        rows.push_back(std::move(row));
    };

    if (search_features) {
        std::vector<std::vector<int>> subsets;
        enumerate_subsets(kFaceQualityArity, 3, subsets);
        for (const auto& s : subsets) measure(Modality::Face, s);
        subsets.clear();
        enumerate_subsets(8, 3, subsets);
        for (const auto& s : subsets) measure(Modality::Fingerprint, s);
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.rank < b.rank; });
    } else {
        measure(Modality::Face, cfg.face_features.indices);
        measure(Modality::Fingerprint, cfg.finger_features.indices);
    }

    std::string report = "modality,features,train_error_same,train_error_cross,"
                         "eval_error_same,eval_error_cross\n";
    for (const Row& r : rows)
        report += r.modality + "," + r.features + "," + rate(r.train_err.same) + "," +
                  rate(r.train_err.cross) + "," + rate(r.eval_err.same) + "," +
                  rate(r.eval_err.cross) + "\n";

    fs::create_directories(cfg.out_dir);
    const std::string path =
        cfg.out_dir + (search_features ? "/device_search.txt" : "/device_report.txt");
    write_text(path, report);
    write_manifest(cfg, "infer-device");

    std::cout << "infer-device: wrote " << rows.size() << " row(s) to " << path << "\n";
    for (size_t i = 0; i < rows.size() && i < 8; ++i)
        std::cout << "  " << rows[i].modality << " {" << rows[i].features
                  << "} train " << rate(rows[i].train_err.same) << "/"
                  << rate(rows[i].train_err.cross) << " eval " << rate(rows[i].eval_err.same)
                  << "/" << rate(rows[i].eval_err.cross) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const RunConfig& cfg) {
    const Dataset train = load_training_dataset(cfg);
    const AutoSweepOutcome sweep =
        auto_sweep_gate(train, cfg.device_mode == DeviceMode::Pooled,
                        cfg.gate_thresholds.face_quality_index);
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/gate_sweep.txt", format_sweep(sweep.curves));
    write_manifest(cfg, "sweep");
    for (const auto& [group, result] : sweep.curves)
        std::cout << "sweep: " << group << " chose threshold "
                  << format_score(result.best_threshold) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

PipelineConfig pipeline_config(const RunConfig& cfg, const StoredModels& stored) {
    PipelineConfig pc;
    pc.device_mode = cfg.device_mode;
    pc.rule = cfg.rule;
    pc.fallback = cfg.fallback;
    pc.per_device_fingerprint = cfg.per_device_fingerprint;
    pc.decision.threshold = cfg.decision_threshold;

    if (cfg.gate_mode == "fixed") {
        if (cfg.gate_thresholds.any_enabled())
            pc.gate = cfg.gate_thresholds;
        else if (stored.gate && stored.gate->any_enabled())
            pc.gate = stored.gate;
        else
            throw std::runtime_error("gate mode is 'fixed' but no thresholds are available");
    } else if (cfg.gate_mode == "auto") {
        if (!stored.gate)
            throw std::runtime_error(
                "gate mode is 'auto' but the models file has no swept thresholds; "
                "run `train --gate auto` first");
        pc.gate = stored.gate;
    }
    return pc;
}

int cmd_fuse(const RunConfig& cfg) {
    const StoredModels stored = load_models(cfg.models_path());
    const PipelineConfig pc = pipeline_config(cfg, stored);
    const std::vector<Access> accesses = load_evaluation_accesses(cfg);

    std::string out = "access_id,mixture,label,fused,decision\n";
    std::string audit;
    int fallbacks = 0;
    for (const Access& a : accesses) {
        const PipelineResult r = run_pipeline(a, pc, stored.models);
        if (r.fallback_applied) ++fallbacks;
        out += a.access_id + ",";
        out += a.mixture ? std::to_string(a.mixture->id) : "unknown";
        out += ",";
        out += to_string(a.label());
        out += ",";
        out += format_score(r.fused);
        out += ",";
        out += decide(r.fused, pc.decision) == Decision::Accept ? "accept" : "reject";
        out += "\n";
        if (cfg.verbose)
            for (const std::string& line : r.audit)
                audit += a.access_id + ": " + line + "\n";
    }

    fs::create_directories(cfg.out_dir);
    write_text(cfg.fused_scores_path(), out);
    if (cfg.verbose) write_text(cfg.out_dir + "/audit.log", audit);
    write_manifest(cfg, "fuse");
    std::cout << "fuse: " << accesses.size() << " accesses fused with rule "
              << to_string(cfg.rule) << " (" << fallbacks << " fallback(s))\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct FusedRow {
    std::string access_id;
    std::string mixture;
    Label label = Label::Unknown;
    double fused = 0.0;
};

std::vector<FusedRow> read_fused_scores(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open fused scores '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "access_id,mixture,label,fused,decision")
        throw std::runtime_error("bad fused-scores header in '" + path + "'");
    std::vector<FusedRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        FusedRow r;
        std::string label, fused, decision;
        if (!std::getline(ls, r.access_id, ',') || !std::getline(ls, r.mixture, ',') ||
            !std::getline(ls, label, ',') || !std::getline(ls, fused, ',') ||
            !std::getline(ls, decision))
            throw std::runtime_error("bad fused-scores row at line " + std::to_string(line_no));
        if (label == "genuine") r.label = Label::Target;
        else if (label == "impostor") r.label = Label::NonTarget;
        r.fused = std::stod(fused);
        rows.push_back(std::move(r));
    }
    return rows;
}

int cmd_eval(const RunConfig& cfg) {
    const std::vector<FusedRow> rows = read_fused_scores(cfg.fused_scores_path());

    std::vector<double> genuine, impostor;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_mixture;
    int unlabeled = 0;
    for (const FusedRow& r : rows) {
        auto& bucket = by_mixture[r.mixture];
        if (r.label == Label::Target) {
            genuine.push_back(r.fused);
            bucket.first.push_back(r.fused);
        } else if (r.label == Label::NonTarget) {
            impostor.push_back(r.fused);
            bucket.second.push_back(r.fused);
        } else {
            ++unlabeled;
        }
    }
    if (genuine.empty() || impostor.empty())
        throw std::runtime_error("eval needs labeled fused scores for both classes");

    const double hter_threshold[] = {cfg.decision_threshold};
    const EvalReport report = evaluate(genuine, impostor, hter_threshold);

    std::string text = "qfuse evaluation report\n";
    text += "accesses " + std::to_string(rows.size()) + " genuine " +
            std::to_string(genuine.size()) + " impostor " + std::to_string(impostor.size()) +
            " unlabeled " + std::to_string(unlabeled) + "\n";
    text += "eer " + format_score(report.eer * 100.0) + " % at threshold " +
            format_score(report.eer_threshold) + "\n";
    text += "hter " + format_score(report.hter_at.at(cfg.decision_threshold) * 100.0) +
            " % at threshold " + format_score(cfg.decision_threshold) + "\n";
    text += "mixture,accesses,eer\n";
    size_t bucket_total = 0;
    for (const auto& [mixture, bucket] : by_mixture) {
        const size_t n = bucket.first.size() + bucket.second.size();
        bucket_total += n;
        std::string eer_text = "n/a";
        if (!bucket.first.empty() && !bucket.second.empty())
            eer_text = format_score(eer(bucket.first, bucket.second).eer * 100.0) + " %";
        text += mixture + "," + std::to_string(n) + "," + eer_text + "\n";
    }
    bucket_total += static_cast<size_t>(unlabeled);
    if (unlabeled > 0) text += "unlabeled," + std::to_string(unlabeled) + ",n/a\n";
    if (bucket_total != rows.size())
        throw std::runtime_error("eval: mixture buckets do not partition the accesses");

    std::string curve = "threshold,far,frr\n";
    std::string det = "probit_far,probit_frr\n";
    const OperatingCurve& c = report.curve;
    for (size_t i = 0; i < c.thresholds.size(); ++i) {
        if (!std::isfinite(c.thresholds[i])) continue;  // skip the sentinels in files
        curve += format_score(c.thresholds[i]) + "," + format_score(c.far[i]) + "," +
                 format_score(c.frr[i]) + "\n";
        det += format_score(report.det[i].first) + "," + format_score(report.det[i].second) +
               "\n";
    }

    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/eval_report.txt", text);
    write_text(cfg.out_dir + "/curve.txt", curve);
    write_text(cfg.out_dir + "/det.txt", det);
    write_manifest(cfg, "eval");

    std::cout << "eval: eer " << format_score(report.eer * 100.0) << " %, hter("
              << format_score(cfg.decision_threshold) << ") "
              << format_score(report.hter_at.at(cfg.decision_threshold) * 100.0) << " %\n";
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"quality-conditional multi-biometric score fusion", "qfuse"};
    app.failure_message(CLI::FailureMessage::help);
    app.require_subcommand(1);

    std::string config_path, rule_flag, device_mode_flag, gate_flag, out_flag;
    std::uint64_t seed_flag = 0;
    double prior_flag = 0.5;
    bool verbose_flag = false;
    bool search_features = false;

    const std::vector<std::string> names = {"gen",   "train", "infer-device",
                                            "sweep", "fuse",  "eval"};
    std::map<std::string, CLI::App*> subs;
    for (const std::string& name : names) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--seed", seed_flag, "generator seed");
        sub->add_option("--rule", rule_flag, "fusion rule")
            ->check(CLI::IsMember({"llr-sum", "llr-max", "mean", "min", "max"}));
        sub->add_option("--device-mode", device_mode_flag, "device conditioning")
            ->check(CLI::IsMember({"oracle", "inferred", "pooled"}));
        sub->add_option("--gate", gate_flag, "quality gate mode")
            ->check(CLI::IsMember({"off", "fixed", "auto"}));
        sub->add_option("--prior", prior_flag, "target prior probability")
            ->check(CLI::Range(1e-9, 1.0 - 1e-9));
        sub->add_option("--out", out_flag, "output directory");
        sub->add_flag("--verbose", verbose_flag, "emit per-access audit lines");
        subs[name] = sub;
    }
    subs["gen"]->description("write synthetic training and evaluation score files");
    subs["train"]->description("fit calibrators, normalizers, QDA models and gate thresholds");
    subs["infer-device"]->description("report device-estimation error rates per condition");
    subs["infer-device"]->add_flag("--search-features", search_features,
                                   "exhaustively score 1..3-feature subsets");
    subs["sweep"]->description("write the EER-vs-quality-threshold table per gate group");
    subs["fuse"]->description("run the fusion pipeline over the evaluation scores");
    subs["eval"]->description("score fused outputs: EER, HTER, DET points, per-mixture table");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path, std::ios::binary);
            if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
            std::ostringstream buf;
            buf << in.rdbuf();
            cfg = parse_config(buf.str());
        }

        CLI::App* active = app.get_subcommands().front();
        if (active->count("--seed")) cfg.seed = seed_flag;
        if (active->count("--rule")) cfg.rule = *fusion_rule_from_string(rule_flag);
        if (active->count("--device-mode"))
            cfg.device_mode = *device_mode_from_string(device_mode_flag);
        if (active->count("--gate")) cfg.gate_mode = gate_flag;
        if (active->count("--prior")) cfg.prior = prior_flag;
        if (active->count("--out")) cfg.out_dir = out_flag;
        if (active->count("--verbose")) cfg.verbose = verbose_flag;
        cfg.synth.seed = cfg.seed;

        const std::string name = active->get_name();
        if (name == "gen") return cmd_gen(cfg);
        if (name == "train") return cmd_train(cfg);
        if (name == "infer-device") return cmd_infer_device(cfg, search_features);
        if (name == "sweep") return cmd_sweep(cfg);
        if (name == "fuse") return cmd_fuse(cfg);
        return cmd_eval(cfg);
    } catch (const std::exception& e) {
        std::cerr << "qfuse: error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace qfuse::cli
