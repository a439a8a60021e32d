#include "qfuse/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qfuse {

namespace {

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_qda(std::string& out, const char* name, const QdaModel& m,
               const FeatureSelection& sel) {
    out += std::string("qda ") + name + " dim " + std::to_string(m.dim()) + " features";
    for (int idx : sel.indices) out += " " + std::to_string(idx);
    out += '\n';
    for (const auto* cls : {&m.same_device, &m.cross_device}) {
        out += std::string("  class ") + (cls == &m.same_device ? "same" : "cross") +
               " prior " + exact(cls->prior) + '\n';
        out += "    mean";
        for (Eigen::Index i = 0; i < cls->mean.size(); ++i) out += " " + exact(cls->mean[i]);
        out += '\n';
        for (Eigen::Index r = 0; r < cls->covariance.rows(); ++r) {
            out += "    cov";
            for (Eigen::Index c = 0; c < cls->covariance.cols(); ++c)
                out += " " + exact(cls->covariance(r, c));
            out += '\n';
        }
    }
    out += "end\n";
}

struct Tokenizer {
    std::istringstream in;
    explicit Tokenizer(const std::string& line) : in(line) {}
    std::string word() {
        std::string w;
        if (!(in >> w)) throw std::runtime_error("models file: truncated line");
        return w;
    }
    double number() {
        double v = 0.0;
        if (!(in >> v) || !std::isfinite(v))
            throw std::runtime_error("models file: bad number");
        return v;
    }
    bool try_number(double& v) { return static_cast<bool>(in >> v); }
    int integer() { return static_cast<int>(number()); }
};

QdaModel::ClassModel finish_class(Eigen::VectorXd mean, Eigen::MatrixXd cov, double prior) {
    QdaModel::ClassModel cls;
    cls.mean = std::move(mean);
    cls.covariance = std::move(cov);
    cls.prior = prior;
    const Eigen::LLT<Eigen::MatrixXd> llt(cls.covariance);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("models file: stored covariance is not positive definite");
    cls.precision = llt.solve(
        Eigen::MatrixXd::Identity(cls.covariance.rows(), cls.covariance.cols()));
    cls.log_det_covariance =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return cls;
}

}  // namespace

std::string write_models(const StoredModels& stored) {
    const ModelSet& m = stored.models;
    std::string out = "qfuse models 1\n";

    for (const auto& [key, cal] : m.calibrators) {
        out += "calibrator " + key + " dim " + std::to_string(cal.dim()) + '\n';
        out += "  intercept " + exact(cal.intercept) + '\n';
        out += "  weights";
        for (Eigen::Index i = 0; i < cal.weights.size(); ++i)
            out += " " + exact(cal.weights[i]);
        out += '\n';
        out += "  prior_log_odds " + exact(cal.prior_log_odds) + '\n';
        out += "end\n";
    }
    for (const auto& [key, n] : m.normalizers)
        out += "normalizer " + key + " " + exact(n.mean) + " " + exact(n.stddev) + '\n';
    if (m.face_qda) write_qda(out, "face", *m.face_qda, m.face_features);
    if (m.finger_qda) write_qda(out, "fingerprint", *m.finger_qda, m.finger_features);
    for (const auto& [rule, value] : m.fallbacks)
        out += "fallback " + rule + " " + exact(value) + '\n';

    if (stored.gate) {
        const GateThresholds& g = *stored.gate;
        auto one = [&](const char* name, const std::optional<double>& t) {
            if (t) out += std::string("gate ") + name + " " + exact(*t) + '\n';
        };
        one("face/fnf1", g.face_same);
        one("face/xfa1", g.face_cross);
        one("fp/fo", g.finger_same);
        one("fp/xft", g.finger_cross);
        out += "gate_face_quality_index " + std::to_string(g.face_quality_index) + '\n';
    }
    return out;
}

StoredModels parse_models(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "qfuse models 1")
        throw std::runtime_error("models file: unrecognized header");

    StoredModels stored;
    ModelSet& m = stored.models;

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Tokenizer t(line);
        const std::string kind = t.word();

        if (kind == "calibrator") {
            const std::string key = t.word();
            if (t.word() != "dim") throw std::runtime_error("models file: expected dim");
            const int dim = t.integer();
            Calibrator cal;
            cal.weights = Eigen::VectorXd::Zero(dim);
            for (int field = 0; field < 3; ++field) {
                if (!std::getline(in, line))
                    throw std::runtime_error("models file: truncated calibrator block");
                Tokenizer ft(line);
                const std::string name = ft.word();
                if (name == "intercept") {
                    cal.intercept = ft.number();
                } else if (name == "weights") {
                    for (int i = 0; i < dim; ++i) cal.weights[i] = ft.number();
                } else if (name == "prior_log_odds") {
                    cal.prior_log_odds = ft.number();
                } else {
                    throw std::runtime_error("models file: unknown calibrator field " + name);
                }
            }
            if (!std::getline(in, line) || line != "end")
                throw std::runtime_error("models file: calibrator block missing end");
            m.calibrators[key] = std::move(cal);
        } else if (kind == "normalizer") {
            const std::string key = t.word();
            TanhNormalizer n;
            n.mean = t.number();
            n.stddev = t.number();
            m.normalizers[key] = n;
        } else if (kind == "qda") {
            const std::string which = t.word();
            if (t.word() != "dim") throw std::runtime_error("models file: expected dim");
            const int dim = t.integer();
            if (t.word() != "features")
                throw std::runtime_error("models file: expected features");
            FeatureSelection sel;
            double idx = 0.0;
            while (t.try_number(idx)) sel.indices.push_back(static_cast<int>(idx));

            QdaModel model;
            model.modality =
                which == "face" ? Modality::Face : Modality::Fingerprint;
            for (int c = 0; c < 2; ++c) {
                if (!std::getline(in, line))
                    throw std::runtime_error("models file: truncated qda block");
                Tokenizer ct(line);
                if (ct.word() != "class")
                    throw std::runtime_error("models file: expected class line");
                const std::string cls_name = ct.word();
                if (ct.word() != "prior")
                    throw std::runtime_error("models file: expected prior");
                const double prior = ct.number();

                if (!std::getline(in, line))
                    throw std::runtime_error("models file: truncated qda mean");
                Tokenizer mt(line);
                if (mt.word() != "mean")
                    throw std::runtime_error("models file: expected mean line");
                Eigen::VectorXd mean(dim);
                for (int i = 0; i < dim; ++i) mean[i] = mt.number();

                Eigen::MatrixXd cov(dim, dim);
                for (int r = 0; r < dim; ++r) {
                    if (!std::getline(in, line))
                        throw std::runtime_error("models file: truncated qda covariance");
                    Tokenizer rt(line);
                    if (rt.word() != "cov")
                        throw std::runtime_error("models file: expected cov line");
                    for (int cc = 0; cc < dim; ++cc) cov(r, cc) = rt.number();
                }
                auto cls = finish_class(std::move(mean), std::move(cov), prior);
                (cls_name == "same" ? model.same_device : model.cross_device) =
                    std::move(cls);
            }
            if (!std::getline(in, line) || line != "end")
                throw std::runtime_error("models file: qda block missing end");
            if (which == "face") {
                m.face_qda = std::move(model);
                m.face_features = std::move(sel);
            } else {
                m.finger_qda = std::move(model);
                m.finger_features = std::move(sel);
            }
        } else if (kind == "fallback") {
            const std::string rule = t.word();
            m.fallbacks[rule] = t.number();
        } else if (kind == "gate") {
            if (!stored.gate) stored.gate.emplace();
            const std::string group = t.word();
            const double tau = t.number();
            if (group == "face/fnf1") stored.gate->face_same = tau;
            else if (group == "face/xfa1") stored.gate->face_cross = tau;
            else if (group == "fp/fo") stored.gate->finger_same = tau;
            else if (group == "fp/xft") stored.gate->finger_cross = tau;
            else throw std::runtime_error("models file: unknown gate group " + group);
        } else if (kind == "gate_face_quality_index") {
            if (!stored.gate) stored.gate.emplace();
            stored.gate->face_quality_index = t.integer();
        } else {
            throw std::runtime_error("models file: unknown block '" + kind + "'");
        }
    }
    return stored;
}

void save_models(const std::string& path, const StoredModels& stored) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write models file '" + path + "'");
    out << write_models(stored);
}

StoredModels load_models(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open models file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_models(buf.str());
}

}  // namespace qfuse
