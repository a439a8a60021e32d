#include "qfuse/device_inference.hpp"

#include <cmath>
#include <stdexcept>

namespace qfuse {

FpQualityFeatures derive_fp_features(const std::array<double, 3>& q_templates,
                                     const std::array<double, 3>& q_queries) {
    for (double q : q_templates)
        if (!std::isfinite(q)) throw std::invalid_argument("non-finite template quality");
    for (double q : q_queries)
        if (!std::isfinite(q)) throw std::invalid_argument("non-finite query quality");

    FpQualityFeatures f;
    double count_above = 0.0;
    double max_q = q_queries[0], min_q = q_queries[0], sum_q = 0.0;
    double max_abs = 0.0, min_abs = std::abs(q_templates[0] - q_queries[0]), sum_abs = 0.0;
    double max_signed = q_templates[0] - q_queries[0];
    for (int i = 0; i < 3; ++i) {
        const double d = q_templates[i] - q_queries[i];
        if (d > 0.0) count_above += 1.0;
        max_q = std::max(max_q, q_queries[i]);
        min_q = std::min(min_q, q_queries[i]);
        sum_q += q_queries[i];
        max_abs = std::max(max_abs, std::abs(d));
        min_abs = std::min(min_abs, std::abs(d));
        sum_abs += std::abs(d);
        max_signed = std::max(max_signed, d);
    }
    f.values = {count_above, max_q, max_abs, min_q, min_abs, sum_q / 3.0, sum_abs / 3.0,
                max_signed};
    return f;
}

namespace {

Eigen::VectorXd project(const std::vector<double>& values, const FeatureSelection& sel,
                        const char* what) {
    if (sel.indices.empty()) throw std::invalid_argument("empty feature selection");
    Eigen::VectorXd out(static_cast<Eigen::Index>(sel.indices.size()));
    for (size_t i = 0; i < sel.indices.size(); ++i) {
        const int idx = sel.indices[i];
        if (idx < 1 || idx > static_cast<int>(values.size()))
            throw std::out_of_range(std::string(what) + " feature index " +
                                    std::to_string(idx) + " out of range 1.." +
                                    std::to_string(values.size()));
        for (size_t j = 0; j < i; ++j)
            if (sel.indices[j] == idx)
                throw std::invalid_argument(std::string(what) + " feature index " +
                                            std::to_string(idx) + " selected twice");
        out[static_cast<Eigen::Index>(i)] = values[static_cast<size_t>(idx - 1)];
    }
    return out;
}

}  // namespace

Eigen::VectorXd select_face_features(const QualityVector& qv, const FeatureSelection& sel) {
    if (qv.arity() != kFaceQualityArity)
        throw std::invalid_argument("face quality vector must have arity " +
                                    std::to_string(kFaceQualityArity));
    std::vector<double> values;
    values.reserve(static_cast<size_t>(qv.arity()));
    for (int i = 0; i < qv.arity(); ++i) {
        if (!qv.has(i))
            throw std::invalid_argument("face quality measure " + std::to_string(i + 1) +
                                        " is missing");
        values.push_back(qv.value(i));
    }
    return project(values, sel, "face");
}

Eigen::VectorXd select_fp_features(const FpQualityFeatures& f, const FeatureSelection& sel) {
    return project({f.values.begin(), f.values.end()}, sel, "fingerprint");
}

DeviceClass QdaModel::same_device_class() const {
    return modality == Modality::Face ? DeviceClass::FaceHighRes
                                      : DeviceClass::FingerOptical;
}

DeviceClass QdaModel::cross_device_class() const {
    return modality == Modality::Face ? DeviceClass::FaceCross : DeviceClass::FingerCross;
}

namespace {

QdaModel::ClassModel fit_class(const Eigen::MatrixXd& samples, double prior, double epsilon,
                               const char* name) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < d + 1)
        throw std::invalid_argument(std::string(name) + " class has " + std::to_string(n) +
                                    " samples, need at least " + std::to_string(d + 1));

    QdaModel::ClassModel cm;
    cm.prior = prior;
    cm.mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - cm.mean.transpose();
    cm.covariance = centered.transpose() * centered / static_cast<double>(n - 1);

    if (cm.covariance.trace() <= 0.0)
        throw std::invalid_argument(std::string(name) +
                                    " class features have zero variance");
    const double eps = epsilon >= 0.0
                           ? epsilon
                           : 1e-6 * cm.covariance.trace() / static_cast<double>(d);
    cm.covariance.diagonal().array() += eps;

    const Eigen::LLT<Eigen::MatrixXd> llt(cm.covariance);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(std::string(name) +
                                 " class covariance is not positive definite");
    cm.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
    cm.log_det_covariance =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return cm;
}

}  // namespace

QdaModel qda_fit(Modality modality, const Eigen::MatrixXd& same_device_samples,
                 const Eigen::MatrixXd& cross_device_samples, double epsilon) {
    if (same_device_samples.rows() == 0 || cross_device_samples.rows() == 0)
        throw std::invalid_argument("qda_fit requires samples for both device classes");
    if (same_device_samples.cols() != cross_device_samples.cols())
        throw std::invalid_argument("qda_fit: class dimension mismatch");

    const double n_same = static_cast<double>(same_device_samples.rows());
    const double n_cross = static_cast<double>(cross_device_samples.rows());

    QdaModel model;
    model.modality = modality;
    model.same_device =
        fit_class(same_device_samples, n_same / (n_same + n_cross), epsilon, "same-device");
    model.cross_device = fit_class(cross_device_samples, n_cross / (n_same + n_cross),
                                   epsilon, "cross-device");
    return model;
}

namespace {

double discriminant(const QdaModel::ClassModel& cm, const Eigen::VectorXd& f) {
    const Eigen::VectorXd centered = f - cm.mean;
    const double mahalanobis = centered.dot(cm.precision * centered);
    return -0.5 * cm.log_det_covariance - 0.5 * mahalanobis + std::log(cm.prior);
}

}  // namespace

QdaDecision qda_classify(const QdaModel& model, const Eigen::VectorXd& features) {
    if (features.size() != model.dim())
        throw std::invalid_argument("qda_classify: expected " + std::to_string(model.dim()) +
                                    " features, got " + std::to_string(features.size()));
    QdaDecision decision;
    decision.g_same = discriminant(model.same_device, features);
    decision.g_cross = discriminant(model.cross_device, features);
    decision.device = decision.g_cross > decision.g_same ? model.cross_device_class()
                                                         : model.same_device_class();
    return decision;
}

}  // namespace qfuse
