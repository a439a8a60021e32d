#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "qfuse/types.hpp"

namespace qfuse {

/// Eight statistics of the fingerprint template/query qualities of one
/// access, used to tell same-device from cross-device acquisition:
///   1. count of fingers with template quality above query quality
///   2. max query quality          3. max |template - query|
///   4. min query quality          5. min |template - query|
///   6. mean query quality         7. mean |template - query|
///   8. max signed (template - query)
struct FpQualityFeatures {
    std::array<double, 8> values{};
};

FpQualityFeatures derive_fp_features(const std::array<double, 3>& q_templates,
                                     const std::array<double, 3>& q_queries);

/// 1-based index subset into either the 14 face quality measures or the
/// 8 derived fingerprint features.
struct FeatureSelection {
    std::vector<int> indices;
};

/// Projection of a fully-present face quality vector onto the selection.
Eigen::VectorXd select_face_features(const QualityVector& qv, const FeatureSelection& sel);

Eigen::VectorXd select_fp_features(const FpQualityFeatures& f, const FeatureSelection& sel);

/// Two-class quadratic discriminant: one multivariate normal per device
/// condition (same-device vs cross-device query).
struct QdaModel {
    struct ClassModel {
        Eigen::VectorXd mean;
        Eigen::MatrixXd covariance;        // regularized, positive definite
        double prior = 0.5;
        Eigen::MatrixXd precision;         // cached inverse
        double log_det_covariance = 0.0;   // cached log determinant
    };

    Modality modality = Modality::Face;
    ClassModel same_device;
    ClassModel cross_device;

    int dim() const { return static_cast<int>(same_device.mean.size()); }
    DeviceClass same_device_class() const;
    DeviceClass cross_device_class() const;
};

/// Fits class means, unbiased covariances (plus epsilon * I) and empirical
/// priors. Rows are samples. epsilon < 0 selects the default
/// 1e-6 * trace(cov)/dim. Throws when a class has fewer than dim+1 samples.
QdaModel qda_fit(Modality modality, const Eigen::MatrixXd& same_device_samples,
                 const Eigen::MatrixXd& cross_device_samples, double epsilon = -1.0);

struct QdaDecision {
    DeviceClass device;
    double g_same = 0.0;   // log-discriminant of the same-device class
    double g_cross = 0.0;  // log-discriminant of the cross-device class
};

/// g_k(f) = -0.5 log|Sigma_k| - 0.5 (f-mu_k)' Sigma_k^{-1} (f-mu_k) + log pi_k;
/// argmax wins, exact ties resolve to the same-device class.
QdaDecision qda_classify(const QdaModel& model, const Eigen::VectorXd& features);

}  // namespace qfuse
