#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

namespace qfuse {

/// FAR/FRR sampled at every distinct pooled score plus -inf/+inf sentinels.
/// Conventions mirror the strict-accept decision rule:
///   FAR(t) = fraction of impostor scores >= t (falsely accepted at t),
///   FRR(t) = fraction of genuine scores  <  t (falsely rejected at t).
/// FAR is nonincreasing and FRR nondecreasing along ascending thresholds.
struct OperatingCurve {
    std::vector<double> thresholds;
    std::vector<double> far;
    std::vector<double> frr;
};

OperatingCurve far_frr_curve(std::span<const double> genuine,
                             std::span<const double> impostor);

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

/// Equal error rate: the FAR/FRR crossing, linearly interpolated between the
/// two adjacent curve points that bracket it. When the crossing falls on a
/// step, the interpolated value lies between the bracketing step values.
EerResult eer(std::span<const double> genuine, std::span<const double> impostor);

/// Half total error rate (FAR+FRR)/2 at a fixed, pre-committed threshold.
double hter(std::span<const double> genuine, std::span<const double> impostor,
            double threshold);

/// Probit-warped (FAR, FRR) pairs for DET plotting; rates are clipped into
/// [1e-6, 1-1e-6] before warping.
std::vector<std::pair<double, double>> det_points(std::span<const double> far,
                                                  std::span<const double> frr);

struct EvalReport {
    OperatingCurve curve;
    double eer = 0.0;
    double eer_threshold = 0.0;
    std::map<double, double> hter_at;
    std::vector<std::pair<double, double>> det;
};

EvalReport evaluate(std::span<const double> genuine, std::span<const double> impostor,
                    std::span<const double> hter_thresholds);

}  // namespace qfuse
