#include "qfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qfuse/probit.hpp"

namespace qfuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty()) throw std::invalid_argument("no genuine scores");
    if (impostor.empty()) throw std::invalid_argument("no impostor scores");
}

// FAR/FRR at one threshold given ascending-sorted score pools.
double far_at(const std::vector<double>& impostor_sorted, double t) {
    const auto it = std::lower_bound(impostor_sorted.begin(), impostor_sorted.end(), t);
    return static_cast<double>(impostor_sorted.end() - it) /
           static_cast<double>(impostor_sorted.size());
}

double frr_at(const std::vector<double>& genuine_sorted, double t) {
    const auto it = std::lower_bound(genuine_sorted.begin(), genuine_sorted.end(), t);
    return static_cast<double>(it - genuine_sorted.begin()) /
           static_cast<double>(genuine_sorted.size());
}

}  // namespace

OperatingCurve far_frr_curve(std::span<const double> genuine,
                             std::span<const double> impostor) {
    require_nonempty(genuine, impostor);

    std::vector<double> gen(genuine.begin(), genuine.end());
    std::vector<double> imp(impostor.begin(), impostor.end());
    std::sort(gen.begin(), gen.end());
    std::sort(imp.begin(), imp.end());

    OperatingCurve curve;
    curve.thresholds.reserve(gen.size() + imp.size() + 2);
    curve.thresholds.push_back(-kInf);
    std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(),
               std::back_inserter(curve.thresholds));
    curve.thresholds.erase(std::unique(curve.thresholds.begin(), curve.thresholds.end()),
                           curve.thresholds.end());
    curve.thresholds.push_back(kInf);

    curve.far.reserve(curve.thresholds.size());
    curve.frr.reserve(curve.thresholds.size());
    for (double t : curve.thresholds) {
        if (t == -kInf) {
            curve.far.push_back(1.0);
            curve.frr.push_back(0.0);
        } else if (t == kInf) {
            curve.far.push_back(0.0);
            curve.frr.push_back(1.0);
        } else {
            curve.far.push_back(far_at(imp, t));
            curve.frr.push_back(frr_at(gen, t));
        }
    }
    return curve;
}

EerResult eer(std::span<const double> genuine, std::span<const double> impostor) {
    const OperatingCurve c = far_frr_curve(genuine, impostor);

    // far - frr starts at +1, ends at -1 and never increases; find the first
    // index where it drops to zero or below.
    size_t i = 1;
    while (i < c.thresholds.size() && c.far[i] - c.frr[i] > 0.0) ++i;

    const double d1 = c.far[i] - c.frr[i];
    if (d1 == 0.0) {
        double t = c.thresholds[i];
        if (!std::isfinite(t)) t = c.thresholds[i - 1];
        return {c.far[i], t};
    }

    const double d0 = c.far[i - 1] - c.frr[i - 1];
    const double alpha = d0 / (d0 - d1);
    const double value = c.far[i - 1] + alpha * (c.far[i] - c.far[i - 1]);

    double t0 = c.thresholds[i - 1], t1 = c.thresholds[i];
    double threshold;
    if (std::isfinite(t0) && std::isfinite(t1))
        threshold = t0 + alpha * (t1 - t0);
    else
        threshold = std::isfinite(t0) ? t0 : t1;  // degenerate bracket at a sentinel
    return {value, threshold};
}

double hter(std::span<const double> genuine, std::span<const double> impostor,
            double threshold) {
    require_nonempty(genuine, impostor);
    std::vector<double> gen(genuine.begin(), genuine.end());
    std::vector<double> imp(impostor.begin(), impostor.end());
    std::sort(gen.begin(), gen.end());
    std::sort(imp.begin(), imp.end());
    if (threshold == -kInf) return 0.5;
    if (threshold == kInf) return 0.5;
    return 0.5 * (far_at(imp, threshold) + frr_at(gen, threshold));
}

std::vector<std::pair<double, double>> det_points(std::span<const double> far,
                                                  std::span<const double> frr) {
    if (far.size() != frr.size())
        throw std::invalid_argument("det_points: rate lists differ in length");
    constexpr double lo = 1e-6, hi = 1.0 - 1e-6;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(far.size());
    for (size_t i = 0; i < far.size(); ++i) {
        const double x = std::clamp(far[i], lo, hi);
        const double y = std::clamp(frr[i], lo, hi);
        pts.emplace_back(probit(x), probit(y));
    }
    return pts;
}

EvalReport evaluate(std::span<const double> genuine, std::span<const double> impostor,
                    std::span<const double> hter_thresholds) {
    EvalReport report;
    report.curve = far_frr_curve(genuine, impostor);
    const EerResult e = eer(genuine, impostor);
    report.eer = e.eer;
    report.eer_threshold = e.threshold;
    for (double t : hter_thresholds)
        report.hter_at[t] = hter(genuine, impostor, t);
    report.det = det_points(report.curve.far, report.curve.frr);
    return report;
}

}  // namespace qfuse
