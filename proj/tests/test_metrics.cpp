#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "qfuse/calibration.hpp"
#include "qfuse/metrics.hpp"
#include "qfuse/normalization.hpp"
#include "qfuse/probit.hpp"
#include "qfuse/rng.hpp"

using namespace qfuse;

TEST_CASE("far/frr counting conventions") {
    const std::vector<double> genuine{0.9, 0.8};
    const std::vector<double> impostor{0.2, 0.7};
    const OperatingCurve c = far_frr_curve(genuine, impostor);

    // Separating threshold: no impostor at or above it, no genuine below it.
    CHECK(oracle::count_far(impostor, 0.75) == 0.0);
    CHECK(oracle::count_frr(genuine, 0.75) == 0.0);
    CHECK(hter(genuine, impostor, 0.75) == 0.0);

    // Sentinels: below all scores FAR=1/FRR=0, above all FAR=0/FRR=1.
    CHECK(c.far.front() == 1.0);
    CHECK(c.frr.front() == 0.0);
    CHECK(c.far.back() == 0.0);
    CHECK(c.frr.back() == 1.0);

    // Curve values match direct counting at every finite threshold.
    for (size_t i = 0; i < c.thresholds.size(); ++i) {
        if (!std::isfinite(c.thresholds[i])) continue;
        CHECK(c.far[i] == oracle::count_far(impostor, c.thresholds[i]));
        CHECK(c.frr[i] == oracle::count_frr(genuine, c.thresholds[i]));
    }
}

TEST_CASE("far is nonincreasing and frr nondecreasing") {
    CounterRng rng(11, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> genuine, impostor;
        const int n = 2 + static_cast<int>(rng.uniform() * 30);
        for (int i = 0; i < n; ++i) {
            genuine.push_back(rng.normal(1.0, 1.0));
            impostor.push_back(rng.normal(-1.0, 1.0));
        }
        const OperatingCurve c = far_frr_curve(genuine, impostor);
        for (size_t i = 1; i < c.thresholds.size(); ++i) {
            CHECK(c.far[i] <= c.far[i - 1]);
            CHECK(c.frr[i] >= c.frr[i - 1]);
        }
    }
}

TEST_CASE("eer of perfectly separable scores is zero") {
    const std::vector<double> genuine{0.8, 0.9, 1.0};
    const std::vector<double> impostor{0.1, 0.2, 0.3};
    CHECK(eer(genuine, impostor).eer == doctest::Approx(0.0));
}

TEST_CASE("eer of fully inverted scores is one") {
    const std::vector<double> genuine{0.6};
    const std::vector<double> impostor{0.7};
    CHECK(eer(genuine, impostor).eer == doctest::Approx(1.0));
}

TEST_CASE("eer on gaussian scores matches the analytic value") {
    CounterRng rng(12, 2);
    std::vector<double> genuine(100000), impostor(100000);
    for (auto& s : genuine) s = rng.normal(1.0, 1.0);
    for (auto& s : impostor) s = rng.normal(-1.0, 1.0);
    const double expected = oracle::reference_normal_cdf(-1.0);  // 15.87%
    CHECK(std::abs(eer(genuine, impostor).eer - expected) < 0.005);
}

TEST_CASE("eer stays within the exhaustive sweep bounds") {
    CounterRng rng(13, 3);
    for (int trial = 0; trial < 500; ++trial) {
        const int ng = 1 + static_cast<int>(rng.uniform() * 10);
        const int ni = 1 + static_cast<int>(rng.uniform() * 10);
        std::vector<double> genuine(static_cast<size_t>(ng)),
            impostor(static_cast<size_t>(ni));
        for (auto& s : genuine) s = rng.normal(0.5, 1.0);
        for (auto& s : impostor) s = rng.normal(-0.5, 1.0);
        // Duplicate scores across classes exercise the step cases.
        if (trial % 3 == 0 && ni > 1) impostor[0] = genuine[0];

        const auto bounds = oracle::eer_bounds(genuine, impostor);
        const double e = eer(genuine, impostor).eer;
        CHECK(e >= bounds.lo - 1e-9);
        CHECK(e <= bounds.hi + 1e-9);
    }
}

TEST_CASE("eer respects the sweep bounds for every label pattern up to ten scores") {
    // Exhaustive over rank patterns: scores are the positions 1..n and every
    // assignment of positions to the two classes is enumerated, including a
    // variant with a cross-class tie.
    for (int n = 2; n <= 10; ++n) {
        for (int mask = 1; mask < (1 << n) - 1; ++mask) {
            std::vector<double> genuine, impostor;
            for (int i = 0; i < n; ++i)
                ((mask >> i) & 1 ? genuine : impostor).push_back(static_cast<double>(i));
            {
                const auto bounds = oracle::eer_bounds(genuine, impostor);
                const double e = eer(genuine, impostor).eer;
                REQUIRE(e >= bounds.lo - 1e-12);
                REQUIRE(e <= bounds.hi + 1e-12);
            }
            // Duplicate one impostor score onto a genuine one.
            if (!genuine.empty() && !impostor.empty()) {
                impostor[0] = genuine[0];
                const auto bounds = oracle::eer_bounds(genuine, impostor);
                const double e = eer(genuine, impostor).eer;
                REQUIRE(e >= bounds.lo - 1e-12);
                REQUIRE(e <= bounds.hi + 1e-12);
            }
        }
    }
}

TEST_CASE("eer matches the sweep oracle exactly when the crossing is clean") {
    // FAR and FRR meet exactly at threshold 0.5: 2/4 impostors >= 0.5 and
    // 2/4 genuine < 0.5.
    const std::vector<double> genuine{0.1, 0.2, 0.6, 0.7};
    const std::vector<double> impostor{0.3, 0.4, 0.5, 0.8};
    const auto bounds = oracle::eer_bounds(genuine, impostor);
    const EerResult e = eer(genuine, impostor);
    CHECK(bounds.lo == doctest::Approx(bounds.hi));
    CHECK(e.eer == doctest::Approx(bounds.hi).epsilon(1e-12));
}

TEST_CASE("hter averages the two error rates at a fixed threshold") {
    // 1 of 10 impostors at or above 9.5, 2 of 10 genuine below it.
    std::vector<double> impostor, genuine;
    for (int i = 1; i <= 10; ++i) impostor.push_back(static_cast<double>(i));
    genuine = {1.0, 2.0, 10.5, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0};
    CHECK(hter(genuine, impostor, 9.5) == doctest::Approx(0.15));
}

TEST_CASE("hter at minus infinity is one half") {
    const std::vector<double> genuine{1.0, 2.0};
    const std::vector<double> impostor{0.0};
    CHECK(hter(genuine, impostor, -std::numeric_limits<double>::infinity()) ==
          doctest::Approx(0.5));
}

TEST_CASE("hter approximates eer on symmetric gaussian scores at zero") {
    CounterRng rng(14, 4);
    std::vector<double> genuine(50000), impostor(50000);
    for (auto& s : genuine) s = rng.normal(1.0, 1.0);
    for (auto& s : impostor) s = rng.normal(-1.0, 1.0);
    const double h = hter(genuine, impostor, 0.0);
    const double e = eer(genuine, impostor).eer;
    CHECK(std::abs(h - e) < 0.01);
}

TEST_CASE("det points warp rates through the probit") {
    const std::vector<double> far{0.5, 0.1587};
    const std::vector<double> frr{0.5, 0.1587};
    const auto pts = det_points(far, frr);
    CHECK(pts[0].first == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pts[0].second == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pts[1].first == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(pts[1].second == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("det x-coordinate decreases with far") {
    const std::vector<double> far{0.9, 0.5, 0.1, 0.01, 0.0};
    const std::vector<double> frr{0.1, 0.1, 0.1, 0.1, 0.1};
    const auto pts = det_points(far, frr);
    for (size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].first < pts[i - 1].first);
}

TEST_CASE("probit round-trips through the normal cdf to 1e-9") {
    const std::vector<double> grid{1e-6, 1e-5, 1e-3, 0.02425, 0.1,  0.25, 0.5,
                                   0.75, 0.9,  0.97, 0.999,   1.0 - 1e-5, 1.0 - 1e-6};
    for (double p : grid) {
        const double x = probit(p);
        CHECK(std::abs(oracle::reference_normal_cdf(x) - p) < 1e-9);
    }
    CHECK_THROWS_AS(probit(0.0), std::domain_error);
    CHECK_THROWS_AS(probit(1.0), std::domain_error);
}

TEST_CASE("eer is invariant under strictly monotone transforms") {
    CounterRng rng(15, 5);
    Calibrator cal;
    cal.weights = Eigen::VectorXd::Constant(1, 2.0);
    cal.intercept = -0.3;
    const TanhNormalizer norm{0.2, 1.3};

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> genuine, impostor;
        const int n = 3 + static_cast<int>(rng.uniform() * 40);
        for (int i = 0; i < n; ++i) {
            genuine.push_back(rng.normal(0.8, 1.0));
            impostor.push_back(rng.normal(-0.8, 1.0));
        }
        const double base = eer(genuine, impostor).eer;

        std::vector<double> g2, i2, g3, i3;
        for (double s : genuine) {
            const double x[] = {s};
            g2.push_back(tanh_apply(norm, s));
            g3.push_back(apply_calibration(cal, x));
        }
        for (double s : impostor) {
            const double x[] = {s};
            i2.push_back(tanh_apply(norm, s));
            i3.push_back(apply_calibration(cal, x));
        }
        CHECK(eer(g2, i2).eer == base);
        CHECK(eer(g3, i3).eer == base);
    }
}

TEST_CASE("empty class lists are rejected") {
    const std::vector<double> some{1.0};
    CHECK_THROWS_AS(far_frr_curve({}, some), std::invalid_argument);
    CHECK_THROWS_AS(eer(some, {}), std::invalid_argument);
    CHECK_THROWS_AS(hter({}, {}, 0.0), std::invalid_argument);
}

TEST_CASE("evaluate bundles the full report") {
    const std::vector<double> genuine{0.8, 0.9, 1.1};
    const std::vector<double> impostor{-0.5, 0.1, 0.3};
    const double thresholds[] = {0.0};
    const EvalReport r = evaluate(genuine, impostor, thresholds);
    CHECK(r.eer == doctest::Approx(0.0));
    // Two of three impostors sit at or above zero, no genuine below it.
    CHECK(r.hter_at.at(0.0) == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0));
    CHECK(r.curve.thresholds.size() == r.det.size());
}
