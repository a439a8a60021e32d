#include "qfuse/calibration.hpp"

#include <cmath>

namespace qfuse {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(t)) without overflow.
double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

void check_inputs(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& nontargets,
                  double prior) {
    if (targets.rows() == 0) throw std::invalid_argument("no target score vectors");
    if (nontargets.rows() == 0) throw std::invalid_argument("no nontarget score vectors");
    if (targets.cols() != nontargets.cols())
        throw std::invalid_argument("target/nontarget dimension mismatch");
    if (!(prior > 0.0 && prior < 1.0))
        throw std::invalid_argument("prior must lie strictly inside (0,1)");
}

Eigen::VectorXd calibrated(const Calibrator& cal, const Eigen::MatrixXd& x) {
    return (x * cal.weights).array() + cal.intercept;
}

}  // namespace

double clr_objective(const Calibrator& cal, const Eigen::MatrixXd& targets,
                     const Eigen::MatrixXd& nontargets, double prior) {
    check_inputs(targets, nontargets, prior);
    const double offset = logit(prior);

    const Eigen::VectorXd ft = calibrated(cal, targets);
    const Eigen::VectorXd fn = calibrated(cal, nontargets);

    double target_sum = 0.0;
    for (Eigen::Index j = 0; j < ft.size(); ++j) target_sum += softplus(-(ft[j] + offset));
    double nontarget_sum = 0.0;
    for (Eigen::Index j = 0; j < fn.size(); ++j) nontarget_sum += softplus(fn[j] + offset);

    return prior * target_sum / static_cast<double>(ft.size()) +
           (1.0 - prior) * nontarget_sum / static_cast<double>(fn.size());
}

Eigen::VectorXd clr_gradient(const Calibrator& cal, const Eigen::MatrixXd& targets,
                             const Eigen::MatrixXd& nontargets, double prior) {
    check_inputs(targets, nontargets, prior);
    const double offset = logit(prior);
    const Eigen::Index m = targets.cols();

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m + 1);  // [intercept, weights...]

    const double wt = prior / static_cast<double>(targets.rows());
    const Eigen::VectorXd ft = calibrated(cal, targets);
    for (Eigen::Index j = 0; j < ft.size(); ++j) {
        const double r = wt * (sigmoid(ft[j] + offset) - 1.0);
        grad[0] += r;
        grad.tail(m) += r * targets.row(j).transpose();
    }

    const double wn = (1.0 - prior) / static_cast<double>(nontargets.rows());
    const Eigen::VectorXd fn = calibrated(cal, nontargets);
    for (Eigen::Index j = 0; j < fn.size(); ++j) {
        const double r = wn * sigmoid(fn[j] + offset);
        grad[0] += r;
        grad.tail(m) += r * nontargets.row(j).transpose();
    }
    return grad;
}

namespace {

Eigen::MatrixXd clr_hessian(const Calibrator& cal, const Eigen::MatrixXd& targets,
                            const Eigen::MatrixXd& nontargets, double prior) {
    const double offset = logit(prior);
    const Eigen::Index m = targets.cols();
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m + 1);

    auto accumulate = [&](const Eigen::MatrixXd& x, double class_weight) {
        const Eigen::VectorXd f = calibrated(cal, x);
        const double w = class_weight / static_cast<double>(x.rows());
        Eigen::VectorXd row(m + 1);
        for (Eigen::Index j = 0; j < f.size(); ++j) {
            const double s = sigmoid(f[j] + offset);
            const double c = w * s * (1.0 - s);
            row[0] = 1.0;
            row.tail(m) = x.row(j).transpose();
            hess.selfadjointView<Eigen::Lower>().rankUpdate(row, c);
        }
    };
    accumulate(targets, prior);
    accumulate(nontargets, 1.0 - prior);
    return hess.selfadjointView<Eigen::Lower>();
}

}  // namespace

Calibrator train_calibrator(const Eigen::MatrixXd& targets,
                            const Eigen::MatrixXd& nontargets,
                            const TrainingConfig& cfg) {
    check_inputs(targets, nontargets, cfg.prior);
    const Eigen::Index m = targets.cols();
    if (m < 1) throw std::invalid_argument("score vectors need at least one dimension");

    // A constant feature column is collinear with the intercept and leaves
    // the minimizer undefined.
    for (Eigen::Index k = 0; k < m; ++k) {
        const double lo = std::min(targets.col(k).minCoeff(), nontargets.col(k).minCoeff());
        const double hi = std::max(targets.col(k).maxCoeff(), nontargets.col(k).maxCoeff());
        if (lo == hi)
            throw std::invalid_argument("feature dimension " + std::to_string(k + 1) +
                                        " is constant across the training set");
    }

    Calibrator cal;
    cal.weights = Eigen::VectorXd::Zero(m);
    cal.intercept = 0.0;
    cal.prior_log_odds = std::log(cfg.prior / (1.0 - cfg.prior));

    double objective = clr_objective(cal, targets, nontargets, cfg.prior);
    Eigen::VectorXd grad = clr_gradient(cal, targets, nontargets, cfg.prior);

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() <= cfg.convergence_tol) return cal;

        Eigen::MatrixXd hess = clr_hessian(cal, targets, nontargets, cfg.prior);
        // Tiny relative ridge keeps the solve well posed once the classes
        // separate and the curvature collapses.
        const double ridge = 1e-12 * std::max(1.0, hess.trace() / static_cast<double>(m + 1));
        hess.diagonal().array() += ridge;

        Eigen::VectorXd step = hess.ldlt().solve(-grad);
        const double slope = grad.dot(step);
        if (!step.allFinite() || slope >= 0.0) step = -grad;  // fall back on descent

        // Backtracking line search (Armijo, halving).
        double t = 1.0;
        Calibrator trial = cal;
        for (int half = 0; half < 60; ++half) {
            trial.intercept = cal.intercept + t * step[0];
            trial.weights = cal.weights + t * step.tail(m);
            const double trial_obj = clr_objective(trial, targets, nontargets, cfg.prior);
            if (trial_obj <= objective + 1e-4 * t * grad.dot(step)) break;
            t *= 0.5;
        }
        cal.intercept = trial.intercept;
        cal.weights = trial.weights;
        objective = clr_objective(cal, targets, nontargets, cfg.prior);
        grad = clr_gradient(cal, targets, nontargets, cfg.prior);
    }

    const double gnorm = grad.lpNorm<Eigen::Infinity>();
    if (gnorm <= cfg.convergence_tol) return cal;
    throw ConvergenceError("calibrator training did not converge in " +
                               std::to_string(cfg.max_iters) +
                               " iterations (gradient inf-norm " + std::to_string(gnorm) + ")",
                           cal, gnorm);
}

double apply_calibration(const Calibrator& cal, std::span<const double> x) {
    if (static_cast<int>(x.size()) != cal.dim())
        throw std::invalid_argument("apply_calibration: expected " +
                                    std::to_string(cal.dim()) + " scores, got " +
                                    std::to_string(x.size()));
    double llr = cal.intercept;
    for (size_t i = 0; i < x.size(); ++i) llr += cal.weights[static_cast<Eigen::Index>(i)] * x[i];
    return llr;
}

}  // namespace qfuse
