#pragma once

#include <Eigen/Dense>
#include <span>
#include <stdexcept>

namespace qfuse {

/// Affine map from a score vector to a log-likelihood-ratio. The prior
/// log-odds used during training is folded into the loss, not the map, so
/// apply() output is directly an LLR.
struct Calibrator {
    Eigen::VectorXd weights;      // one per input score dimension
    double intercept = 0.0;
    double prior_log_odds = 0.0;  // logit of the training prior, for the record

    int dim() const { return static_cast<int>(weights.size()); }
};

struct TrainingConfig {
    double prior = 0.5;             // P(target), strictly inside (0,1)
    double convergence_tol = 1e-8;  // gradient infinity-norm
    int max_iters = 200;
};

/// Thrown when the trainer runs out of iterations; carries the last iterate.
struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, Calibrator last, double gradient_norm)
        : std::runtime_error(msg),
          last_iterate(std::move(last)),
          gradient_infinity_norm(gradient_norm) {}

    Calibrator last_iterate;
    double gradient_infinity_norm;
};

/// Prior-weighted logistic cross-entropy of the calibrated scores. Rows of
/// `targets` / `nontargets` are score vectors; both classes must be nonempty.
double clr_objective(const Calibrator& cal, const Eigen::MatrixXd& targets,
                     const Eigen::MatrixXd& nontargets, double prior);

/// Analytic gradient of clr_objective over (intercept, weights...).
Eigen::VectorXd clr_gradient(const Calibrator& cal, const Eigen::MatrixXd& targets,
                             const Eigen::MatrixXd& nontargets, double prior);

/// Newton minimization with step halving; deterministic, no randomness.
/// Throws ConvergenceError past max_iters and std::invalid_argument on an
/// empty class or a constant feature column.
Calibrator train_calibrator(const Eigen::MatrixXd& targets,
                            const Eigen::MatrixXd& nontargets,
                            const TrainingConfig& cfg = {});

/// LLR of one score vector: intercept + weights . x.
double apply_calibration(const Calibrator& cal, std::span<const double> x);

}  // namespace qfuse
