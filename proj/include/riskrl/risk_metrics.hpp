#pragma once

#include <span>
#include <vector>

namespace riskrl {

/// Parameters of the smoothed quantile loss and of the operator step.
///   kappa   smoothing width, in (0, 1]
///   epsilon level clip, levels are clamped into [epsilon, 1 - epsilon]
///   eta     operator step size, in (0, kappa]
struct SoftLossParams {
    double kappa = 1.0;
    double epsilon = 0.05;
    double eta = 1.0;

    /// Throws std::invalid_argument when any bound is violated.
    void validate() const;
};

enum class LossKind { hard, soft };

// Empirical risk functionals over a sample of returns. Quantiles use the
// ceil(alpha * N)-th order statistic; ties are kept.

double empirical_var(std::span<const double> returns, double alpha);
double empirical_cvar(std::span<const double> returns, double alpha);

/// y - (1/alpha) * mean((y - x)^+)
double cvar_variational(std::span<const double> returns, double y, double alpha);

struct VariationalMax {
    double y = 0.0;
    double value = 0.0;
    double grid_step = 0.0;
};

/// Maximizes cvar_variational over `points` evenly spaced y values spanning
/// [min, max] of the sample.
VariationalMax maximize_cvar_variational(std::span<const double> returns, double alpha,
                                         std::size_t points = 1001);

/// Pinball loss (alpha - 1{delta < 0}) * delta, with delta = target - prediction.
double quantile_loss(double delta, double alpha);

/// Subgradient of the pinball loss w.r.t. delta: alpha - 1{delta < 0}.
double hard_loss_grad(double delta, double alpha);

/// Derivative of the smoothed pinball loss with the level clipped to
/// [epsilon, 1 - epsilon]. Piecewise: quadratic core of half-width kappa and
/// linear tails.
double soft_loss_grad(double delta, double alpha, const SoftLossParams& params);

/// The smoothed pinball loss itself (antiderivative of soft_loss_grad, zero at 0).
double soft_quantile_loss(double delta, double alpha, const SoftLossParams& params);

/// Dispatch on the loss kind.
double loss_grad(LossKind kind, double delta, double alpha, const SoftLossParams& params);

} // namespace riskrl
