#include "riskrl/risk_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace riskrl {

namespace {

void check_sample(std::span<const double> returns, double alpha) {
    if (returns.empty()) throw std::invalid_argument("empty return sample");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("invalid risk level");
}

std::size_t tail_count(std::size_t n, double alpha) {
    // ceil(alpha * n) with a small guard so 0.2 * 10 does not become 3.
    const double scaled = alpha * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<double> sorted_copy(std::span<const double> returns) {
    std::vector<double> v(returns.begin(), returns.end());
    std::stable_sort(v.begin(), v.end());
    return v;
}

} // namespace

void SoftLossParams::validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw std::invalid_argument("soft loss: epsilon must lie in (0, 0.5)");
    if (!(kappa > 0.0 && kappa <= 1.0))
        throw std::invalid_argument("soft loss: kappa must lie in (0, 1]");
    if (!(eta > 0.0 && eta <= kappa))
        throw std::invalid_argument("soft loss: eta must lie in (0, kappa]");
}

double empirical_var(std::span<const double> returns, double alpha) {
    check_sample(returns, alpha);
    const auto k = tail_count(returns.size(), alpha);
    std::vector<double> v(returns.begin(), returns.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
    return v[k - 1];
}

double empirical_cvar(std::span<const double> returns, double alpha) {
    check_sample(returns, alpha);
    const auto k = tail_count(returns.size(), alpha);
    const auto v = sorted_copy(returns);
    const double sum = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
    return sum / static_cast<double>(k);
}

double cvar_variational(std::span<const double> returns, double y, double alpha) {
    check_sample(returns, alpha);
    double shortfall = 0.0;
    for (double x : returns) shortfall += std::max(y - x, 0.0);
    return y - shortfall / (alpha * static_cast<double>(returns.size()));
}

VariationalMax maximize_cvar_variational(std::span<const double> returns, double alpha,
                                         std::size_t points) {
    check_sample(returns, alpha);
    if (points < 2) throw std::invalid_argument("variational grid needs at least 2 points");
    const auto [lo_it, hi_it] = std::minmax_element(returns.begin(), returns.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    VariationalMax best;
    best.grid_step = (hi - lo) / static_cast<double>(points - 1);
    best.value = -INFINITY;
    for (std::size_t i = 0; i < points; ++i) {
        const double y = (i + 1 == points) ? hi : lo + best.grid_step * static_cast<double>(i);
        const double f = cvar_variational(returns, y, alpha);
        if (f > best.value) {
            best.value = f;
            best.y = y;
        }
    }
    return best;
}

double quantile_loss(double delta, double alpha) {
    return (alpha - (delta < 0.0 ? 1.0 : 0.0)) * delta;
}

double hard_loss_grad(double delta, double alpha) { return alpha - (delta < 0.0 ? 1.0 : 0.0); }

double soft_loss_grad(double delta, double alpha, const SoftLossParams& p) {
    const double a = std::clamp(alpha, p.epsilon, 1.0 - p.epsilon);
    const double k = p.kappa;
    if (delta < -k) return (1.0 - a) * (k * delta + k * k - 1.0);
    if (delta < 0.0) return (1.0 - a) / k * delta;
    if (delta < k) return a / k * delta;
    return a * (k * delta - k * k + 1.0);
}

double soft_quantile_loss(double delta, double alpha, const SoftLossParams& p) {
    const double a = std::clamp(alpha, p.epsilon, 1.0 - p.epsilon);
    const double k = p.kappa;
    if (delta < -k) return (1.0 - a) * k / 2.0 * ((delta + k) * (delta + k) - 2.0 * delta / k - 1.0);
    if (delta < 0.0) return (1.0 - a) * delta * delta / (2.0 * k);
    if (delta < k) return a * delta * delta / (2.0 * k);
    return a * k / 2.0 * ((delta - k) * (delta - k) + 2.0 * delta / k - 1.0);
}

double loss_grad(LossKind kind, double delta, double alpha, const SoftLossParams& params) {
    return kind == LossKind::hard ? hard_loss_grad(delta, alpha)
                                  : soft_loss_grad(delta, alpha, params);
}

} // namespace riskrl
