#pragma once

// Mean-variance frontier through the Lagrange reduction to the quadratic-loss
// problem: Var X(T) subject to E X(T) = a equals
//   max_lambda [ min_u E(X(T) - (a - lambda))^2 - lambda^2 ].

#include <cmath>
#include <vector>

#include "rsmp/simulate.hpp"

namespace rsmp {

/// min_u E(X(T) - d)^2 = A + B d + C d^2 at (0, x0, i0).
/// psi is linear and chi quadratic in d, so one solve at d = 1 gives all three.
struct DualCoefficients {
    double a0 = 0.0;  // -phi(0) x0^2 / 2
    double b1 = 0.0;  // -psi_1(0) x0
    double c2 = 0.0;  // -chi_1(0)
};

inline DualCoefficients dual_coefficients(const MarketModel& model, const GeneratorMatrix& g, std::size_t steps_per_cell = kDefaultStepsPerCell) {
    const PhiPsiChiSolution unit = solve_phi_psi_chi(model, g, 1.0, steps_per_cell);
    const int i0 = model.initial_state();
    const double x0 = model.initial_wealth();
    return {-0.5 * unit.phi(0.0, i0) * x0 * x0, -unit.psi(0.0, i0) * x0, -unit.chi(0.0, i0)};
}

/// E(X^(T) - d)^2 under the optimal control for target d; no simulation.
inline double inner_value(const MarketModel& model, const GeneratorMatrix& g, double target,
                          std::size_t steps_per_cell = kDefaultStepsPerCell) {
    const PhiPsiChiSolution sol = solve_phi_psi_chi(model, g, target, steps_per_cell);
    return -value_function(sol, 0.0, model.initial_wealth(), model.initial_state());
}

/// L(lambda) = inner(a - lambda) - lambda^2.
inline double dual_objective(const DualCoefficients& c, double a, double lambda) {
    const double d = a - lambda;
    return c.a0 + c.b1 * d + c.c2 * d * d - lambda * lambda;
}

/// L'' = 2 (C - 1); the maximum exists iff C < 1. C = 1 exactly when theta vanishes
/// everywhere (chi keeps its terminal value -d^2).
inline void require_concave_dual(const DualCoefficients& c) {
    if (!(c.c2 < 1.0 - 1e-12)) {
        throw Error(ErrorKind::DegenerateDual,
                    "lambda-quadratic is not concave (C = " + std::to_string(c.c2) + "); zero market price of risk");
    }
}

/// Stationary point of L: lambda* = -(B + 2 C a) / (2 (1 - C)).
inline double closed_form_lambda(const DualCoefficients& c, double a) {
    require_concave_dual(c);
    return -(c.b1 + 2.0 * c.c2 * a) / (2.0 * (1.0 - c.c2));
}

/// Golden-section maximization of L in long double, starting from
/// [-10|a|, 10|a|] and doubling the bracket while the maximizer sits on its
/// edge. A cross-check for closed_form_lambda only.
inline double golden_section_lambda(const DualCoefficients& c, double a) {
    require_concave_dual(c);
    using R = long double;
    // f(x) - f(y) in factored form; comparing raw values loses the optimum to
    // cancellation when L is large and flat.
    auto less = [&](R x, R y) {
        const R slope = -static_cast<R>(c.b1) - static_cast<R>(c.c2) * (2.0L * static_cast<R>(a) - x - y) - (x + y);
        return (x - y) * slope < 0.0L;
    };
    const R inv_phi = (std::sqrt(5.0L) - 1.0L) / 2.0L;
    R width = 10.0L * (a != 0.0 ? std::fabs(static_cast<R>(a)) : 1.0L);
    for (int attempt = 0; attempt < 64; ++attempt, width *= 2.0L) {
        R lo = -width, hi = width;
        R x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
        while (hi - lo > 1e-15L * width) {
            if (less(x1, x2)) {
                lo = x1;
                x1 = x2;
                x2 = lo + inv_phi * (hi - lo);
            } else {
                hi = x2;
                x2 = x1;
                x1 = hi - inv_phi * (hi - lo);
            }
        }
        const R mid = (lo + hi) / 2.0L;
        if (std::fabs(mid) < width * (1.0L - 1e-6L)) return static_cast<double>(mid);
    }
    throw Error(ErrorKind::DegenerateDual, "golden-section bracket never contained the maximizer");
}

struct FrontierPoint {
    double target_mean = 0.0;       // a
    double lambda_star = 0.0;
    double effective_target = 0.0;  // d = a - lambda*
    double min_variance = 0.0;      // analytic
    McEstimate achieved_mean;       // simulated E X(T) under the policy for d
    double simulated_variance = 0.0;
    double simulated_variance_se = 0.0;
};

/// Analytic part of a frontier point; no simulation.
inline FrontierPoint frontier_point_analytic(const DualCoefficients& c, double a) {
    FrontierPoint pt;
    pt.target_mean = a;
    pt.lambda_star = closed_form_lambda(c, a);
    pt.effective_target = a - pt.lambda_star;
    pt.min_variance = std::max(0.0, dual_objective(c, a, pt.lambda_star));
    return pt;
}

/// Frontier point for mean a, with the achieved mean and variance simulated
/// under the quadratic-loss optimal policy for d = a - lambda*.
inline FrontierPoint solve_frontier_point(const MarketModel& model, const GeneratorMatrix& g, double a, const SimulationConfig& cfg,
                                          std::size_t steps_per_cell = kDefaultStepsPerCell) {
    FrontierPoint pt = frontier_point_analytic(dual_coefficients(model, g, steps_per_cell), a);
    const PhiPsiChiSolution sol = solve_phi_psi_chi(model, g, pt.effective_target, steps_per_cell);
    const std::vector<double> xt = terminal_wealth_samples(model, g, optimal_policy(), &sol, cfg);
    pt.achieved_mean = summarize(xt, cfg.seed);

    // Sample variance and its delta-method standard error sqrt((m4 - s^4) / n).
    const auto n = static_cast<double>(xt.size());
    const double mean = pt.achieved_mean.mean;
    double m2 = 0.0, m4 = 0.0;
    for (double x : xt) {
        const double dev = (x - mean) * (x - mean);
        m2 += dev;
        m4 += dev * dev;
    }
    pt.simulated_variance = m2 / (n - 1.0);
    const double s2 = m2 / n;
    pt.simulated_variance_se = std::sqrt(std::max(0.0, m4 / n - s2 * s2) / n);
    return pt;
}

}  // namespace rsmp
