#pragma once

// Hamiltonian, closed-form optimal feedback for the quadratic-loss problem,
// the closed-form adjoint triple, and the policies used for comparisons.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/chain.hpp"
#include "rsmp/error.hpp"
#include "rsmp/market.hpp"
#include "rsmp/odes.hpp"

namespace rsmp {

/// H = f(t, x, u, i) + b^T p + tr(sigma^T q), with b and sigma already
/// evaluated at (t, x, u, i).
inline double hamiltonian(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u, int i, const Eigen::VectorXd& p,
                          const Eigen::MatrixXd& q, const ProblemSpec& spec, const Eigen::VectorXd& drift,
                          const Eigen::MatrixXd& diffusion) {
    const Eigen::Index n = x.size();
    if (p.size() != n || drift.size() != n || q.rows() != n || q.cols() != n || diffusion.rows() != n ||
        diffusion.cols() != n || n != spec.state_dim || u.size() != spec.control_dim) {
        throw Error(ErrorKind::DimensionMismatch, "Hamiltonian arguments disagree on N or P");
    }
    const double running = spec.running_cost ? spec.running_cost(t, x, u, i) : 0.0;
    return running + drift.dot(p) + (diffusion.transpose() * q).trace();
}

/// Scalar wealth instance: H = (r x + u sigma theta) p + u sigma q.
inline double wealth_hamiltonian(const Coefficients& c, double x, double u, double p, double q) {
    return (c.rate * x + u * c.volatility * c.price_of_risk) * p + u * c.volatility * q;
}

/// Coefficient of u in the wealth Hamiltonian divided by sigma: theta p + q.
inline double hamiltonian_control_coefficient(const Coefficients& c, double p, double q) {
    return c.price_of_risk * p + q;
}

/// The optimal feedback at (t, i) is affine in wealth: u = gain (x + offset),
/// gain = -theta / sigma, offset = psi / phi.
struct FeedbackCoefficients {
    double gain = 0.0;
    double offset = 0.0;

    double operator()(double x) const { return gain * (x + offset); }
};

inline FeedbackCoefficients optimal_feedback(const PhiPsiChiSolution& sol, const MarketModel& model, double t, int i) {
    sol.check_state(i);
    const auto loc = sol.locate(t);
    const double phi = sol.interpolate(sol.phi_nodes, loc, i);
    const double psi = sol.interpolate(sol.psi_nodes, loc, i);
    const Coefficients c = model.coefficients_at(t, i);
    return {-c.price_of_risk / c.volatility, psi / phi};
}

/// u = -theta / sigma (x + psi / phi).
inline double optimal_control(const PhiPsiChiSolution& sol, const MarketModel& model, double t, double x, int i) {
    return optimal_feedback(sol, model, t, i)(x);
}

/// Same feedback expressed through the conditional expectations
/// E[exp int_t^T (r - theta^2)] and E[exp int_t^T (2r - theta^2)] given alpha(t) = i.
inline double optimal_control_from_expectations(const MarketModel& model, const GeneratorMatrix& g, double target,
                                                double t, double x, int i) {
    model.check_state(i);
    const double horizon = model.horizon();
    const Eigen::VectorXd psi_expect = feynman_kac_oracle(g, model.breakpoints(), psi_exponent_rates(model), t, horizon);
    const Eigen::VectorXd phi_expect = feynman_kac_oracle(g, model.breakpoints(), phi_exponent_rates(model), t, horizon);
    const Coefficients c = model.coefficients_at(t, i);
    return -(x - target * psi_expect(i) / phi_expect(i)) * c.price_of_risk / c.volatility;
}

/// (p, q, eta) with p in R^N, q in R^{N x N}, and eta[n](i, j) the jump of the
/// n-th component when the chain moves from i to j.
struct AdjointTriple {
    Eigen::VectorXd p;
    Eigen::MatrixXd q;
    std::vector<Eigen::MatrixXd> eta;
};

/// Closed form along the optimum: p = phi x + psi, q = phi sigma u,
/// eta_ij = p(t, x, j) - p(t, x, i).
inline AdjointTriple adjoint_closed_form(const PhiPsiChiSolution& sol, const MarketModel& model, double t, double x, int i) {
    sol.check_state(i);
    const int d = sol.num_states;
    const auto loc = sol.locate(t);
    const Coefficients c = model.coefficients_at(t, i);
    const double phi = sol.interpolate(sol.phi_nodes, loc, i);
    const double psi = sol.interpolate(sol.psi_nodes, loc, i);
    const double u = FeedbackCoefficients{-c.price_of_risk / c.volatility, psi / phi}(x);

    AdjointTriple out;
    out.p = Eigen::VectorXd::Constant(1, phi * x + psi);
    out.q = Eigen::MatrixXd::Constant(1, 1, phi * c.volatility * u);
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(d, d);
    std::vector<double> grad(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        grad[static_cast<std::size_t>(j)] = sol.interpolate(sol.phi_nodes, loc, j) * x + sol.interpolate(sol.psi_nodes, loc, j);
    }
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            if (a != b) eta(a, b) = grad[static_cast<std::size_t>(b)] - grad[static_cast<std::size_t>(a)];
        }
    }
    out.eta.push_back(std::move(eta));
    return out;
}

// ---------------------------------------------------------------------------
// Policies

struct PolicySpec;

struct OptimalPolicy {};

struct ConstantPolicy {
    double position = 0.0;
};

/// Bilinear in (t, x) per regime, clamped at the table edges.
struct TablePolicy {
    std::vector<double> times;
    std::vector<double> wealths;
    // values[i][ti * wealths.size() + xi]
    std::vector<std::vector<double>> values;
};

enum class PerturbationKind { shift, scale, windowed_shift };

struct PerturbedPolicy {
    std::shared_ptr<const PolicySpec> base;
    PerturbationKind kind = PerturbationKind::shift;
    double amount = 0.0;  // additive shift, or multiplicative factor for scale
    double window_begin = 0.0;
    double window_end = 0.0;
};

struct PolicySpec {
    std::string name;
    std::variant<OptimalPolicy, ConstantPolicy, TablePolicy, PerturbedPolicy> kind;
    /// Optional box applied after evaluation; comparison policies only.
    std::optional<std::pair<double, double>> bounds;
};

inline PolicySpec optimal_policy() { return PolicySpec{"optimal", OptimalPolicy{}, std::nullopt}; }

inline PolicySpec constant_policy(double position, std::string name = {}) {
    if (name.empty()) name = "constant(" + std::to_string(position) + ")";
    return PolicySpec{std::move(name), ConstantPolicy{position}, std::nullopt};
}

inline PolicySpec shifted(const PolicySpec& base, double shift) {
    return PolicySpec{base.name + "+shift(" + std::to_string(shift) + ")",
                      PerturbedPolicy{std::make_shared<const PolicySpec>(base), PerturbationKind::shift, shift, 0.0, 0.0},
                      std::nullopt};
}

inline PolicySpec scaled(const PolicySpec& base, double factor) {
    return PolicySpec{base.name + "*scale(" + std::to_string(factor) + ")",
                      PerturbedPolicy{std::make_shared<const PolicySpec>(base), PerturbationKind::scale, factor, 0.0, 0.0},
                      std::nullopt};
}

inline PolicySpec window_shifted(const PolicySpec& base, double shift, double begin, double end) {
    return PolicySpec{base.name + "+window_shift(" + std::to_string(shift) + ",[" + std::to_string(begin) + "," +
                          std::to_string(end) + "))",
                      PerturbedPolicy{std::make_shared<const PolicySpec>(base), PerturbationKind::windowed_shift, shift, begin, end},
                      std::nullopt};
}

/// Shift +-0.1, scale x0.5 and x1.5, and a +0.1 shift on [0, T/2).
inline std::vector<PolicySpec> standard_perturbations(const PolicySpec& base, double horizon) {
    return {shifted(base, 0.1), shifted(base, -0.1), scaled(base, 0.5), scaled(base, 1.5),
            window_shifted(base, 0.1, 0.0, 0.5 * horizon)};
}

/// Everything a policy may read when evaluated.
struct PolicyContext {
    const MarketModel* model = nullptr;
    const PhiPsiChiSolution* solution = nullptr;
};

inline bool needs_solution(const PolicySpec& policy) {
    if (std::holds_alternative<OptimalPolicy>(policy.kind)) return true;
    if (const auto* p = std::get_if<PerturbedPolicy>(&policy.kind)) return p->base && needs_solution(*p->base);
    return false;
}

namespace detail {

inline double table_lookup(const TablePolicy& table, double t, double x, int i) {
    const auto& ts = table.times;
    const auto& xs = table.wealths;
    auto bracket = [](const std::vector<double>& grid, double v) {
        if (grid.size() == 1 || v <= grid.front()) return std::pair<std::size_t, double>{0, 0.0};
        if (v >= grid.back()) return std::pair<std::size_t, double>{grid.size() - 2, 1.0};
        const auto it = std::upper_bound(grid.begin(), grid.end(), v);
        const auto k = static_cast<std::size_t>(it - grid.begin()) - 1;
        return std::pair<std::size_t, double>{k, (v - grid[k]) / (grid[k + 1] - grid[k])};
    };
    const auto [ti, tw] = bracket(ts, t);
    const auto [xi, xw] = bracket(xs, x);
    const auto& v = table.values.at(static_cast<std::size_t>(i));
    const std::size_t nx = xs.size();
    auto at = [&](std::size_t a, std::size_t b) {
        a = std::min(a, ts.size() - 1);
        b = std::min(b, nx - 1);
        return v[a * nx + b];
    };
    const double lower = (1.0 - xw) * at(ti, xi) + xw * at(ti, xi + 1);
    const double upper = (1.0 - xw) * at(ti + 1, xi) + xw * at(ti + 1, xi + 1);
    return (1.0 - tw) * lower + tw * upper;
}

}  // namespace detail

/// Position u(t, x, i) held over the cell that starts at t in regime i.
/// `optimal_here`, when given, is the optimal feedback already evaluated at (t, i).
inline double policy_position(const PolicySpec& policy, const PolicyContext& ctx, double t, double x, int i,
                              const FeedbackCoefficients* optimal_here = nullptr) {
    double u = std::visit(
        [&](const auto& kind) -> double {
            using K = std::decay_t<decltype(kind)>;
            if constexpr (std::is_same_v<K, OptimalPolicy>) {
                if (optimal_here) return (*optimal_here)(x);
                if (!ctx.solution || !ctx.model) throw Error(ErrorKind::InvalidArgument, "optimal policy needs a solved ODE system");
                return optimal_control(*ctx.solution, *ctx.model, t, x, i);
            } else if constexpr (std::is_same_v<K, ConstantPolicy>) {
                return kind.position;
            } else if constexpr (std::is_same_v<K, TablePolicy>) {
                return detail::table_lookup(kind, t, x, i);
            } else {
                const double base = policy_position(*kind.base, ctx, t, x, i, optimal_here);
                switch (kind.kind) {
                    case PerturbationKind::shift: return base + kind.amount;
                    case PerturbationKind::scale: return base * kind.amount;
                    case PerturbationKind::windowed_shift:
                        return (t >= kind.window_begin && t < kind.window_end) ? base + kind.amount : base;
                }
                return base;
            }
        },
        policy.kind);
    if (policy.bounds) {
        if (std::holds_alternative<OptimalPolicy>(policy.kind)) {
            throw Error(ErrorKind::InvalidArgument, "box bounds are not supported for the closed-form optimum");
        }
        u = std::clamp(u, policy.bounds->first, policy.bounds->second);
    }
    return u;
}

}  // namespace rsmp
