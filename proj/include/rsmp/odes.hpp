#pragma once

// Backward linear systems for the adjoint coefficients phi, psi and the
// value-function offset chi, plus the matrix-exponential Feynman-Kac oracle.
//
// With tau = T - t, per regime i:
//   phi' = (2r - theta^2) phi + sum_j g_ij (phi_j - phi_i),          phi(T) = -2
//   psi' = (r - theta^2) psi  + sum_j g_ij (psi_j - psi_i),          psi(T) = 2d
//   chi' = -theta^2 psi^2 / (2 phi) + sum_j g_ij (chi_j - chi_i),   chi(T) = -d^2
// and V(t, x, i) = phi x^2 / 2 + psi x + chi.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/chain.hpp"
#include "rsmp/error.hpp"
#include "rsmp/market.hpp"

namespace rsmp {

inline constexpr std::size_t kDefaultStepsPerCell = 200;

struct PhiPsiChiSolution {
    int num_states = 0;
    double target = 0.0;
    std::size_t steps_per_cell = 0;
    std::vector<double> breakpoints;
    std::vector<double> time_grid;
    // Node-major values: index node * num_states + regime.
    std::vector<double> phi_nodes;
    std::vector<double> psi_nodes;
    std::vector<double> chi_nodes;

    std::size_t num_nodes() const { return time_grid.size(); }
    double horizon() const { return time_grid.back(); }

    double phi_at(std::size_t node, int i) const { return phi_nodes[node * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(i)]; }
    double psi_at(std::size_t node, int i) const { return psi_nodes[node * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(i)]; }
    double chi_at(std::size_t node, int i) const { return chi_nodes[node * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(i)]; }

    /// Linear interpolation weights: value = (1 - weight) v[node] + weight v[node + 1].
    struct Location {
        std::size_t node = 0;
        double weight = 0.0;
    };

    Location locate(double t) const {
        const double horizon = time_grid.back();
        if (!(t >= 0.0 && t <= horizon)) {
            throw Error(ErrorKind::TimeOutOfRange, "t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
        }
        std::size_t k = 0;
        if (breakpoints.size() > 2) {
            const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
            k = std::min(static_cast<std::size_t>(it - breakpoints.begin()) - 1, breakpoints.size() - 2);
        }
        const double step = (breakpoints[k + 1] - breakpoints[k]) / static_cast<double>(steps_per_cell);
        auto j = static_cast<std::size_t>(std::max(0.0, std::floor((t - breakpoints[k]) / step)));
        j = std::min(j, steps_per_cell - 1);
        Location loc;
        loc.node = k * steps_per_cell + j;
        // Floor can land one node late when t sits on a node up to rounding.
        if (t < time_grid[loc.node] && loc.node > 0) --loc.node;
        const double left = time_grid[loc.node];
        const double right = time_grid[loc.node + 1];
        loc.weight = std::clamp((t - left) / (right - left), 0.0, 1.0);
        return loc;
    }

    double interpolate(const std::vector<double>& values, const Location& loc, int i) const {
        const std::size_t d = static_cast<std::size_t>(num_states);
        const double a = values[loc.node * d + static_cast<std::size_t>(i)];
        const double b = values[(loc.node + 1) * d + static_cast<std::size_t>(i)];
        if (loc.weight == 0.0) return a;
        if (loc.weight == 1.0) return b;
        return (1.0 - loc.weight) * a + loc.weight * b;
    }

    void check_state(int i) const {
        if (i < 0 || i >= num_states) throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(i + 1));
    }

    double phi(double t, int i) const { check_state(i); return interpolate(phi_nodes, locate(t), i); }
    double psi(double t, int i) const { check_state(i); return interpolate(psi_nodes, locate(t), i); }
    double chi(double t, int i) const { check_state(i); return interpolate(chi_nodes, locate(t), i); }
};

namespace detail {

struct OdeRates {
    std::vector<double> phi_rate;  // 2r - theta^2
    std::vector<double> psi_rate;  // r - theta^2
    std::vector<double> half_theta_sq;
};

inline OdeRates cell_rates(const MarketModel& model, std::size_t k) {
    OdeRates rates;
    for (int i = 0; i < model.num_states(); ++i) {
        const Coefficients c = model.cell(k, i);
        const double theta_sq = c.price_of_risk * c.price_of_risk;
        rates.phi_rate.push_back(2.0 * c.rate - theta_sq);
        rates.psi_rate.push_back(c.rate - theta_sq);
        rates.half_theta_sq.push_back(0.5 * theta_sq);
    }
    return rates;
}

inline double coupling(const GeneratorMatrix& g, const double* v, int i) {
    double s = 0.0;
    for (int j = 0; j < g.num_states(); ++j) {
        if (j != i) s += g.rate(i, j) * (v[j] - v[i]);
    }
    return s;
}

/// d/dtau of the stacked state [phi | psi | chi].
inline void backward_rhs(const GeneratorMatrix& g, const OdeRates& rates, const std::vector<double>& y, std::vector<double>& out) {
    const int d = g.num_states();
    const double* phi = y.data();
    const double* psi = y.data() + d;
    const double* chi = y.data() + 2 * d;
    for (int i = 0; i < d; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[k] = rates.phi_rate[k] * phi[i] + coupling(g, phi, i);
        out[k + static_cast<std::size_t>(d)] = rates.psi_rate[k] * psi[i] + coupling(g, psi, i);
        out[k + 2 * static_cast<std::size_t>(d)] = -rates.half_theta_sq[k] * psi[i] * psi[i] / phi[i] + coupling(g, chi, i);
    }
}

}  // namespace detail

/// Classic RK4 backward from T with steps_per_cell fixed steps in every market cell.
inline PhiPsiChiSolution solve_phi_psi_chi(const MarketModel& model, const GeneratorMatrix& g, double target,
                                           std::size_t steps_per_cell = kDefaultStepsPerCell) {
    if (!std::isfinite(target)) throw Error(ErrorKind::NonFinite, "target d");
    if (steps_per_cell < 1) throw Error(ErrorKind::InvalidArgument, "steps_per_cell must be >= 1");
    if (g.num_states() != model.num_states()) {
        throw Error(ErrorKind::DimensionMismatch, "generator and market disagree on the number of regimes");
    }
    const int d = model.num_states();
    const auto du = static_cast<std::size_t>(d);
    const std::size_t cells = model.num_cells();
    const std::size_t nodes = cells * steps_per_cell + 1;

    PhiPsiChiSolution sol;
    sol.num_states = d;
    sol.target = target;
    sol.steps_per_cell = steps_per_cell;
    sol.breakpoints = model.breakpoints();
    sol.time_grid.resize(nodes);
    for (std::size_t k = 0; k < cells; ++k) {
        const double a = sol.breakpoints[k];
        const double step = (sol.breakpoints[k + 1] - a) / static_cast<double>(steps_per_cell);
        for (std::size_t j = 0; j < steps_per_cell; ++j) sol.time_grid[k * steps_per_cell + j] = a + static_cast<double>(j) * step;
    }
    sol.time_grid.back() = model.horizon();
    sol.phi_nodes.assign(nodes * du, 0.0);
    sol.psi_nodes.assign(nodes * du, 0.0);
    sol.chi_nodes.assign(nodes * du, 0.0);

    std::vector<double> y(3 * du);
    for (std::size_t i = 0; i < du; ++i) {
        y[i] = -2.0;
        y[i + du] = 2.0 * target;
        y[i + 2 * du] = target == 0.0 ? 0.0 : -target * target;
    }
    auto store = [&](std::size_t node) {
        for (std::size_t i = 0; i < du; ++i) {
            sol.phi_nodes[node * du + i] = y[i];
            sol.psi_nodes[node * du + i] = y[i + du];
            sol.chi_nodes[node * du + i] = y[i + 2 * du];
        }
    };
    store(nodes - 1);

    std::vector<double> k1(3 * du), k2(3 * du), k3(3 * du), k4(3 * du), tmp(3 * du);
    for (std::size_t cell = cells; cell-- > 0;) {
        const detail::OdeRates rates = detail::cell_rates(model, cell);
        const double h = (sol.breakpoints[cell + 1] - sol.breakpoints[cell]) / static_cast<double>(steps_per_cell);
        for (std::size_t j = steps_per_cell; j-- > 0;) {
            detail::backward_rhs(g, rates, y, k1);
            for (std::size_t n = 0; n < y.size(); ++n) tmp[n] = y[n] + 0.5 * h * k1[n];
            detail::backward_rhs(g, rates, tmp, k2);
            for (std::size_t n = 0; n < y.size(); ++n) tmp[n] = y[n] + 0.5 * h * k2[n];
            detail::backward_rhs(g, rates, tmp, k3);
            for (std::size_t n = 0; n < y.size(); ++n) tmp[n] = y[n] + h * k3[n];
            detail::backward_rhs(g, rates, tmp, k4);
            for (std::size_t n = 0; n < y.size(); ++n) {
                y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
                if (!std::isfinite(y[n])) {
                    throw Error(ErrorKind::NonFiniteSolution, "overflow at t = " + std::to_string(sol.time_grid[cell * steps_per_cell + j]));
                }
            }
            store(cell * steps_per_cell + j);
        }
    }
    return sol;
}

/// Time derivatives of phi, psi, chi at t for every regime, read off the ODEs.
struct CoefficientDerivatives {
    std::vector<double> phi_t;
    std::vector<double> psi_t;
    std::vector<double> chi_t;
};

inline CoefficientDerivatives time_derivatives(const PhiPsiChiSolution& sol, const MarketModel& model,
                                               const GeneratorMatrix& g, double t) {
    const int d = sol.num_states;
    const auto du = static_cast<std::size_t>(d);
    const auto loc = sol.locate(t);
    std::vector<double> y(3 * du), rhs(3 * du);
    for (int i = 0; i < d; ++i) {
        const auto k = static_cast<std::size_t>(i);
        y[k] = sol.interpolate(sol.phi_nodes, loc, i);
        y[k + du] = sol.interpolate(sol.psi_nodes, loc, i);
        y[k + 2 * du] = sol.interpolate(sol.chi_nodes, loc, i);
    }
    detail::backward_rhs(g, detail::cell_rates(model, model.cell_index(t)), y, rhs);
    CoefficientDerivatives out;
    for (std::size_t k = 0; k < du; ++k) {
        out.phi_t.push_back(-rhs[k]);
        out.psi_t.push_back(-rhs[k + du]);
        out.chi_t.push_back(-rhs[k + 2 * du]);
    }
    return out;
}

/// v_i = E[ exp( int_from^to c(s, alpha(s)) ds ) | alpha(from) = i ], exactly, as the
/// ordered product of exp((G + diag(c_k)) dt_k) over the cells applied to ones.
/// `rates` is cell-major like the market tables.
inline Eigen::VectorXd feynman_kac_oracle(const GeneratorMatrix& g, const std::vector<double>& breakpoints,
                                          const CoefficientTable& rates, double from, double to) {
    if (breakpoints.size() < 2 || rates.size() != breakpoints.size() - 1) {
        throw Error(ErrorKind::DimensionMismatch, "rates must have one row per cell");
    }
    if (!(from <= to) || from < breakpoints.front() || to > breakpoints.back()) {
        throw Error(ErrorKind::BadInterval, "[" + std::to_string(from) + ", " + std::to_string(to) + "]");
    }
    const int d = g.num_states();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d);
    for (std::size_t k = rates.size(); k-- > 0;) {
        const double a = std::max(from, breakpoints[k]);
        const double b = std::min(to, breakpoints[k + 1]);
        if (!(b > a)) continue;
        if (rates[k].size() != static_cast<std::size_t>(d)) throw Error(ErrorKind::DimensionMismatch, "rates row length");
        const double top = *std::max_element(rates[k].begin(), rates[k].end());
        // G + diag(c) = (G + diag(c - top)) + top I, the first part a sub-generator.
        Eigen::MatrixXd sub = g.entries();
        for (int i = 0; i < d; ++i) sub(i, i) += rates[k][static_cast<std::size_t>(i)] - top;
        v = std::exp(top * (b - a)) * detail::subgenerator_exp_apply(sub, b - a, v);
    }
    return v;
}

/// Per-cell exponent rates 2r - theta^2 (phi) or r - theta^2 (psi).
inline CoefficientTable phi_exponent_rates(const MarketModel& model) {
    CoefficientTable out;
    for (std::size_t k = 0; k < model.num_cells(); ++k) out.push_back(detail::cell_rates(model, k).phi_rate);
    return out;
}

inline CoefficientTable psi_exponent_rates(const MarketModel& model) {
    CoefficientTable out;
    for (std::size_t k = 0; k < model.num_cells(); ++k) out.push_back(detail::cell_rates(model, k).psi_rate);
    return out;
}

/// V(t, x, i) = phi x^2 / 2 + psi x + chi.
inline double value_function(const PhiPsiChiSolution& sol, double t, double x, int i) {
    sol.check_state(i);
    const auto loc = sol.locate(t);
    const double phi = sol.interpolate(sol.phi_nodes, loc, i);
    const double psi = sol.interpolate(sol.psi_nodes, loc, i);
    const double chi = sol.interpolate(sol.chi_nodes, loc, i);
    return 0.5 * phi * x * x + psi * x + chi;
}

/// dV/dx = phi x + psi.
inline double value_gradient(const PhiPsiChiSolution& sol, double t, double x, int i) {
    sol.check_state(i);
    const auto loc = sol.locate(t);
    return sol.interpolate(sol.phi_nodes, loc, i) * x + sol.interpolate(sol.psi_nodes, loc, i);
}

}  // namespace rsmp
