#pragma once

// Runnable checks for the hypotheses and identities behind the sufficient
// maximum principle, its link to dynamic programming, and the Ito formula.
// Every check reports a non-negative statistic and a threshold; smaller is better.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "rsmp/control.hpp"
#include "rsmp/simulate.hpp"

namespace rsmp {

struct CheckReport {
    std::string check_name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed = false;
    std::string detail;
};

/// Allowance for RK4 and interpolation error in means that should vanish.
inline constexpr double kNumericalFloor = 1e-9;

inline CheckReport make_report(std::string name, double statistic, double threshold, std::string detail = {}) {
    const bool ok = std::isfinite(statistic) && statistic <= threshold;
    return CheckReport{std::move(name), statistic, threshold, ok, std::move(detail)};
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// |mean| against 3 standard errors plus a numerical floor.
inline CheckReport zero_mean_report(std::string name, const McEstimate& est, double floor, std::string detail = {}) {
    if (!detail.empty()) detail += "; ";
    detail += "mean " + fmt(est.mean) + ", se " + fmt(est.std_error) + ", paths " + std::to_string(est.n_paths);
    return make_report(std::move(name), std::abs(est.mean), 3.0 * est.std_error + floor, std::move(detail));
}

/// Among several zero-mean estimates, report the one furthest outside its band.
inline CheckReport worst_zero_mean(std::string name, const std::vector<std::pair<std::string, McEstimate>>& estimates,
                                   double floor) {
    std::size_t worst = 0;
    double worst_ratio = -1.0;
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        const auto& e = estimates[k].second;
        const double band = 3.0 * e.std_error + floor;
        const double ratio = band > 0.0 ? std::abs(e.mean) / band : (e.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        if (ratio > worst_ratio) {
            worst_ratio = ratio;
            worst = k;
        }
    }
    return zero_mean_report(std::move(name), estimates[worst].second, floor, estimates[worst].first);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    if (n > 1) out.back() = b;
    return out;
}

/// int_from^to rate(s, alpha(s)) ds along a chain path, cell by cell.
inline double integrate_along(const ChainPath& path, const std::vector<double>& breakpoints, const CoefficientTable& rates,
                              double from, double to) {
    double total = 0.0;
    path.for_each_segment(from, to, [&](double a, double b, int state) {
        for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
            const double lo = std::max(a, breakpoints[k]);
            const double hi = std::min(b, breakpoints[k + 1]);
            if (hi > lo) total += rates[k][static_cast<std::size_t>(state)] * (hi - lo);
        }
    });
    return total;
}

}  // namespace detail

/// (t, x) evaluation grid shared by the identity checks; every regime is visited.
struct StateGrid {
    std::vector<double> times;
    std::vector<double> wealths;
};

inline StateGrid state_grid(double horizon, double x_center, std::size_t n_times = 50, std::size_t n_wealths = 21,
                            double half_width = 2.0) {
    return StateGrid{detail::linspace(0.0, horizon, n_times), detail::linspace(x_center - half_width, x_center + half_width, n_wealths)};
}

/// Copy of `sol` with psi shifted by `amount` in regime `i`; used by negative controls.
inline PhiPsiChiSolution corrupt_psi(const PhiPsiChiSolution& sol, int i, double amount) {
    sol.check_state(i);
    PhiPsiChiSolution out = sol;
    for (std::size_t n = 0; n < out.num_nodes(); ++n) out.psi_nodes[n * static_cast<std::size_t>(out.num_states) + static_cast<std::size_t>(i)] += amount;
    return out;
}

// ---------------------------------------------------------------------------
// Integrability hypotheses

/// Monte Carlo estimates of the three integrability integrals for the optimum
/// against one comparison control. Finiteness cannot be proved by simulation;
/// the check reports stability of the estimate when the path count doubles.
inline std::vector<CheckReport> check_integrability(const MarketModel& model, const GeneratorMatrix& g, const PhiPsiChiSolution& sol,
                                                    const PolicySpec& alternative, const SimulationConfig& cfg) {
    if (cfg.n_paths < 4) throw Error(ErrorKind::InvalidArgument, "integrability check needs at least four paths");
    require_solution(alternative, &sol);
    const PolicyContext ctx{&model, &sol};
    const PolicySpec optimum = optimal_policy();
    const int d = model.num_states();

    using Triple = std::array<double, 3>;
    const auto per_path = map_paths<Triple>(model, g, cfg, [&](const PathNoise& noise, std::size_t) {
        const auto feedback = feedback_along(noise, model, sol);
        std::vector<double> xo, uo, xa, ua;
        integrate_wealth(noise, model, optimum, ctx, model.initial_wealth(), &xo, &uo, feedback);
        integrate_wealth(noise, model, alternative, ctx, model.initial_wealth(), &xa, &ua, feedback);
        Triple acc{0.0, 0.0, 0.0};
        for (std::size_t l = 0; l < noise.num_cells(); ++l) {
            const double t = noise.grid[l];
            const double dt = noise.grid[l + 1] - t;
            const int i = noise.regime[l];
            const Coefficients c = model.cell(noise.market_cell[l], i);
            const double p = value_gradient(sol, t, xo[l], i);
            const double q = sol.phi(t, i) * c.volatility * uo[l];
            const double dx = xo[l] - xa[l];
            const double vol_gap = c.volatility * (uo[l] - ua[l]) * p;
            acc[0] += vol_gap * vol_gap * dt;
            acc[1] += q * dx * q * dx * dt;
            for (int j = 0; j < d; ++j) {
                if (j == i) continue;
                const double eta = value_gradient(sol, t, xo[l], j) - p;
                acc[2] += (dx * eta) * (dx * eta) * g.rate(i, j) * dt;
            }
        }
        return acc;
    });

    const char* names[3] = {"integrability_diffusion", "integrability_adjoint_q", "integrability_jump_eta"};
    const std::size_t half = cfg.n_paths / 2;
    std::vector<CheckReport> out;
    for (std::size_t k = 0; k < 3; ++k) {
        double full = 0.0, first = 0.0;
        for (std::size_t p = 0; p < cfg.n_paths; ++p) {
            full += per_path[p][k];
            if (p < half) first += per_path[p][k];
        }
        full /= static_cast<double>(cfg.n_paths);
        first /= static_cast<double>(half);
        double stat = 0.0;
        if (!(full == 0.0 && first == 0.0)) {
            stat = first != 0.0 ? std::abs(full / first - 1.0) : std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(full)) stat = std::numeric_limits<double>::infinity();
        out.push_back(make_report(names[k], stat, 0.2,
                                  "estimate " + detail::fmt(full) + " at " + std::to_string(cfg.n_paths) + " paths, " + detail::fmt(first) +
                                      " at " + std::to_string(half) + "; alternative " + alternative.name +
                                      " (one member of a finite perturbation family)"));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hamiltonian maximization and concavity

/// max |phi sigma u + theta (phi x + psi)| over the grid: the u-coefficient of the
/// Hamiltonian at the candidate optimum. The control comes from `control_sol`
/// (default: the same solution), the adjoint from `adjoint_sol`.
inline CheckReport check_hamiltonian_maximum(const PhiPsiChiSolution& adjoint_sol, const MarketModel& model, const StateGrid& grid,
                                             const PhiPsiChiSolution* control_sol = nullptr) {
    const PhiPsiChiSolution& csol = control_sol ? *control_sol : adjoint_sol;
    double worst = 0.0;
    std::string where;
    for (double t : grid.times) {
        for (double x : grid.wealths) {
            for (int i = 0; i < model.num_states(); ++i) {
                const Coefficients c = model.coefficients_at(t, i);
                const double u = optimal_control(csol, model, t, x, i);
                const double phi = adjoint_sol.phi(t, i);
                const double p = phi * x + adjoint_sol.psi(t, i);
                const double q = phi * c.volatility * u;
                const double coefficient = std::abs(hamiltonian_control_coefficient(c, p, q));
                if (coefficient > worst || where.empty()) {
                    worst = std::max(worst, coefficient);
                    where = "t " + detail::fmt(t) + ", x " + detail::fmt(x) + ", regime " + std::to_string(i + 1);
                }
            }
        }
    }
    return make_report("hamiltonian_u_coefficient", worst, 1e-10, "worst at " + where);
}

/// Second derivative of the terminal reward h(x) = -(x - d)^2 must be negative.
inline CheckReport check_terminal_concavity(double target) {
    const ProblemSpec spec = quadratic_loss_problem(target);
    double worst = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo(1), hi(1);
    for (double x : {-10.0, -1.0, 0.0, target, 1.0, 10.0}) {
        lo(0) = x - 1.0;
        hi(0) = x + 1.0;
        const double second = 0.5 * (spec.terminal_gradient(hi, 0)(0) - spec.terminal_gradient(lo, 0)(0));
        worst = std::max(worst, second);
    }
    return make_report("terminal_concavity", std::max(0.0, worst), 0.0, "h'' = " + detail::fmt(worst));
}

// ---------------------------------------------------------------------------
// Adjoint BSDE along simulated optimal paths

namespace detail {

struct BsdePathStats {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t cells = 0;
    double terminal_error = 0.0;
    double jump_error = 0.0;
    std::size_t jumps = 0;
};

/// Residual dp + r p dt - q dW - sum_j eta_ij dM_ij on every cell of one
/// optimal path.
inline BsdePathStats bsde_residuals(const PathNoise& noise, const MarketModel& model, const GeneratorMatrix& g,
                                    const PhiPsiChiSolution& sol) {
    const PolicyContext ctx{&model, &sol};
    const auto feedback = feedback_along(noise, model, sol);
    std::vector<double> x, u;
    integrate_wealth(noise, model, optimal_policy(), ctx, model.initial_wealth(), &x, &u, feedback);
    const int d = model.num_states();
    // p = phi x + psi with phi, psi interpolated at a located node; same
    // arithmetic as value_gradient, with one lookup per node.
    auto gradient = [&](const PhiPsiChiSolution::Location& loc, double wealth, int j) {
        return sol.interpolate(sol.phi_nodes, loc, j) * wealth + sol.interpolate(sol.psi_nodes, loc, j);
    };
    BsdePathStats s;
    PhiPsiChiSolution::Location loc1 = sol.locate(noise.grid[0]);
    for (std::size_t l = 0; l < noise.num_cells(); ++l) {
        const double t0 = noise.grid[l];
        const double t1 = noise.grid[l + 1];
        const double dt = t1 - t0;
        const int i = noise.regime[l];
        const Coefficients c = model.cell(noise.market_cell[l], i);
        const PhiPsiChiSolution::Location loc0 = loc1;
        loc1 = sol.locate(t1);
        const double p0 = gradient(loc0, x[l], i);
        const double q0 = sol.interpolate(sol.phi_nodes, loc0, i) * c.volatility * u[l];
        double compensator = 0.0;
        for (int j = 0; j < d; ++j) {
            if (j != i) compensator += (gradient(loc0, x[l], j) - p0) * g.rate(i, j) * dt;
        }
        const int entered = noise.jump_into[l + 1];
        double p1 = 0.0;
        double jump = 0.0;
        if (entered >= 0) {
            const AdjointTriple before = adjoint_closed_form(sol, model, t1, x[l + 1], i);
            const AdjointTriple after = adjoint_closed_form(sol, model, t1, x[l + 1], entered);
            jump = before.eta[0](i, entered);
            p1 = after.p(0);
            s.jump_error = std::max(s.jump_error, std::abs((after.p(0) - before.p(0)) - jump));
            ++s.jumps;
        } else {
            p1 = gradient(loc1, x[l + 1], i);
        }
        const double residual = (p1 - p0) + c.rate * p0 * dt - q0 * noise.dW[l] - (jump - compensator);
        s.sum += residual;
        s.sum_sq += residual * residual;
        ++s.cells;
    }
    const double xt = x.back();
    const double pt = adjoint_closed_form(sol, model, model.horizon(), xt, noise.chain.final_state()).p(0);
    s.terminal_error = std::abs(pt - (-2.0 * xt + 2.0 * sol.target));
    return s;
}

}  // namespace detail

/// Terminal condition, jump identity, zero-mean summed residual and the
/// per-cell residual order. The summed residual of an Euler path carries an
/// O(dt) bias, so the mean check uses 2 S(n) - S(n/2) on the nested path.
inline std::vector<CheckReport> check_adjoint_bsde(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g,
                                                   const SimulationConfig& cfg) {
    if (cfg.n_steps < 2) throw Error(ErrorKind::InvalidArgument, "adjoint check needs n_steps >= 2");
    if (cfg.n_paths < 2) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 2");
    const std::size_t coarse_steps = cfg.n_steps / 2;
    struct Pair {
        detail::BsdePathStats fine, coarse;
    };
    const auto per_path = map_paths<Pair>(model, g, cfg, [&](const PathNoise& noise, std::size_t p) {
        Pair out;
        out.fine = detail::bsde_residuals(noise, model, g, sol);
        out.coarse = detail::bsde_residuals(draw_noise(model, g, coarse_steps, cfg.seed, p), model, g, sol);
        return out;
    });

    double terminal = 0.0, jump = 0.0;
    std::size_t jumps = 0;
    double sq_fine = 0.0, sq_coarse = 0.0;
    std::size_t cells_fine = 0, cells_coarse = 0;
    std::vector<double> extrapolated(cfg.n_paths), raw(cfg.n_paths);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        const auto& f = per_path[p].fine;
        const auto& c = per_path[p].coarse;
        terminal = std::max({terminal, f.terminal_error, c.terminal_error});
        jump = std::max({jump, f.jump_error, c.jump_error});
        jumps += f.jumps;
        sq_fine += f.sum_sq;
        sq_coarse += c.sum_sq;
        cells_fine += f.cells;
        cells_coarse += c.cells;
        extrapolated[p] = 2.0 * f.sum - c.sum;
        raw[p] = f.sum;
    }
    const McEstimate raw_est = summarize(raw, cfg.seed);
    const double rms_fine = std::sqrt(sq_fine / static_cast<double>(cells_fine));
    const double rms_coarse = std::sqrt(sq_coarse / static_cast<double>(cells_coarse));

    std::vector<CheckReport> out;
    out.push_back(make_report("adjoint_terminal", terminal, 0.0, "max |p(T) - (-2 X(T) + 2d)| over paths"));
    out.push_back(make_report("adjoint_jump_identity", jump, 0.0, std::to_string(jumps) + " chain jumps"));
    out.push_back(detail::zero_mean_report("adjoint_bsde_mean", summarize(extrapolated, cfg.seed), kNumericalFloor,
                                           "2 S(" + std::to_string(cfg.n_steps) + ") - S(" + std::to_string(coarse_steps) +
                                               "); raw S mean " + detail::fmt(raw_est.mean) + " se " + detail::fmt(raw_est.std_error)));
    const double ratio = rms_fine == 0.0 && rms_coarse == 0.0 ? 0.0 : rms_fine / rms_coarse;
    out.push_back(make_report("adjoint_bsde_order", ratio, std::pow(2.0, -0.9),
                              "rms per cell " + detail::fmt(rms_fine) + " at " + std::to_string(cfg.n_steps) + " steps, " +
                                  detail::fmt(rms_coarse) + " at " + std::to_string(coarse_steps)));
    return out;
}

// ---------------------------------------------------------------------------
// Martingales

/// E M_ij(T) = 0 for every pair i != j.
inline CheckReport check_chain_martingales(const GeneratorMatrix& g, int initial_state, double horizon, const SimulationConfig& cfg) {
    const int d = g.num_states();
    const auto du = static_cast<std::size_t>(d);
    std::vector<Eigen::MatrixXd> finals(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t p) {
        finals[p] = counting_record(sample_path(g, initial_state, horizon, cfg.seed, p), g).final_martingales();
    });
    std::vector<std::pair<std::string, McEstimate>> estimates;
    std::vector<double> column(cfg.n_paths);
    for (std::size_t i = 0; i < du; ++i) {
        for (std::size_t j = 0; j < du; ++j) {
            if (i == j) continue;
            for (std::size_t p = 0; p < cfg.n_paths; ++p) column[p] = finals[p](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            estimates.emplace_back("M_" + std::to_string(i + 1) + std::to_string(j + 1), summarize(column, cfg.seed));
        }
    }
    if (estimates.empty()) return make_report("chain_martingale_mean", 0.0, 0.0, "single regime: no transitions");
    return detail::worst_zero_mean("chain_martingale_mean", estimates, 1e-12);
}

/// R(t) = -1/2 phi(t, alpha(t)) exp(int_0^t (2r - theta^2)) and
/// S(t) = psi(t, alpha(t)) / (2d) exp(int_0^t (r - theta^2)) have zero-mean
/// increments between the check times 0, T/4, T/2, 3T/4, T. With
/// `time_reversed` the integrals run over [t, T] instead, which is wrong on
/// purpose and must fail.
inline std::vector<CheckReport> check_rs_martingales(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g,
                                                     const SimulationConfig& cfg, bool time_reversed = false) {
    const double horizon = model.horizon();
    const std::vector<double> times{0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon};
    const auto phi_rates = phi_exponent_rates(model);
    const auto psi_rates = psi_exponent_rates(model);
    const auto& bps = model.breakpoints();
    const bool with_s = sol.target != 0.0;
    const std::size_t nt = times.size();

    const auto per_path = map_paths<std::vector<double>>(model, g, SimulationConfig{cfg.n_paths, 1, cfg.seed, cfg.workers},
                                                         [&](const PathNoise& noise, std::size_t) {
        std::vector<double> vals(2 * nt, 0.0);
        for (std::size_t k = 0; k < nt; ++k) {
            const double t = times[k];
            const int state = noise.chain.state_at(t);
            const double from = time_reversed ? t : 0.0;
            const double to = time_reversed ? horizon : t;
            vals[k] = -0.5 * sol.phi(t, state) * std::exp(detail::integrate_along(noise.chain, bps, phi_rates, from, to));
            if (with_s) {
                vals[nt + k] = sol.psi(t, state) / (2.0 * sol.target) *
                               std::exp(detail::integrate_along(noise.chain, bps, psi_rates, from, to));
            }
        }
        return vals;
    });

    std::vector<CheckReport> out;
    for (int which = 0; which < (with_s ? 2 : 1); ++which) {
        std::vector<std::pair<std::string, McEstimate>> estimates;
        std::vector<double> column(cfg.n_paths);
        for (std::size_t k = 0; k + 1 < nt; ++k) {
            for (std::size_t p = 0; p < cfg.n_paths; ++p) {
                const auto base = static_cast<std::size_t>(which) * nt;
                column[p] = per_path[p][base + k + 1] - per_path[p][base + k];
            }
            estimates.emplace_back("increment [" + detail::fmt(times[k]) + ", " + detail::fmt(times[k + 1]) + "]",
                                   summarize(column, cfg.seed));
        }
        std::string name = which == 0 ? "rs_martingale_R" : "rs_martingale_S";
        if (time_reversed) name += "_time_reversed";
        out.push_back(detail::worst_zero_mean(name, estimates, kNumericalFloor));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dynamic programming connection

inline std::vector<CheckReport> check_dp_connection(const PhiPsiChiSolution& sol, const MarketModel& model, const StateGrid& grid) {
    constexpr double h = 1e-5;
    double worst_p = 0.0, worst_q = 0.0, worst_eta = 0.0, worst_fd = 0.0;
    const int d = model.num_states();
    for (double t : grid.times) {
        for (double x : grid.wealths) {
            for (int i = 0; i < d; ++i) {
                const AdjointTriple adj = adjoint_closed_form(sol, model, t, x, i);
                const double vx = value_gradient(sol, t, x, i);
                const double vxx = sol.phi(t, i);
                const Coefficients c = model.coefficients_at(t, i);
                const double u = optimal_control(sol, model, t, x, i);
                worst_p = std::max(worst_p, std::abs(adj.p(0) - vx));
                worst_q = std::max(worst_q, std::abs(adj.q(0, 0) - c.volatility * u * vxx));
                for (int j = 0; j < d; ++j) {
                    if (j != i) worst_eta = std::max(worst_eta, std::abs(adj.eta[0](i, j) - (value_gradient(sol, t, x, j) - vx)));
                }
                const double fd = (value_function(sol, t, x + h, i) - value_function(sol, t, x - h, i)) / (2.0 * h);
                worst_fd = std::max(worst_fd, std::abs(fd - vx));
            }
        }
    }
    return {make_report("dp_p_equals_Vx", worst_p, 1e-12), make_report("dp_q_equals_sigma_u_Vxx", worst_q, 1e-10),
            make_report("dp_eta_equals_Vx_jump", worst_eta, 1e-12),
            make_report("dp_Vx_finite_difference", worst_fd, 1e-6, "central difference, h = 1e-5")};
}

/// Generator of (t, X, alpha) applied to V under control u:
/// V_t + (r x + u sigma theta) V_x + 1/2 (u sigma)^2 V_xx + sum_j g_ij (V_j - V_i).
inline double generator_on_value(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g, double t,
                                 double x, int i, double u) {
    const CoefficientDerivatives dv = time_derivatives(sol, model, g, t);
    const auto k = static_cast<std::size_t>(i);
    const Coefficients c = model.coefficients_at(t, i);
    const double v_t = 0.5 * dv.phi_t[k] * x * x + dv.psi_t[k] * x + dv.chi_t[k];
    const double v_x = value_gradient(sol, t, x, i);
    const double v_xx = sol.phi(t, i);
    const double exposure = u * c.volatility;
    double coupling = 0.0;
    const double vi = value_function(sol, t, x, i);
    for (int j = 0; j < model.num_states(); ++j) {
        if (j != i) coupling += g.rate(i, j) * (value_function(sol, t, x, j) - vi);
    }
    return v_t + (c.rate * x + exposure * c.price_of_risk) * v_x + 0.5 * exposure * exposure * v_xx + coupling;
}

/// HJB residual at the candidate optimum on the grid.
inline CheckReport check_hjb_residual(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g,
                                      const StateGrid& grid) {
    double worst = 0.0;
    for (double t : grid.times) {
        for (double x : grid.wealths) {
            for (int i = 0; i < model.num_states(); ++i) {
                const double scale = 1.0 + std::abs(value_function(sol, t, x, i));
                worst = std::max(worst, std::abs(generator_on_value(sol, model, g, t, x, i, optimal_control(sol, model, t, x, i))) / scale);
            }
        }
    }
    return make_report("hjb_residual", worst, 1e-10, "relative to 1 + |V|");
}

/// E V(t_end, X(t_end), alpha(t_end)) - V(0, x0, i0) against E int_0^t_end Gamma V ds
/// under `policy`, pathwise paired. `floor` widens the 3-standard-error band
/// for deterministic configurations where only discretization error remains.
inline CheckReport check_dynkin(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g, const PolicySpec& policy,
                                double t_end, const SimulationConfig& cfg, double floor = 0.0) {
    if (!(t_end >= 0.0 && t_end <= model.horizon())) throw Error(ErrorKind::TimeOutOfRange, "t_end outside [0, T]");
    require_solution(policy, &sol);
    const PolicyContext ctx{&model, &sol};
    const double x0 = model.initial_wealth();
    const int i0 = model.initial_state();
    const double v0 = value_function(sol, 0.0, x0, i0);
    const std::vector<double> extra{t_end};

    struct Sides {
        double lhs = 0.0;
        double rhs = 0.0;
    };
    const auto per_path = map_paths<Sides>(model, g, cfg, [&](const PathNoise& noise, std::size_t) {
        std::vector<double> x, u;
        integrate_wealth(noise, model, policy, ctx, x0, &x, &u);
        Sides s;
        std::size_t l = 0;
        for (; l < noise.num_cells() && noise.grid[l] < t_end; ++l) {
            s.rhs += generator_on_value(sol, model, g, noise.grid[l], x[l], noise.regime[l], u[l]) * (noise.grid[l + 1] - noise.grid[l]);
        }
        s.lhs = value_function(sol, t_end, x[l], noise.chain.state_at(t_end)) - v0;
        return s;
    }, extra);

    std::vector<double> diff(cfg.n_paths), lhs(cfg.n_paths);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        diff[p] = per_path[p].lhs - per_path[p].rhs;
        lhs[p] = per_path[p].lhs;
    }
    const McEstimate left = summarize(lhs, cfg.seed);
    return detail::zero_mean_report("dynkin_formula", summarize(diff, cfg.seed), floor,
                                    "policy " + policy.name + ", t_end " + detail::fmt(t_end) + ", E[V(t_end)] - V(0) = " +
                                        detail::fmt(left.mean));
}

// ---------------------------------------------------------------------------

/// A negative control passes when the wrapped check fails.
inline CheckReport negative_control(std::string name, const CheckReport& inner) {
    const double stat = inner.threshold / inner.statistic;
    CheckReport out = make_report(std::move(name), stat, 1.0,
                                  inner.check_name + " statistic " + detail::fmt(inner.statistic) + " vs threshold " +
                                      detail::fmt(inner.threshold) + " (must fail)");
    out.passed = out.passed && !inner.passed;
    return out;
}

/// Every check on one market, in a fixed order.
inline std::vector<CheckReport> run_all(const PhiPsiChiSolution& sol, const MarketModel& model, const GeneratorMatrix& g,
                                        const SimulationConfig& cfg) {
    const StateGrid grid = state_grid(model.horizon(), model.initial_wealth());
    std::vector<CheckReport> out;
    auto append = [&](std::vector<CheckReport> more) { out.insert(out.end(), more.begin(), more.end()); };

    out.push_back(check_hamiltonian_maximum(sol, model, grid));
    out.push_back(check_terminal_concavity(sol.target));
    append(check_dp_connection(sol, model, grid));
    out.push_back(check_hjb_residual(sol, model, g, grid));
    out.push_back(check_chain_martingales(g, model.initial_state(), model.horizon(), cfg));
    append(check_rs_martingales(sol, model, g, cfg));
    append(check_adjoint_bsde(sol, model, g, cfg));
    out.push_back(check_dynkin(sol, model, g, optimal_policy(), model.horizon(), cfg));
    append(check_integrability(model, g, sol, shifted(optimal_policy(), 0.1), cfg));

    const PhiPsiChiSolution bad = corrupt_psi(sol, 0, 0.01);
    out.push_back(negative_control("negative_control_corrupted_psi", check_hamiltonian_maximum(bad, model, grid, &sol)));
    out.push_back(negative_control("negative_control_time_reversed_R", check_rs_martingales(sol, model, g, cfg, true).front()));
    return out;
}

}  // namespace rsmp
