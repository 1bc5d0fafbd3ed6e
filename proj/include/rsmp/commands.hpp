#pragma once

// Subcommands of the batch front-end. Each writes <name>.csv into the
// configured output directory and returns the process exit code.

#include <iostream>
#include <string>
#include <string_view>

#include "rsmp/config.hpp"
#include "rsmp/frontier.hpp"
#include "rsmp/verify.hpp"

namespace rsmp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitChecksFailed = 1;
inline constexpr int kExitConfigError = 2;

inline const std::vector<std::string_view>& subcommand_names() {
    static const std::vector<std::string_view> names{"simulate-chain", "solve-odes", "optimal-control", "evaluate", "verify", "frontier"};
    return names;
}

namespace detail {

/// d for quadratic-loss subcommands; in frontier mode without an explicit d,
/// the effective target of the first requested mean.
inline double quadratic_target(const RunConfig& cfg) {
    if (cfg.target) return *cfg.target;
    const auto c = dual_coefficients(cfg.market, cfg.generator, cfg.steps_per_cell);
    return frontier_point_analytic(c, cfg.target_means.front()).effective_target;
}

inline std::filesystem::path csv_path(const RunConfig& cfg, std::string_view name) {
    return cfg.output_directory / (std::string(name) + ".csv");
}

/// int_0^T P(s) ds by composite Simpson on the exact transition matrix.
inline Eigen::MatrixXd integrated_transition(const GeneratorMatrix& g, double horizon, int intervals = 256) {
    const double h = horizon / intervals;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(g.num_states(), g.num_states());
    for (int k = 0; k <= intervals; ++k) {
        const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        sum += w * transition_matrix(g, k * h);
    }
    return sum * (h / 3.0);
}

inline int simulate_chain(const RunConfig& cfg, std::ostream& log) {
    const auto& g = cfg.generator;
    const int d = g.num_states();
    const int i0 = cfg.market.initial_state();
    const double horizon = cfg.market.horizon();
    const std::size_t n = cfg.sim.n_paths;

    struct PathStats {
        int final_state = 0;
        std::size_t jumps = 0;
        Eigen::MatrixXd counts, martingales;
    };
    std::vector<PathStats> paths(n);
    parallel_for(n, cfg.sim.workers, [&](std::size_t p) {
        const ChainPath path = sample_path(g, i0, horizon, cfg.sim.seed, p);
        const CountingRecord rec = counting_record(path, g);
        paths[p] = {path.final_state(), path.num_jumps(), rec.final_counts(), rec.final_martingales()};
    });

    const Eigen::MatrixXd law = transition_matrix(g, horizon);
    const Eigen::MatrixXd occupation = integrated_transition(g, horizon);
    CsvWriter csv({"statistic", "from", "to", "estimate", "std_error", "exact"});
    std::vector<double> values(n);
    double tv = 0.0;
    for (int j = 0; j < d; ++j) {
        for (std::size_t p = 0; p < n; ++p) values[p] = paths[p].final_state == j ? 1.0 : 0.0;
        const McEstimate est = summarize(values, cfg.sim.seed);
        tv += std::abs(est.mean - law(i0, j));
        csv.row("final_state_probability", i0 + 1, j + 1, est.mean, est.std_error, law(i0, j));
    }
    csv.row("total_variation", i0 + 1, std::string{}, 0.5 * tv, std::string{}, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            for (std::size_t p = 0; p < n; ++p) values[p] = paths[p].counts(i, j);
            const McEstimate count = summarize(values, cfg.sim.seed);
            csv.row("expected_count", i + 1, j + 1, count.mean, count.std_error, g.rate(i, j) * occupation(i0, i));
            for (std::size_t p = 0; p < n; ++p) values[p] = paths[p].martingales(i, j);
            const McEstimate mart = summarize(values, cfg.sim.seed);
            csv.row("compensated_martingale", i + 1, j + 1, mart.mean, mart.std_error, 0.0);
        }
    }
    csv.save(csv_path(cfg, "simulate-chain"));
    if (cfg.emit_paths) {
        CsvWriter per_path({"path", "num_jumps", "final_state"});
        for (std::size_t p = 0; p < n; ++p) per_path.row(p, paths[p].jumps, paths[p].final_state + 1);
        per_path.save(csv_path(cfg, "simulate-chain_paths"));
    }
    log << "total variation " << format_double(0.5 * tv) << " over " << n << " paths\n";
    return kExitOk;
}

inline int solve_odes(const RunConfig& cfg, std::ostream& log) {
    const double target = quadratic_target(cfg);
    const auto sol = solve_phi_psi_chi(cfg.market, cfg.generator, target, cfg.steps_per_cell);
    const double x0 = cfg.market.initial_wealth();
    CsvWriter csv({"t", "regime", "phi", "psi", "chi", "value_x0"});
    for (std::size_t k = 0; k < sol.num_nodes(); ++k) {
        for (int i = 0; i < sol.num_states; ++i) {
            const double phi = sol.phi_at(k, i), psi = sol.psi_at(k, i), chi = sol.chi_at(k, i);
            csv.row(sol.time_grid[k], i + 1, phi, psi, chi, 0.5 * phi * x0 * x0 + psi * x0 + chi);
        }
    }
    csv.save(csv_path(cfg, "solve-odes"));
    const int i0 = cfg.market.initial_state();
    log << "V(0, " << format_double(x0) << ", " << i0 + 1 << ") = " << format_double(value_function(sol, 0.0, x0, i0)) << "\n";
    return kExitOk;
}

inline int optimal_control_table(const RunConfig& cfg, std::ostream& log) {
    const auto sol = solve_phi_psi_chi(cfg.market, cfg.generator, quadratic_target(cfg), cfg.steps_per_cell);
    const StateGrid grid = state_grid(cfg.market.horizon(), cfg.market.initial_wealth());
    CsvWriter csv({"t", "x", "regime", "u", "p", "q"});
    for (double t : grid.times) {
        for (double x : grid.wealths) {
            for (int i = 0; i < sol.num_states; ++i) {
                const AdjointTriple adj = adjoint_closed_form(sol, cfg.market, t, x, i);
                csv.row(t, x, i + 1, optimal_control(sol, cfg.market, t, x, i), adj.p(0), adj.q(0, 0));
            }
        }
    }
    csv.save(csv_path(cfg, "optimal-control"));
    log << grid.times.size() * grid.wealths.size() * static_cast<std::size_t>(sol.num_states) << " grid points\n";
    return kExitOk;
}

/// The optimum and its standard perturbations on common random numbers.
inline int evaluate(const RunConfig& cfg, std::ostream& log) {
    const double target = quadratic_target(cfg);
    const auto sol = solve_phi_psi_chi(cfg.market, cfg.generator, target, cfg.steps_per_cell);
    std::vector<PolicySpec> policies{optimal_policy()};
    for (auto& p : standard_perturbations(optimal_policy(), cfg.market.horizon())) policies.push_back(std::move(p));

    std::vector<std::vector<double>> terminal;
    const auto estimates = estimate_J_many(cfg.market, cfg.generator, policies, &sol, target, cfg.sim, cfg.emit_paths ? &terminal : nullptr);
    CsvWriter csv({"policy", "n_paths", "n_steps", "seed", "J_hat", "std_error"});
    for (std::size_t k = 0; k < policies.size(); ++k) {
        csv.row(policies[k].name, cfg.sim.n_paths, cfg.sim.n_steps, cfg.sim.seed, estimates[k].mean, estimates[k].std_error);
        log << policies[k].name << ": J = " << format_double(estimates[k].mean) << " +- " << format_double(estimates[k].std_error) << "\n";
    }
    csv.save(csv_path(cfg, "evaluate"));
    if (cfg.emit_paths) {
        CsvWriter per_path({"path", "policy", "terminal_wealth"});
        for (std::size_t p = 0; p < cfg.sim.n_paths; ++p) {
            for (std::size_t k = 0; k < policies.size(); ++k) per_path.row(p, policies[k].name, terminal[k][p]);
        }
        per_path.save(csv_path(cfg, "evaluate_paths"));
    }
    return kExitOk;
}

inline int verify(const RunConfig& cfg, std::ostream& log) {
    const auto sol = solve_phi_psi_chi(cfg.market, cfg.generator, quadratic_target(cfg), cfg.steps_per_cell);
    const auto reports = run_all(sol, cfg.market, cfg.generator, cfg.sim);
    CsvWriter csv({"check_name", "statistic", "threshold", "passed"});
    bool all = true;
    for (const auto& r : reports) {
        csv.row(r.check_name, r.statistic, r.threshold, r.passed);
        log << (r.passed ? "PASS " : "FAIL ") << r.check_name << " " << format_double(r.statistic) << " <= "
            << format_double(r.threshold);
        if (!r.detail.empty()) log << "  (" << r.detail << ")";
        log << "\n";
        all = all && r.passed;
    }
    csv.save(csv_path(cfg, "verify"));
    return all ? kExitOk : kExitChecksFailed;
}

inline int frontier(const RunConfig& cfg, std::ostream& log) {
    if (cfg.target_means.empty()) throw Error(ErrorKind::MissingField, "problem.a is required for the frontier subcommand");
    CsvWriter csv({"a", "lambda_star", "d", "variance", "achieved_mean", "std_error", "simulated_variance", "simulated_variance_se"});
    for (double a : cfg.target_means) {
        const FrontierPoint pt = solve_frontier_point(cfg.market, cfg.generator, a, cfg.sim, cfg.steps_per_cell);
        csv.row(a, pt.lambda_star, pt.effective_target, pt.min_variance, pt.achieved_mean.mean, pt.achieved_mean.std_error,
                pt.simulated_variance, pt.simulated_variance_se);
        log << "a = " << format_double(a) << ": variance " << format_double(pt.min_variance) << "\n";
    }
    csv.save(csv_path(cfg, "frontier"));
    return kExitOk;
}

}  // namespace detail

/// Runs one subcommand; library errors propagate to the caller.
inline int run_subcommand(std::string_view name, const RunConfig& cfg, std::ostream& log = std::cout) {
    if (name == "simulate-chain") return detail::simulate_chain(cfg, log);
    if (name == "solve-odes") return detail::solve_odes(cfg, log);
    if (name == "optimal-control") return detail::optimal_control_table(cfg, log);
    if (name == "evaluate") return detail::evaluate(cfg, log);
    if (name == "verify") return detail::verify(cfg, log);
    if (name == "frontier") return detail::frontier(cfg, log);
    throw Error(ErrorKind::InvalidArgument, "unknown subcommand '" + std::string(name) + "'");
}

/// Loads the config, applies overrides and runs; every library error becomes
/// exit code 2 with its message on `err`.
inline int run(std::string_view name, const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
               std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        return run_subcommand(name, load_run_config(config_path, overrides), log);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
    } catch (const nlohmann::json::exception& e) {
        err << "error: ConfigParse: " << e.what() << "\n";
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
    }
    return kExitConfigError;
}

}  // namespace rsmp
