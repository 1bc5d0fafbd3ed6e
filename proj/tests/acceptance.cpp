// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Runtime budgets are part of each criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rsmp/commands.hpp"

using namespace rsmp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        passed = passed && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [failed]");
    }
};

std::string num(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::string within_se(const std::string& label, double diff, double se, double k = 3.0) {
    return label + " |diff| " + num(std::abs(diff)) + " vs " + num(k) + " SE " + num(k * se);
}

GeneratorMatrix generator(std::initializer_list<std::initializer_list<double>> rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return validate_generator(m);
}

GeneratorMatrix no_switching() { return validate_generator(Eigen::MatrixXd::Zero(1, 1)); }
MarketModel single() { return MarketModel::constant(1.0, 0.8, 0, {0.05}, {0.11}, {0.3}); }
MarketModel tworeg() { return MarketModel::constant(1.0, 1.0, 0, {0.03, 0.07}, {0.06, 0.16}, {0.3, 0.3}); }
GeneratorMatrix tworeg_generator() { return generator({{-1, 1}, {2, -2}}); }
constexpr double kSingleTarget = 1.0;
constexpr double kTworegTarget = 1.2;

// 4096 Euler steps, the resolution the Monte Carlo criteria are stated at.
constexpr std::size_t kSteps = 4096;
constexpr std::size_t kPaths = 100000;

double max_relative_oracle_error(const PhiPsiChiSolution& sol, const MarketModel& m, const GeneratorMatrix& g) {
    double worst = 0.0;
    for (std::size_t n = 0; n < sol.num_nodes(); ++n) {
        const double t = sol.time_grid[n];
        const auto phi_fk = feynman_kac_oracle(g, m.breakpoints(), phi_exponent_rates(m), t, m.horizon());
        const auto psi_fk = feynman_kac_oracle(g, m.breakpoints(), psi_exponent_rates(m), t, m.horizon());
        for (int i = 0; i < sol.num_states; ++i) {
            const double phi_ref = -2.0 * phi_fk(i), psi_ref = 2.0 * sol.target * psi_fk(i);
            worst = std::max(worst, std::abs(sol.phi_at(n, i) - phi_ref) / std::abs(phi_ref));
            worst = std::max(worst, std::abs(sol.psi_at(n, i) - psi_ref) / std::abs(psi_ref));
        }
    }
    return worst;
}

Outcome ode_oracle() {
    Outcome out;
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const double coarse = max_relative_oracle_error(solve_phi_psi_chi(m, g, kTworegTarget, 100), m, g);
    const double fine = max_relative_oracle_error(solve_phi_psi_chi(m, g, kTworegTarget, 200), m, g);
    out.require(fine < 1e-6, "max rel err " + num(fine) + " < 1e-6");
    out.require(coarse / fine >= 12.0, "ratio 100/200 steps " + num(coarse / fine) + " >= 12 (coarse " + num(coarse) + ")");
    return out;
}

Outcome single_closed_forms() {
    Outcome out;
    const auto m = single();
    const auto sol = solve_phi_psi_chi(m, no_switching(), kSingleTarget);
    const double phi = sol.phi(0.0, 0), psi = sol.psi(0.0, 0), chi = sol.chi(0.0, 0);
    out.require(std::abs(phi + 2.0 * std::exp(0.06)) < 1e-8, "phi(0) " + num(phi, 10));
    out.require(std::abs(psi - 2.0 * std::exp(0.01)) < 1e-8, "psi(0) " + num(psi, 10));
    out.require(std::abs(chi + std::exp(-0.04)) < 1e-8, "chi(0) " + num(chi, 10));
    const double u = optimal_control(sol, m, 0.0, 0.8, 0);
    out.require(std::abs(u - 0.100819) < 1e-6, "u(0, 0.8) " + num(u, 8));
    return out;
}

Outcome value_vs_monte_carlo() {
    Outcome out;
    {
        const auto m = single();
        const auto sol = solve_phi_psi_chi(m, no_switching(), kSingleTarget);
        const auto est = estimate_J(m, no_switching(), optimal_policy(), &sol, kSingleTarget, {kPaths, kSteps, 301, 0});
        const double exact = -std::exp(-0.04) * std::pow(0.8 * std::exp(0.05) - kSingleTarget, 2);
        out.require(std::abs(est.mean - exact) <= 3.0 * est.std_error,
                    within_se("SINGLE J " + num(est.mean, 7) + " vs " + num(exact, 7), est.mean - exact, est.std_error));
        out.require(est.elapsed < 60.0, "SINGLE " + num(est.elapsed, 3) + " s < 60 s");
    }
    {
        const auto m = tworeg();
        const auto g = tworeg_generator();
        const auto sol = solve_phi_psi_chi(m, g, kTworegTarget);
        const auto est = estimate_J(m, g, optimal_policy(), &sol, kTworegTarget, {kPaths, kSteps, 302, 0});
        const double v = value_function(sol, 0.0, 1.0, 0);
        out.require(std::abs(est.mean - v) <= 3.0 * est.std_error,
                    within_se("TWOREG J " + num(est.mean, 7) + " vs V " + num(v, 7), est.mean - v, est.std_error));
        out.require(est.elapsed < 60.0, "TWOREG " + num(est.elapsed, 3) + " s < 60 s");
    }
    return out;
}

Outcome optimality_dominance() {
    Outcome out;
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, kTworegTarget);
    const auto alternatives = standard_perturbations(optimal_policy(), m.horizon());
    const auto diffs = compare_policies(m, g, optimal_policy(), alternatives, &sol, kTworegTarget, {kPaths, kSteps, 401, 0});
    out.require(diffs.size() == 5, std::to_string(diffs.size()) + " perturbations");
    for (const auto& d : diffs) {
        const auto& e = d.difference;
        out.require(e.mean >= 0.0 && e.mean > 3.0 * e.std_error, d.name + " " + num(e.mean) + " > 3 SE " + num(3.0 * e.std_error));
    }
    return out;
}

Outcome maximum_principle_identities() {
    Outcome out;
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, kTworegTarget);
    const StateGrid grid = state_grid(m.horizon(), m.initial_wealth());
    out.require(grid.times.size() * grid.wealths.size() * 2 == 50 * 21 * 2, "grid 50x21x2");

    const auto ham = check_hamiltonian_maximum(sol, m, grid);
    out.require(ham.statistic < 1e-10, "hamiltonian " + num(ham.statistic));

    bool terminal_exact = true;
    for (double x : grid.wealths) {
        for (int i = 0; i < 2; ++i) terminal_exact = terminal_exact && adjoint_closed_form(sol, m, m.horizon(), x, i).p(0) == -2.0 * x + 2.0 * kTworegTarget;
    }
    out.require(terminal_exact, "p(T) = -2x + 2d exact");

    for (const auto& r : check_dp_connection(sol, m, grid)) {
        const double bound = r.check_name == "dp_Vx_finite_difference" ? 1e-6 : 1e-10;
        out.require(r.statistic < bound, r.check_name + " " + num(r.statistic) + " < " + num(bound));
    }
    return out;
}

Outcome martingale_suite() {
    Outcome out;
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, kTworegTarget);
    const SimulationConfig cfg{kPaths, kSteps, 601, 0};

    std::vector<CheckReport> reports;
    reports.push_back(check_chain_martingales(g, m.initial_state(), m.horizon(), cfg));
    for (auto& r : check_rs_martingales(sol, m, g, cfg)) reports.push_back(r);
    for (auto& r : check_adjoint_bsde(sol, m, g, cfg)) reports.push_back(r);
    const StateGrid grid = state_grid(m.horizon(), m.initial_wealth());
    reports.push_back(negative_control("negative_control_corrupted_psi", check_hamiltonian_maximum(corrupt_psi(sol, 0, 0.01), m, grid, &sol)));
    reports.push_back(negative_control("negative_control_time_reversed_R", check_rs_martingales(sol, m, g, cfg, true).front()));
    for (const auto& r : reports) out.require(r.passed, r.check_name + " " + num(r.statistic) + " <= " + num(r.threshold));
    return out;
}

Outcome chain_law() {
    Outcome out;
    const std::size_t n = kPaths;
    auto total_variation = [&](const GeneratorMatrix& g, int i0, std::uint64_t seed) {
        std::vector<int> finals(n);
        parallel_for(n, 0, [&](std::size_t p) { finals[p] = sample_path(g, i0, 1.0, seed, p).final_state(); });
        std::vector<double> freq(static_cast<std::size_t>(g.num_states()), 0.0);
        for (int s : finals) freq[static_cast<std::size_t>(s)] += 1.0 / static_cast<double>(n);
        const Eigen::MatrixXd law = transition_matrix(g, 1.0);
        double tv = 0.0;
        for (int j = 0; j < g.num_states(); ++j) tv += 0.5 * std::abs(freq[static_cast<std::size_t>(j)] - law(i0, j));
        return tv;
    };
    const double tv_two = total_variation(tworeg_generator(), 0, 701);
    out.require(tv_two < 0.02, "TWOREG TV " + num(tv_two));
    const auto sym = generator({{-1, 1}, {1, -1}});
    const double tv_sym = total_variation(sym, 0, 702);
    out.require(tv_sym < 0.02, "symmetric TV " + num(tv_sym));

    std::vector<double> n12(n);
    parallel_for(n, 0, [&](std::size_t p) { n12[p] = counting_record(sample_path(sym, 0, 1.0, 703, p), sym).final_counts()(0, 1); });
    const McEstimate est = summarize(n12, 703);
    out.require(std::abs(est.mean - 0.71617) <= 3.0 * est.std_error, within_se("E N12(1) " + num(est.mean, 6), est.mean - 0.71617, est.std_error));
    return out;
}

Outcome frontier() {
    Outcome out;
    const double theta = std::sqrt(std::log(2.0));
    const auto ln2 = MarketModel::constant(1.0, 1.0, 0, {0.0}, {0.5 * theta}, {0.5});
    const auto c = dual_coefficients(ln2, no_switching());
    const auto analytic = frontier_point_analytic(c, 1.5);
    out.require(std::abs(analytic.min_variance - 0.25) < 1e-8, "analytic variance " + num(analytic.min_variance, 12));

    const SimulationConfig cfg{kPaths, 1024, 801, 0};
    const auto simulated = solve_frontier_point(ln2, no_switching(), 1.5, cfg);
    out.require(std::abs(simulated.simulated_variance - 0.25) <= 3.0 * simulated.simulated_variance_se,
                within_se("simulated variance " + num(simulated.simulated_variance, 6), simulated.simulated_variance - 0.25,
                          simulated.simulated_variance_se));

    const double a = 1.1 * std::exp(0.05);
    const auto two = solve_frontier_point(tworeg(), tworeg_generator(), a, {kPaths, 1024, 802, 0});
    out.require(std::abs(two.achieved_mean.mean - a) <= 3.0 * two.achieved_mean.std_error,
                within_se("TWOREG mean " + num(two.achieved_mean.mean, 6), two.achieved_mean.mean - a, two.achieved_mean.std_error));

    double worst = std::abs(golden_section_lambda(c, 1.5) - closed_form_lambda(c, 1.5));
    const auto c2 = dual_coefficients(tworeg(), tworeg_generator());
    for (double target : {a, 1.0, 1.3, 2.0}) worst = std::max(worst, std::abs(golden_section_lambda(c2, target) - closed_form_lambda(c2, target)));
    out.require(worst < 1e-8, "golden vs closed form " + num(worst));
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    Outcome out;
    const fs::path configs = RSMP_CONFIG_DIR;
    struct Run {
        std::string subcommand, config;
        std::vector<std::string> overrides;
    };
    const std::vector<Run> runs{
        {"simulate-chain", "tworeg.json", {"numerics.n_paths=100000"}},
        {"solve-odes", "tworeg.json", {}},
        {"optimal-control", "tworeg.json", {}},
        {"evaluate", "tworeg.json", {"numerics.n_paths=10000", "numerics.n_steps=256", "output.emit_paths=true"}},
        {"verify", "tworeg.json", {"numerics.n_paths=2000", "numerics.n_steps=1024", "numerics.seed=2024"}},
        {"frontier", "frontier_tworeg.json", {"numerics.n_paths=10000", "numerics.n_steps=256"}},
    };
    const fs::path root = fs::temp_directory_path() / "rsmp_acceptance_determinism";
    fs::remove_all(root);
    std::size_t identical = 0;
    for (const auto& run : runs) {
        std::string reference;
        bool same = true;
        for (int workers : {1, 2, 8}) {
            const fs::path dir = root / (run.subcommand + "_" + std::to_string(workers));
            auto overrides = run.overrides;
            overrides.push_back("numerics.workers=" + std::to_string(workers));
            overrides.push_back("output.directory=" + dir.string());
            std::ostringstream log, err;
            const int code = rsmp::run(run.subcommand, configs / run.config, overrides, log, err);
            if (code != kExitOk) {
                out.require(false, run.subcommand + " exit " + std::to_string(code) + " " + err.str());
                same = false;
                break;
            }
            std::string text;
            for (const auto& entry : fs::directory_iterator(dir)) text += entry.path().filename().string() + "\n" + slurp(entry.path());
            if (reference.empty()) reference = text;
            same = same && text == reference && !text.empty();
        }
        identical += same ? 1 : 0;
        if (!same) out.require(false, run.subcommand + " differs across 1/2/8 workers");
    }
    out.require(identical == runs.size(), std::to_string(identical) + "/" + std::to_string(runs.size()) + " subcommands byte-identical at 1, 2, 8 workers");
    fs::remove_all(root);
    return out;
}

struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "ODE vs Feynman-Kac oracle", 1.0, ode_oracle},
        {2, "single-regime closed forms", 1.0, single_closed_forms},
        {3, "analytic value vs Monte Carlo", 120.0, value_vs_monte_carlo},
        {4, "optimality dominance", 120.0, optimality_dominance},
        {5, "maximum-principle identities", 1.0, maximum_principle_identities},
        {6, "martingale suite", 120.0, martingale_suite},
        {7, "chain law", 30.0, chain_law},
        {8, "mean-variance frontier", 60.0, frontier},
        {9, "determinism across workers", 60.0, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.require(seconds < c.budget_seconds, num(seconds, 3) + " s < " + num(c.budget_seconds) + " s");
        failures += out.passed ? 0 : 1;
        std::printf("%s criterion %d (%s): %s\n", out.passed ? "PASS" : "FAIL", c.id, c.title, out.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
