#pragma once

// Euler-Maruyama for the controlled wealth
//   dX = (r X + u sigma theta) dt + u sigma dW
// on a grid that merges uniform nodes, exact chain jump times and market
// breakpoints, with common random numbers across policies.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/chain.hpp"
#include "rsmp/control.hpp"
#include "rsmp/error.hpp"
#include "rsmp/market.hpp"
#include "rsmp/odes.hpp"
#include "rsmp/random.hpp"

namespace rsmp {

inline constexpr std::size_t kDefaultSteps = 4096;
inline constexpr std::size_t kDefaultPaths = 100000;

struct SimulationConfig {
    std::size_t n_paths = kDefaultPaths;
    std::size_t n_steps = kDefaultSteps;
    std::uint64_t seed = 0;
    unsigned workers = 0;  // 0: all hardware threads
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    double elapsed = 0.0;  // seconds
};

/// Mean and standard error, summed in index order.
inline McEstimate summarize(std::span<const double> values, std::uint64_t seed = 0, double elapsed = 0.0) {
    if (values.size() < 2) throw Error(ErrorKind::InvalidArgument, "an estimate needs at least two paths");
    const auto n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    McEstimate est;
    est.mean = mean;
    est.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    est.n_paths = values.size();
    est.seed = seed;
    est.elapsed = elapsed;
    return est;
}

/// All randomness of one path: the chain, the merged grid and the Brownian
/// increments on it. Shared by every policy simulated on this path.
struct PathNoise {
    ChainPath chain;
    std::vector<double> grid;
    std::vector<double> dW;                // one per cell
    std::vector<int> regime;               // alpha on the open cell (grid[l], grid[l+1])
    std::vector<std::size_t> market_cell;  // market cell of grid[l]
    std::vector<int> jump_into;            // per node: state entered at that node, or -1

    std::size_t num_cells() const { return dW.size(); }
};

namespace detail {

/// W at the uniform nodes 0..n by breadth-first bisection (Levy construction),
/// so that doubling a power-of-two n refines the same Brownian path.
inline std::vector<double> uniform_brownian(std::size_t n, double horizon, std::mt19937_64& engine) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(n + 1, 0.0);
    const double h = horizon / static_cast<double>(n);
    w[n] = std::sqrt(horizon) * normal(engine);
    if ((n & (n - 1)) == 0) {
        // Power of two: level-order sweep, one bridge factor per level. Same draw
        // order as the general queue below.
        for (std::size_t span = n; span >= 2; span /= 2) {
            const std::size_t half = span / 2;
            const double a = static_cast<double>(half) * h;
            const double sd = std::sqrt(a * a / (a + a));
            for (std::size_t lo = 0; lo < n; lo += span) {
                const double mean = w[lo] + 0.5 * (w[lo + span] - w[lo]);
                w[lo + half] = mean + sd * normal(engine);
            }
        }
        return w;
    }
    std::vector<std::pair<std::size_t, std::size_t>> queue{{0, n}};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto [lo, hi] = queue[head];
        if (hi - lo < 2) continue;
        const std::size_t mid = lo + (hi - lo) / 2;
        const double a = static_cast<double>(mid - lo) * h;
        const double b = static_cast<double>(hi - mid) * h;
        const double mean = w[lo] + a / (a + b) * (w[hi] - w[lo]);
        w[mid] = mean + std::sqrt(a * b / (a + b)) * normal(engine);
        queue.emplace_back(lo, mid);
        queue.emplace_back(mid, hi);
    }
    return w;
}

}  // namespace detail

/// Draws the noise of path `path` under master `seed`. `extra_nodes` are added
/// to the grid (used for check times).
inline PathNoise draw_noise(const MarketModel& model, const GeneratorMatrix& g, std::size_t n_steps, std::uint64_t seed,
                            std::uint64_t path, std::span<const double> extra_nodes = {}) {
    if (n_steps < 1) throw Error(ErrorKind::InvalidArgument, "n_steps must be >= 1");
    const double horizon = model.horizon();
    PathNoise noise;
    noise.chain = sample_path(g, model.initial_state(), horizon, seed, path);

    auto brownian_engine = path_engine(seed, path, Stream::brownian);
    auto bridge_engine = path_engine(seed, path, Stream::bridge);
    const std::vector<double> w_uniform = detail::uniform_brownian(n_steps, horizon, brownian_engine);
    std::vector<double> uniform(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) uniform[k] = horizon * static_cast<double>(k) / static_cast<double>(n_steps);
    uniform.back() = horizon;

    std::vector<double> extras;
    extras.insert(extras.end(), noise.chain.jump_times.begin(), noise.chain.jump_times.end());
    extras.insert(extras.end(), model.breakpoints().begin() + 1, model.breakpoints().end() - 1);
    extras.insert(extras.end(), extra_nodes.begin(), extra_nodes.end());
    std::sort(extras.begin(), extras.end());
    extras.erase(std::unique(extras.begin(), extras.end()), extras.end());

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w;
    noise.grid.reserve(n_steps + extras.size() + 1);
    w.reserve(n_steps + extras.size() + 1);
    noise.grid.push_back(0.0);
    w.push_back(0.0);
    std::size_t e = 0;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        const double right = uniform[k];
        while (e < extras.size() && extras[e] <= 0.0) ++e;
        while (e < extras.size() && extras[e] < right) {
            // Brownian bridge from the last node to the next uniform node.
            const double s = extras[e++];
            const double left_t = noise.grid.back();
            const double left_w = w.back();
            const double a = s - left_t;
            const double b = right - s;
            const double mean = left_w + a / (a + b) * (w_uniform[k] - left_w);
            noise.grid.push_back(s);
            w.push_back(mean + std::sqrt(a * b / (a + b)) * normal(bridge_engine));
        }
        if (e < extras.size() && extras[e] == right) ++e;
        noise.grid.push_back(right);
        w.push_back(w_uniform[k]);
    }

    const std::size_t cells = noise.grid.size() - 1;
    noise.dW.resize(cells);
    noise.regime.resize(cells);
    noise.market_cell.resize(cells);
    noise.jump_into.assign(noise.grid.size(), -1);
    std::size_t next_jump = 0;
    int state = noise.chain.initial_state;
    const auto& bps = model.breakpoints();
    std::size_t market = 0;
    for (std::size_t l = 0; l < noise.grid.size(); ++l) {
        const double t = noise.grid[l];
        while (next_jump < noise.chain.num_jumps() && noise.chain.jump_times[next_jump] <= t) {
            if (noise.chain.jump_times[next_jump] == t) noise.jump_into[l] = noise.chain.jump_targets[next_jump];
            state = noise.chain.jump_targets[next_jump];
            ++next_jump;
        }
        if (l < cells) {
            noise.regime[l] = state;
            while (market + 2 < bps.size() && t >= bps[market + 1]) ++market;
            noise.market_cell[l] = market;
            noise.dW[l] = w[l + 1] - w[l];
        }
    }
    return noise;
}

/// Euler-Maruyama along one noise realization. Coefficients and the control are
/// taken at the left node of each cell, in the regime holding on the cell.
/// Optionally records X at every node and u on every cell.
inline double integrate_wealth(const PathNoise& noise, const MarketModel& model, const PolicySpec& policy,
                               const PolicyContext& ctx, double x0, std::vector<double>* wealth = nullptr,
                               std::vector<double>* controls = nullptr,
                               std::span<const FeedbackCoefficients> feedback = {}) {
    double x = x0;
    if (wealth) {
        wealth->clear();
        wealth->reserve(noise.grid.size());
        wealth->push_back(x);
    }
    if (controls) {
        controls->clear();
        controls->reserve(noise.num_cells());
    }
    for (std::size_t l = 0; l < noise.num_cells(); ++l) {
        const double t = noise.grid[l];
        const double dt = noise.grid[l + 1] - t;
        const int i = noise.regime[l];
        const Coefficients c = model.cell(noise.market_cell[l], i);
        const double u = policy_position(policy, ctx, t, x, i, feedback.empty() ? nullptr : &feedback[l]);
        const double exposure = u * c.volatility;
        x += (c.rate * x + exposure * c.price_of_risk) * dt + exposure * noise.dW[l];
        if (wealth) wealth->push_back(x);
        if (controls) controls->push_back(u);
    }
    return x;
}

/// Optimal feedback at the left node of every cell, for reuse across the
/// policies simulated on one path.
inline std::vector<FeedbackCoefficients> feedback_along(const PathNoise& noise, const MarketModel& model,
                                                        const PhiPsiChiSolution& sol) {
    std::vector<FeedbackCoefficients> out(noise.num_cells());
    for (std::size_t l = 0; l < out.size(); ++l) out[l] = optimal_feedback(sol, model, noise.grid[l], noise.regime[l]);
    return out;
}

/// One simulated wealth trajectory with its driving noise.
struct WealthPath {
    std::vector<double> time_grid;
    std::vector<double> wealth;
    std::vector<double> controls;
    std::vector<double> brownian_increments;
    ChainPath chain;
};

inline WealthPath simulate_wealth(const MarketModel& model, const GeneratorMatrix& g, const PolicySpec& policy,
                                  const PhiPsiChiSolution* sol, double x0, std::size_t n_steps, std::uint64_t seed,
                                  std::uint64_t path_index = 0) {
    const PathNoise noise = draw_noise(model, g, n_steps, seed, path_index);
    const PolicyContext ctx{&model, sol};
    WealthPath out;
    integrate_wealth(noise, model, policy, ctx, x0, &out.wealth, &out.controls);
    out.time_grid = noise.grid;
    out.brownian_increments = noise.dW;
    out.chain = noise.chain;
    return out;
}

/// Calls fn(noise, path_index) -> Result for every path and returns the results
/// ordered by path index.
template <class Result, class Fn>
std::vector<Result> map_paths(const MarketModel& model, const GeneratorMatrix& g, const SimulationConfig& cfg, Fn&& fn,
                              std::span<const double> extra_nodes = {}) {
    std::vector<Result> results(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t p) {
        const PathNoise noise = draw_noise(model, g, cfg.n_steps, cfg.seed, p, extra_nodes);
        results[p] = fn(noise, p);
    });
    return results;
}

inline void require_solution(const PolicySpec& policy, const PhiPsiChiSolution* sol) {
    if (needs_solution(policy) && !sol) {
        throw Error(ErrorKind::InvalidArgument, "policy '" + policy.name + "' needs a solved ODE system");
    }
}

/// X(T) for every path, in path order.
inline std::vector<double> terminal_wealth_samples(const MarketModel& model, const GeneratorMatrix& g, const PolicySpec& policy,
                                                   const PhiPsiChiSolution* sol, const SimulationConfig& cfg) {
    require_solution(policy, sol);
    const PolicyContext ctx{&model, sol};
    return map_paths<double>(model, g, cfg, [&](const PathNoise& noise, std::size_t) {
        return integrate_wealth(noise, model, policy, ctx, model.initial_wealth());
    });
}

/// J = E[-(X(T) - d)^2].
inline McEstimate estimate_J(const MarketModel& model, const GeneratorMatrix& g, const PolicySpec& policy,
                             const PhiPsiChiSolution* sol, double target, const SimulationConfig& cfg) {
    if (cfg.n_paths < 2) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 2");
    const auto start = std::chrono::steady_clock::now();
    const ProblemSpec problem = quadratic_loss_problem(target);
    std::vector<double> rewards = terminal_wealth_samples(model, g, policy, sol, cfg);
    Eigen::VectorXd x(1);
    for (double& v : rewards) {
        x(0) = v;
        v = problem.terminal_reward(x, 0);
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summarize(rewards, cfg.seed, elapsed);
}

/// J for several policies on shared paths; the optimal feedback is evaluated
/// once per cell. Each estimate equals what estimate_J returns for that policy.
/// With `terminal_out`, X(T) is also returned as [policy][path].
inline std::vector<McEstimate> estimate_J_many(const MarketModel& model, const GeneratorMatrix& g, const std::vector<PolicySpec>& policies,
                                               const PhiPsiChiSolution* sol, double target, const SimulationConfig& cfg,
                                               std::vector<std::vector<double>>* terminal_out = nullptr) {
    if (cfg.n_paths < 2) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 2");
    for (const auto& policy : policies) require_solution(policy, sol);
    const auto start = std::chrono::steady_clock::now();
    const PolicyContext ctx{&model, sol};
    const auto per_path = map_paths<std::vector<double>>(model, g, cfg, [&](const PathNoise& noise, std::size_t) {
        const auto feedback = sol ? feedback_along(noise, model, *sol) : std::vector<FeedbackCoefficients>{};
        std::vector<double> xt;
        xt.reserve(policies.size());
        for (const auto& policy : policies) {
            xt.push_back(integrate_wealth(noise, model, policy, ctx, model.initial_wealth(), nullptr, nullptr, feedback));
        }
        return xt;
    });
    const ProblemSpec problem = quadratic_loss_problem(target);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<McEstimate> out;
    std::vector<double> rewards(cfg.n_paths);
    Eigen::VectorXd x(1);
    if (terminal_out) terminal_out->assign(policies.size(), std::vector<double>(cfg.n_paths));
    for (std::size_t k = 0; k < policies.size(); ++k) {
        for (std::size_t p = 0; p < cfg.n_paths; ++p) {
            x(0) = per_path[p][k];
            rewards[p] = problem.terminal_reward(x, 0);
            if (terminal_out) (*terminal_out)[k][p] = per_path[p][k];
        }
        out.push_back(summarize(rewards, cfg.seed, elapsed));
    }
    return out;
}

struct PolicyComparison {
    std::string name;
    McEstimate difference;  // J(base) - J(alternative), paired
};

/// Paired differences J(base) - J(alt) on common chain paths and Brownian increments.
inline std::vector<PolicyComparison> compare_policies(const MarketModel& model, const GeneratorMatrix& g, const PolicySpec& base,
                                                      const std::vector<PolicySpec>& alternatives, const PhiPsiChiSolution* sol,
                                                      double target, const SimulationConfig& cfg) {
    if (alternatives.empty()) throw Error(ErrorKind::InvalidArgument, "need at least one alternative policy");
    if (cfg.n_paths < 2) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 2");
    require_solution(base, sol);
    for (const auto& alt : alternatives) require_solution(alt, sol);
    const auto start = std::chrono::steady_clock::now();
    const PolicyContext ctx{&model, sol};
    auto loss = [target](double x) { return -(x - target) * (x - target); };
    const auto per_path = map_paths<std::vector<double>>(model, g, cfg, [&](const PathNoise& noise, std::size_t) {
        const auto feedback = sol ? feedback_along(noise, model, *sol) : std::vector<FeedbackCoefficients>{};
        auto terminal = [&](const PolicySpec& policy) {
            return integrate_wealth(noise, model, policy, ctx, model.initial_wealth(), nullptr, nullptr, feedback);
        };
        const double j_base = loss(terminal(base));
        std::vector<double> diffs;
        diffs.reserve(alternatives.size());
        for (const auto& alt : alternatives) diffs.push_back(j_base - loss(terminal(alt)));
        return diffs;
    });
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<PolicyComparison> out;
    std::vector<double> column(cfg.n_paths);
    for (std::size_t a = 0; a < alternatives.size(); ++a) {
        for (std::size_t p = 0; p < cfg.n_paths; ++p) column[p] = per_path[p][a];
        out.push_back({alternatives[a].name, summarize(column, cfg.seed, elapsed)});
    }
    return out;
}

}  // namespace rsmp
