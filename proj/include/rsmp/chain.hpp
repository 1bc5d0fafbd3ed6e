#pragma once

// Continuous-time finite-state Markov chain: generator validation, semigroup
// by uniformization, exact path sampling and the per-pair counting processes
// N_ij with their compensated martingales M_ij.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/error.hpp"
#include "rsmp/random.hpp"

namespace rsmp {

/// Validated D x D rate matrix: off-diagonals non-negative, rows sum to zero.
class GeneratorMatrix {
public:
    int num_states() const { return static_cast<int>(entries_.rows()); }
    double rate(int i, int j) const { return entries_(i, j); }
    /// Total jump intensity out of state i, i.e. -g_ii.
    double exit_rate(int i) const { return -entries_(i, i); }
    const Eigen::MatrixXd& entries() const { return entries_; }

    friend GeneratorMatrix validate_generator(const Eigen::MatrixXd& raw);

private:
    explicit GeneratorMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {}
    Eigen::MatrixXd entries_;
};

inline constexpr double kRowSumTolerance = 1e-12;

inline GeneratorMatrix validate_generator(const Eigen::MatrixXd& raw) {
    if (raw.rows() != raw.cols() || raw.rows() == 0) {
        throw Error(ErrorKind::NonSquare, "generator must be a non-empty square matrix, got " +
                                              std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()));
    }
    if (!raw.allFinite()) throw Error(ErrorKind::NonFinite, "generator has non-finite entries");
    const Eigen::Index d = raw.rows();
    Eigen::MatrixXd g = raw;
    for (Eigen::Index i = 0; i < d; ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (i == j) continue;
            if (raw(i, j) < 0.0) {
                throw Error(ErrorKind::NegativeOffDiagonal,
                            "g(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") = " + std::to_string(raw(i, j)));
            }
            off += raw(i, j);
        }
        const double row_sum = raw.row(i).sum();
        if (std::abs(row_sum) > kRowSumTolerance) {
            throw Error(ErrorKind::RowSumViolation,
                        "row " + std::to_string(i + 1) + " sums to " + std::to_string(row_sum));
        }
        // Restore the zero row sum bit-exactly.
        g(i, i) = -off;
    }
    return GeneratorMatrix(std::move(g));
}

namespace detail {

inline constexpr double kPoissonTail = 1e-14;
// Largest uniformization parameter q*t handled in one Poisson series.
inline constexpr double kMaxUniformizedRate = 20.0;

struct Uniformized {
    Eigen::MatrixXd kernel;  // I + S/q, entrywise non-negative, row sums <= 1
    double rate = 0.0;       // q
};

inline Uniformized uniformize(const Eigen::MatrixXd& sub_generator) {
    Uniformized u;
    u.rate = 0.0;
    for (Eigen::Index i = 0; i < sub_generator.rows(); ++i) u.rate = std::max(u.rate, -sub_generator(i, i));
    const Eigen::Index d = sub_generator.rows();
    u.kernel = Eigen::MatrixXd::Identity(d, d);
    if (u.rate > 0.0) u.kernel += sub_generator / u.rate;
    return u;
}

/// Sum over k of Poisson(lambda) weights times kernel^k applied to v, truncated
/// once the remaining Poisson mass drops below kPoissonTail.
template <class Apply>
Eigen::MatrixXd poisson_series(double lambda, const Eigen::MatrixXd& start, Apply&& apply_kernel) {
    double weight = std::exp(-lambda);
    double mass = weight;
    Eigen::MatrixXd term = start;
    Eigen::MatrixXd sum = weight * term;
    for (int k = 1; k < 100000; ++k) {
        if (1.0 - mass < kPoissonTail && k > lambda) break;
        weight *= lambda / k;
        term = apply_kernel(term);
        sum += weight * term;
        mass += weight;
        if (weight == 0.0 && k > lambda) break;
    }
    return sum;
}

/// exp(S t) for a sub-generator S (non-negative off-diagonals, row sums <= 0).
inline Eigen::MatrixXd subgenerator_exp(const Eigen::MatrixXd& sub_generator, double t) {
    const Eigen::Index d = sub_generator.rows();
    const Uniformized u = uniformize(sub_generator);
    if (u.rate == 0.0 || t == 0.0) return Eigen::MatrixXd::Identity(d, d);
    const int pieces = std::max(1, static_cast<int>(std::ceil(u.rate * t / kMaxUniformizedRate)));
    const double lambda = u.rate * t / pieces;
    const Eigen::MatrixXd piece = poisson_series(lambda, Eigen::MatrixXd::Identity(d, d),
                                                 [&](const Eigen::MatrixXd& m) { return Eigen::MatrixXd(m * u.kernel); });
    Eigen::MatrixXd out = piece;
    for (int p = 1; p < pieces; ++p) out = out * piece;
    return out;
}

/// exp(S t) v without forming the full matrix exponential.
inline Eigen::VectorXd subgenerator_exp_apply(const Eigen::MatrixXd& sub_generator, double t, Eigen::VectorXd v) {
    const Uniformized u = uniformize(sub_generator);
    if (u.rate == 0.0 || t == 0.0) return v;
    const int pieces = std::max(1, static_cast<int>(std::ceil(u.rate * t / kMaxUniformizedRate)));
    const double lambda = u.rate * t / pieces;
    for (int p = 0; p < pieces; ++p) {
        v = poisson_series(lambda, v, [&](const Eigen::MatrixXd& m) { return Eigen::MatrixXd(u.kernel * m); });
    }
    return v;
}

}  // namespace detail

/// exp(G t), computed by uniformization. Rows sum to one within 1e-12.
inline Eigen::MatrixXd transition_matrix(const GeneratorMatrix& g, double t) {
    if (!(t >= 0.0)) throw Error(ErrorKind::NegativeTime, "t = " + std::to_string(t));
    Eigen::MatrixXd p = detail::subgenerator_exp(g.entries(), t);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            if (p(i, j) < 0.0 && p(i, j) > -1e-12) p(i, j) = 0.0;
        }
    }
    return p;
}

/// One realized trajectory of the chain on [0, horizon]. States are 0-based.
struct ChainPath {
    int initial_state = 0;
    std::vector<double> jump_times;  // strictly increasing, in (0, horizon]
    std::vector<int> jump_targets;   // state entered at each jump
    double horizon = 0.0;

    std::size_t num_jumps() const { return jump_times.size(); }

    /// Right-continuous state alpha(t).
    int state_at(double t) const {
        const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
        if (it == jump_times.begin()) return initial_state;
        return jump_targets[static_cast<std::size_t>(it - jump_times.begin()) - 1];
    }

    /// Left limit alpha(t-).
    int state_before(double t) const {
        const auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
        if (it == jump_times.begin()) return initial_state;
        return jump_targets[static_cast<std::size_t>(it - jump_times.begin()) - 1];
    }

    int final_state() const { return jump_targets.empty() ? initial_state : jump_targets.back(); }

    /// State occupied just before jump k.
    int source_of_jump(std::size_t k) const { return k == 0 ? initial_state : jump_targets[k - 1]; }

    /// Calls fn(begin, end, state) for each maximal constant piece of the
    /// path inside [from, to].
    template <class Fn>
    void for_each_segment(double from, double to, Fn&& fn) const {
        if (!(to > from)) return;
        double left = from;
        int state = state_at(from);
        auto it = std::upper_bound(jump_times.begin(), jump_times.end(), from);
        for (; it != jump_times.end() && *it < to; ++it) {
            fn(left, *it, state);
            left = *it;
            state = jump_targets[static_cast<std::size_t>(it - jump_times.begin())];
        }
        fn(left, to, state);
    }

    /// Time spent in each state during [0, t].
    std::vector<double> occupation(int num_states, double t) const {
        std::vector<double> occ(static_cast<std::size_t>(num_states), 0.0);
        for_each_segment(0.0, std::min(t, horizon), [&](double a, double b, int s) { occ[static_cast<std::size_t>(s)] += b - a; });
        return occ;
    }
};

/// Exact jump-by-jump simulation driven by the supplied engine.
template <class Engine>
ChainPath sample_path(const GeneratorMatrix& g, int initial_state, double horizon, Engine& engine) {
    const int d = g.num_states();
    if (initial_state < 0 || initial_state >= d) {
        throw Error(ErrorKind::InvalidInitialState,
                    "initial state " + std::to_string(initial_state + 1) + " not in 1.." + std::to_string(d));
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw Error(ErrorKind::InvalidArgument, "horizon must be positive and finite");
    }
    ChainPath path;
    path.initial_state = initial_state;
    path.horizon = horizon;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double t = 0.0;
    int state = initial_state;
    while (true) {
        const double exit = g.exit_rate(state);
        if (exit <= 0.0) break;  // absorbing
        std::exponential_distribution<double> holding(exit);
        t += holding(engine);
        if (t > horizon) break;
        // Next state with probability g_ij / exit.
        const double target = uniform(engine) * exit;
        double cumulative = 0.0;
        int next = -1;
        int last_positive = -1;
        for (int j = 0; j < d; ++j) {
            if (j == state || g.rate(state, j) <= 0.0) continue;
            last_positive = j;
            cumulative += g.rate(state, j);
            if (target < cumulative) {
                next = j;
                break;
            }
        }
        if (next < 0) next = last_positive;
        path.jump_times.push_back(t);
        path.jump_targets.push_back(next);
        state = next;
    }
    return path;
}

/// Path for (seed, path index) on the dedicated chain stream.
inline ChainPath sample_path(const GeneratorMatrix& g, int initial_state, double horizon, std::uint64_t seed,
                             std::uint64_t path_index = 0) {
    auto engine = path_engine(seed, path_index, Stream::chain);
    return sample_path(g, initial_state, horizon, engine);
}

/// N_ij, the compensator integral of lambda_ij and M_ij = N_ij - compensator,
/// evaluated at every jump time and at the horizon.
struct CountingRecord {
    int num_states = 0;
    std::vector<double> times;  // jump times followed by the horizon
    std::vector<Eigen::MatrixXd> counts;
    std::vector<Eigen::MatrixXd> compensators;
    std::vector<Eigen::MatrixXd> martingales;

    const Eigen::MatrixXd& final_counts() const { return counts.back(); }
    const Eigen::MatrixXd& final_martingales() const { return martingales.back(); }
};

inline CountingRecord counting_record(const ChainPath& path, const GeneratorMatrix& g) {
    const int d = g.num_states();
    auto check_state = [d](int s) {
        if (s < 0 || s >= d) throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(s + 1) + " with D = " + std::to_string(d));
    };
    check_state(path.initial_state);
    for (int s : path.jump_targets) check_state(s);

    CountingRecord rec;
    rec.num_states = d;
    Eigen::MatrixXd n = Eigen::MatrixXd::Zero(d, d);
    std::vector<double> occ(static_cast<std::size_t>(d), 0.0);
    double last = 0.0;
    auto snapshot = [&](double t) {
        Eigen::MatrixXd comp(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) comp(i, j) = (i == j) ? 0.0 : g.rate(i, j) * occ[static_cast<std::size_t>(i)];
        }
        rec.times.push_back(t);
        rec.counts.push_back(n);
        rec.martingales.push_back(n - comp);
        rec.compensators.push_back(std::move(comp));
    };
    for (std::size_t k = 0; k < path.num_jumps(); ++k) {
        const int from = path.source_of_jump(k);
        occ[static_cast<std::size_t>(from)] += path.jump_times[k] - last;
        last = path.jump_times[k];
        n(from, path.jump_targets[k]) += 1.0;
        snapshot(last);
    }
    occ[static_cast<std::size_t>(path.final_state())] += path.horizon - last;
    snapshot(path.horizon);
    return rec;
}

}  // namespace rsmp
