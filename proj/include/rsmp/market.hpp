#pragma once

// Regime-switching market with piecewise-constant coefficients, and the
// generic problem data (running cost, terminal reward) the Hamiltonian needs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rsmp/chain.hpp"
#include "rsmp/error.hpp"

namespace rsmp {

struct Coefficients {
    double rate = 0.0;        // r
    double drift = 0.0;       // b
    double volatility = 0.0;  // sigma
    double price_of_risk = 0.0;  // theta = (b - r) / sigma
};

/// Cell-by-regime table, cell-major.
using CoefficientTable = std::vector<std::vector<double>>;

/// Market of one risky asset and cash. Cells [t_k, t_{k+1}) are right-open
/// except the last, which is closed at the horizon. States are 0-based.
class MarketModel {
public:
    MarketModel(int num_states, double horizon, double initial_wealth, int initial_state,
                std::vector<double> breakpoints, CoefficientTable rate, CoefficientTable drift,
                CoefficientTable volatility)
        : num_states_(num_states),
          horizon_(horizon),
          initial_wealth_(initial_wealth),
          initial_state_(initial_state),
          breakpoints_(std::move(breakpoints)),
          rate_(std::move(rate)),
          drift_(std::move(drift)),
          volatility_(std::move(volatility)) {
        validate();
    }

    /// Single cell covering [0, horizon].
    static MarketModel constant(double horizon, double initial_wealth, int initial_state,
                                const std::vector<double>& rate, const std::vector<double>& drift,
                                const std::vector<double>& volatility) {
        return MarketModel(static_cast<int>(rate.size()), horizon, initial_wealth, initial_state, {0.0, horizon},
                           {rate}, {drift}, {volatility});
    }

    int num_states() const { return num_states_; }
    double horizon() const { return horizon_; }
    double initial_wealth() const { return initial_wealth_; }
    int initial_state() const { return initial_state_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    std::size_t num_cells() const { return breakpoints_.size() - 1; }

    std::size_t cell_index(double t) const {
        if (!(t >= 0.0 && t <= horizon_)) {
            throw Error(ErrorKind::TimeOutOfRange, "t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon_) + "]");
        }
        if (breakpoints_.size() == 2) return 0;
        const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        const auto k = static_cast<std::size_t>(it - breakpoints_.begin());
        return std::min(k == 0 ? 0 : k - 1, num_cells() - 1);
    }

    Coefficients cell(std::size_t k, int i) const {
        check_state(i);
        Coefficients c;
        c.rate = rate_[k][static_cast<std::size_t>(i)];
        c.drift = drift_[k][static_cast<std::size_t>(i)];
        c.volatility = volatility_[k][static_cast<std::size_t>(i)];
        c.price_of_risk = (c.drift - c.rate) / c.volatility;
        return c;
    }

    Coefficients coefficients_at(double t, int i) const { return cell(cell_index(t), i); }

    const CoefficientTable& rate_table() const { return rate_; }
    const CoefficientTable& drift_table() const { return drift_; }
    const CoefficientTable& volatility_table() const { return volatility_; }

    MarketModel with_initial_wealth(double x0) const {
        MarketModel m = *this;
        m.initial_wealth_ = x0;
        m.validate();
        return m;
    }

    void check_state(int i) const {
        if (i < 0 || i >= num_states_) {
            throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(i + 1) + " not in 1.." + std::to_string(num_states_));
        }
    }

private:
    void validate() const {
        if (num_states_ < 1) throw Error(ErrorKind::DimensionMismatch, "market needs at least one regime");
        if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
        if (!std::isfinite(initial_wealth_)) throw Error(ErrorKind::NonFinite, "initial wealth");
        if (initial_state_ < 0 || initial_state_ >= num_states_) {
            throw Error(ErrorKind::InvalidInitialState, "initial state " + std::to_string(initial_state_ + 1));
        }
        if (breakpoints_.size() < 2 || breakpoints_.front() != 0.0 || breakpoints_.back() != horizon_) {
            throw Error(ErrorKind::InvalidArgument, "breakpoints must run from 0 to the horizon");
        }
        for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
            if (!(breakpoints_[k] > breakpoints_[k - 1])) throw Error(ErrorKind::InvalidArgument, "breakpoints must increase");
        }
        const std::size_t cells = num_cells();
        auto check_table = [&](const CoefficientTable& table, const char* name) {
            if (table.size() != cells) {
                throw Error(ErrorKind::DimensionMismatch, std::string(name) + " table has " + std::to_string(table.size()) +
                                                              " cells, expected " + std::to_string(cells));
            }
            for (const auto& row : table) {
                if (row.size() != static_cast<std::size_t>(num_states_)) {
                    throw Error(ErrorKind::DimensionMismatch, std::string(name) + " table row has " + std::to_string(row.size()) +
                                                                  " regimes, expected " + std::to_string(num_states_));
                }
                for (double v : row) {
                    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(name) + " table");
                }
            }
        };
        check_table(rate_, "rate");
        check_table(drift_, "drift");
        check_table(volatility_, "volatility");
        for (std::size_t k = 0; k < cells; ++k) {
            for (int i = 0; i < num_states_; ++i) {
                if (volatility_[k][static_cast<std::size_t>(i)] == 0.0) {
                    throw Error(ErrorKind::ZeroVolatility,
                                "sigma is zero in cell " + std::to_string(k) + ", regime " + std::to_string(i + 1));
                }
                const double theta = (drift_[k][static_cast<std::size_t>(i)] - rate_[k][static_cast<std::size_t>(i)]) /
                                     volatility_[k][static_cast<std::size_t>(i)];
                if (!std::isfinite(theta)) throw Error(ErrorKind::NonFinite, "market price of risk");
            }
        }
    }

    int num_states_;
    double horizon_;
    double initial_wealth_;
    int initial_state_;
    std::vector<double> breakpoints_;
    CoefficientTable rate_;
    CoefficientTable drift_;
    CoefficientTable volatility_;
};

/// Control set: all of R^P, or a box.
struct ControlSet {
    std::optional<std::vector<std::pair<double, double>>> bounds;

    bool contains(const Eigen::VectorXd& u) const {
        if (!bounds) return true;
        for (Eigen::Index k = 0; k < u.size(); ++k) {
            const auto& [lo, hi] = (*bounds)[static_cast<std::size_t>(k)];
            if (u(k) < lo || u(k) > hi) return false;
        }
        return true;
    }
};

/// Generic problem data for the criterion E[ int f dt + h(X(T), alpha(T)) ].
struct ProblemSpec {
    int state_dim = 1;
    int control_dim = 1;
    ControlSet controls;
    std::function<double(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u, int i)> running_cost;
    std::function<double(const Eigen::VectorXd& x, int i)> terminal_reward;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, int i)> terminal_gradient;
};

/// f = 0, h(x) = -(x - d)^2.
inline ProblemSpec quadratic_loss_problem(double target) {
    ProblemSpec spec;
    spec.running_cost = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, int) { return 0.0; };
    spec.terminal_reward = [target](const Eigen::VectorXd& x, int) {
        const double e = x(0) - target;
        return -e * e;
    };
    spec.terminal_gradient = [target](const Eigen::VectorXd& x, int) {
        Eigen::VectorXd g(1);
        g(0) = -2.0 * (x(0) - target);
        return g;
    };
    return spec;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& node, const char* key, const std::string& where) {
    if (!node.is_object() || !node.contains(key)) {
        throw Error(ErrorKind::MissingField, where.empty() ? std::string(key) : where + "." + key);
    }
    return node.at(key);
}

inline double as_number(const nlohmann::json& v, const std::string& where) {
    if (!v.is_number()) throw Error(ErrorKind::ConfigParse, where + " must be a number");
    return v.get<double>();
}

/// Accepts either a per-regime list (single cell) or a per-cell list of lists.
inline CoefficientTable read_table(const nlohmann::json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw Error(ErrorKind::ConfigParse, where + " must be a non-empty array");
    CoefficientTable table;
    if (v.front().is_number()) {
        std::vector<double> row;
        for (const auto& x : v) row.push_back(as_number(x, where));
        table.push_back(std::move(row));
        return table;
    }
    for (const auto& r : v) {
        if (!r.is_array()) throw Error(ErrorKind::ConfigParse, where + " rows must be arrays");
        std::vector<double> row;
        for (const auto& x : r) row.push_back(as_number(x, where));
        table.push_back(std::move(row));
    }
    return table;
}

}  // namespace detail

inline Eigen::MatrixXd read_matrix(const nlohmann::json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw Error(ErrorKind::ConfigParse, where + " must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    Eigen::Index cols = -1;
    for (const auto& r : v) {
        if (!r.is_array()) throw Error(ErrorKind::ConfigParse, where + " rows must be arrays");
        if (cols >= 0 && static_cast<Eigen::Index>(r.size()) != cols) throw Error(ErrorKind::NonSquare, where + " rows differ in length");
        cols = static_cast<Eigen::Index>(r.size());
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = detail::as_number(v[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], where);
    }
    return m;
}

/// Generator from the config's "generator" entry.
inline GeneratorMatrix load_generator(const nlohmann::json& config) {
    return validate_generator(read_matrix(detail::require(config, "generator", ""), "generator"));
}

/// Market from the config's "market" entry, cross-checked against the generator.
/// "initial_state" is 1-based in the document.
inline MarketModel load_market(const nlohmann::json& config) {
    const auto& m = detail::require(config, "market", "");
    const double horizon = detail::as_number(detail::require(m, "horizon", "market"), "market.horizon");
    const double x0 = detail::as_number(detail::require(m, "initial_wealth", "market"), "market.initial_wealth");
    int i0 = 1;
    if (m.contains("initial_state")) i0 = static_cast<int>(detail::as_number(m.at("initial_state"), "market.initial_state"));
    CoefficientTable rate = detail::read_table(detail::require(m, "rate", "market"), "market.rate");
    CoefficientTable drift = detail::read_table(detail::require(m, "drift", "market"), "market.drift");
    CoefficientTable vol = detail::read_table(detail::require(m, "volatility", "market"), "market.volatility");
    std::vector<double> breakpoints{0.0, horizon};
    if (m.contains("breakpoints")) {
        breakpoints.clear();
        for (const auto& b : m.at("breakpoints")) breakpoints.push_back(detail::as_number(b, "market.breakpoints"));
    }
    const GeneratorMatrix g = load_generator(config);
    const int d = static_cast<int>(rate.front().size());
    if (g.num_states() != d) {
        throw Error(ErrorKind::DimensionMismatch, "market has " + std::to_string(d) + " regimes but generator is " +
                                                      std::to_string(g.num_states()) + "x" + std::to_string(g.num_states()));
    }
    return MarketModel(d, horizon, x0, i0 - 1, std::move(breakpoints), std::move(rate), std::move(drift), std::move(vol));
}

}  // namespace rsmp
