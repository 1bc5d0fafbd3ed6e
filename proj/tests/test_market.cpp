#include <gtest/gtest.h>

#include "rsmp/market.hpp"

using namespace rsmp;
using nlohmann::json;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::InvalidArgument;
}

json two_regime_config() {
    return json::parse(R"({
      "market": {"horizon": 1.0, "initial_wealth": 1.0, "initial_state": 1,
                 "rate": [0.03, 0.07], "drift": [0.06, 0.16], "volatility": [0.3, 0.3]},
      "generator": [[-1, 1], [2, -2]]
    })");
}

}  // namespace

TEST(Market, PriceOfRisk) {
    const auto m = MarketModel::constant(1.0, 1.0, 0, {0.05}, {0.11}, {0.3});
    for (double t : {0.0, 0.4, 1.0}) {
        EXPECT_NEAR(m.coefficients_at(t, 0).price_of_risk, 0.2, 1e-15);
    }
}

TEST(Market, ZeroExcessReturnGivesZeroTheta) {
    const auto m = MarketModel::constant(1.0, 1.0, 0, {0.05, 0.04}, {0.05, 0.10}, {0.3, 0.2});
    EXPECT_EQ(m.coefficients_at(0.5, 0).price_of_risk, 0.0);
    EXPECT_GT(m.coefficients_at(0.5, 1).price_of_risk, 0.0);
}

TEST(Market, BreakpointBelongsToRightCell) {
    const MarketModel m(1, 2.0, 1.0, 0, {0.0, 0.5, 2.0}, {{0.01}, {0.02}}, {{0.05}, {0.08}}, {{0.2}, {0.4}});
    EXPECT_EQ(m.coefficients_at(0.5, 0).rate, 0.02);
    EXPECT_EQ(m.coefficients_at(std::nextafter(0.5, 0.0), 0).rate, 0.01);
    EXPECT_EQ(m.coefficients_at(2.0, 0).rate, 0.02);  // last cell closed
    EXPECT_EQ(kind_of([&] { m.coefficients_at(2.0000001, 0); }), ErrorKind::TimeOutOfRange);
    EXPECT_EQ(kind_of([&] { m.coefficients_at(-1e-9, 0); }), ErrorKind::TimeOutOfRange);
    EXPECT_EQ(kind_of([&] { m.coefficients_at(1.0, 1); }), ErrorKind::StateOutOfRange);
}

TEST(Market, PiecewiseConstantIsBitIdenticalWithinCell) {
    const MarketModel m(2, 1.0, 1.0, 0, {0.0, 0.3, 1.0}, {{0.01, 0.02}, {0.03, 0.04}}, {{0.05, 0.07}, {0.09, 0.11}},
                        {{0.2, 0.3}, {0.4, 0.5}});
    for (int i = 0; i < 2; ++i) {
        const auto a = m.coefficients_at(0.31, i);
        const auto b = m.coefficients_at(0.99, i);
        EXPECT_EQ(a.price_of_risk, b.price_of_risk);
        EXPECT_EQ(a.price_of_risk, (a.drift - a.rate) / a.volatility);
    }
}

TEST(Market, RejectsZeroVolatility) {
    EXPECT_EQ(kind_of([] { MarketModel::constant(1.0, 1.0, 0, {0.05, 0.05}, {0.1, 0.1}, {0.3, 0.0}); }), ErrorKind::ZeroVolatility);
}

TEST(LoadMarket, TwoRegimeConfig) {
    const auto m = load_market(two_regime_config());
    EXPECT_EQ(m.num_states(), 2);
    EXPECT_EQ(m.num_cells(), 1u);
    EXPECT_EQ(m.initial_state(), 0);
    EXPECT_NEAR(m.coefficients_at(0.0, 1).price_of_risk, 0.3, 1e-15);
}

TEST(LoadMarket, ZeroVolatilityInSecondRegime) {
    auto cfg = two_regime_config();
    cfg["market"]["volatility"] = {0.3, 0.0};
    EXPECT_EQ(kind_of([&] { load_market(cfg); }), ErrorKind::ZeroVolatility);
}

TEST(LoadMarket, GeneratorDimensionMismatch) {
    auto cfg = two_regime_config();
    cfg["generator"] = json::parse("[[-1, 1, 0], [1, -1, 0], [0, 0, 0]]");
    EXPECT_EQ(kind_of([&] { load_market(cfg); }), ErrorKind::DimensionMismatch);
}

TEST(LoadMarket, MissingField) {
    auto cfg = two_regime_config();
    cfg["market"].erase("drift");
    EXPECT_EQ(kind_of([&] { load_market(cfg); }), ErrorKind::MissingField);
    auto no_gen = two_regime_config();
    no_gen.erase("generator");
    EXPECT_EQ(kind_of([&] { load_market(no_gen); }), ErrorKind::MissingField);
}

TEST(LoadMarket, MinimalSingleRegime) {
    const auto cfg = json::parse(R"({
      "market": {"horizon": 1, "initial_wealth": 0.8, "rate": [0.05], "drift": [0.11], "volatility": [0.3]},
      "generator": [[0]]
    })");
    const auto m = load_market(cfg);
    EXPECT_EQ(m.num_states(), 1);
    EXPECT_EQ(m.num_cells(), 1u);
}

TEST(LoadMarket, PiecewiseTables) {
    const auto cfg = json::parse(R"({
      "market": {"horizon": 2, "initial_wealth": 1, "breakpoints": [0, 1, 2],
                 "rate": [[0.01, 0.02], [0.03, 0.04]], "drift": [[0.05, 0.06], [0.07, 0.08]],
                 "volatility": [[0.2, 0.2], [0.3, 0.3]]},
      "generator": [[-1, 1], [1, -1]]
    })");
    const auto m = load_market(cfg);
    EXPECT_EQ(m.num_cells(), 2u);
    EXPECT_EQ(m.coefficients_at(1.5, 1).rate, 0.04);
    auto bad = cfg;
    bad["market"]["rate"] = json::parse("[[0.01, 0.02]]");
    EXPECT_EQ(kind_of([&] { load_market(bad); }), ErrorKind::DimensionMismatch);
}

TEST(ProblemSpec, QuadraticLoss) {
    const auto spec = quadratic_loss_problem(1.5);
    Eigen::VectorXd x(1);
    x << 0.5;
    EXPECT_EQ(spec.terminal_reward(x, 0), -1.0);
    EXPECT_EQ(spec.terminal_gradient(x, 0)(0), 2.0);
    EXPECT_EQ(spec.running_cost(0.0, x, x, 0), 0.0);
    EXPECT_TRUE(spec.controls.contains(x));
}
