#include <cmath>

#include <gtest/gtest.h>

#include "rsmp/simulate.hpp"

using namespace rsmp;

namespace {

GeneratorMatrix no_switching() { return validate_generator(Eigen::MatrixXd::Zero(1, 1)); }
MarketModel single(double x0 = 0.8) { return MarketModel::constant(1.0, x0, 0, {0.05}, {0.11}, {0.3}); }

MarketModel tworeg() { return MarketModel::constant(1.0, 1.0, 0, {0.03, 0.07}, {0.06, 0.16}, {0.3, 0.3}); }
GeneratorMatrix tworeg_generator() {
    Eigen::MatrixXd g(2, 2);
    g << -1, 1, 2, -2;
    return validate_generator(g);
}

bool within_3se(const McEstimate& est, double target) { return std::abs(est.mean - target) <= 3.0 * est.std_error; }

}  // namespace

TEST(Summarize, MeanAndStandardError) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto est = summarize(v, 9);
    EXPECT_DOUBLE_EQ(est.mean, 2.5);
    EXPECT_DOUBLE_EQ(est.std_error, std::sqrt(5.0 / 3.0) / 2.0);
    EXPECT_EQ(est.n_paths, 4u);
    EXPECT_THROW(summarize(std::vector<double>{1.0}), Error);
}

TEST(Noise, GridContainsJumpsAndBreakpointsAndIncrementsHaveRightVariance) {
    const MarketModel m(2, 1.0, 1.0, 0, {0.0, 0.37, 1.0}, {{0.03, 0.07}, {0.03, 0.07}}, {{0.06, 0.16}, {0.06, 0.16}},
                        {{0.3, 0.3}, {0.3, 0.3}});
    const auto g = tworeg_generator();
    double sum_sq_ratio = 0.0;
    std::size_t cells = 0;
    for (std::uint64_t p = 0; p < 200; ++p) {
        const auto noise = draw_noise(m, g, 64, 5, p);
        EXPECT_EQ(noise.grid.front(), 0.0);
        EXPECT_EQ(noise.grid.back(), 1.0);
        EXPECT_TRUE(std::is_sorted(noise.grid.begin(), noise.grid.end()));
        EXPECT_NE(std::find(noise.grid.begin(), noise.grid.end(), 0.37), noise.grid.end());
        for (double tj : noise.chain.jump_times) EXPECT_NE(std::find(noise.grid.begin(), noise.grid.end(), tj), noise.grid.end());
        for (std::size_t l = 0; l < noise.num_cells(); ++l) {
            EXPECT_EQ(noise.regime[l], noise.chain.state_at(noise.grid[l]));
            const double dt = noise.grid[l + 1] - noise.grid[l];
            sum_sq_ratio += noise.dW[l] * noise.dW[l] / dt;
            ++cells;
        }
    }
    // E[dW^2 / dt] = 1; the ratio of a chi-square(1) average over ~13000 cells.
    EXPECT_NEAR(sum_sq_ratio / static_cast<double>(cells), 1.0, 0.05);
}

TEST(Noise, DoublingStepsRefinesTheSamePath) {
    const auto m = single();
    const auto coarse = draw_noise(m, no_switching(), 8, 3, 11);
    const auto fine = draw_noise(m, no_switching(), 16, 3, 11);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(coarse.dW[k], fine.dW[2 * k] + fine.dW[2 * k + 1], 1e-14);
}

TEST(SimulateWealth, ZeroPositionIsDeterministic) {
    const auto m = single();
    const auto path = simulate_wealth(m, no_switching(), constant_policy(0.0), nullptr, 0.8, 1u << 14, 1);
    EXPECT_EQ(path.wealth.front(), 0.8);
    EXPECT_LT(std::abs(path.wealth.back() - 0.8 * std::exp(0.05)), 1e-4 * 0.8);
    EXPECT_EQ(path.wealth.size(), path.time_grid.size());
    EXPECT_EQ(path.controls.size() + 1, path.time_grid.size());
}

TEST(SimulateWealth, VolatilityScaleInvariance) {
    const auto a = MarketModel::constant(1.0, 1.0, 0, {0.0}, {0.125}, {0.5});
    const auto b = MarketModel::constant(1.0, 1.0, 0, {0.0}, {0.25}, {1.0});
    const auto pa = simulate_wealth(a, no_switching(), constant_policy(1.0), nullptr, 1.0, 512, 21);
    const auto pb = simulate_wealth(b, no_switching(), constant_policy(0.5), nullptr, 1.0, 512, 21);
    ASSERT_EQ(pa.wealth.size(), pb.wealth.size());
    for (std::size_t k = 0; k < pa.wealth.size(); ++k) EXPECT_EQ(pa.wealth[k], pb.wealth[k]);
}

TEST(SimulateWealth, OptimalRidesTheDiscountedTarget) {
    const auto m = single(std::exp(-0.05));
    const auto sol = solve_phi_psi_chi(m, no_switching(), 1.0);
    for (std::uint64_t p = 0; p < 20; ++p) {
        const auto path = simulate_wealth(m, no_switching(), optimal_policy(), &sol, m.initial_wealth(), 1u << 14, 4, p);
        EXPECT_LT(std::abs(path.wealth.back() - 1.0), 5e-3);
    }
}

TEST(SimulateWealth, ReproducibleAndSeedSensitive) {
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, 1.2);
    const auto a = simulate_wealth(m, g, optimal_policy(), &sol, 1.0, 256, 8, 3);
    const auto b = simulate_wealth(m, g, optimal_policy(), &sol, 1.0, 256, 8, 3);
    const auto c = simulate_wealth(m, g, optimal_policy(), &sol, 1.0, 256, 9, 3);
    EXPECT_EQ(a.wealth, b.wealth);
    EXPECT_NE(a.wealth.back(), c.wealth.back());
    EXPECT_THROW(simulate_wealth(m, g, optimal_policy(), nullptr, 1.0, 256, 8), Error);
    EXPECT_THROW(simulate_wealth(m, g, optimal_policy(), &sol, 1.0, 0, 8), Error);
}

TEST(EstimateJ, NoRiskPremiumIsDeterministic) {
    const auto m = MarketModel::constant(1.0, 0.8, 0, {0.05}, {0.05}, {0.3});
    const auto sol = solve_phi_psi_chi(m, no_switching(), 1.0);
    const auto est = estimate_J(m, no_switching(), optimal_policy(), &sol, 1.0, {64, 1024, 2, 0});
    const double exact = -std::pow(0.8 * std::exp(0.05) - 1.0, 2);
    EXPECT_LT(std::abs(est.mean - exact), 1e-3);
    EXPECT_LT(est.std_error, 1e-12);
}

TEST(EstimateJ, SingleRegimeMatchesAnalyticValue) {
    const auto m = single();
    const auto sol = solve_phi_psi_chi(m, no_switching(), 1.0);
    const auto est = estimate_J(m, no_switching(), optimal_policy(), &sol, 1.0, {100000, 256, 17, 0});
    const double exact = -std::exp(-0.04) * std::pow(0.8 * std::exp(0.05) - 1.0, 2);
    EXPECT_NEAR(exact, -0.0242846, 1e-7);
    EXPECT_TRUE(within_3se(est, exact)) << est.mean << " +- " << est.std_error << " vs " << exact;
}

TEST(EstimateJ, TwoRegimeMatchesValueFunction) {
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, 1.2);
    const auto est = estimate_J(m, g, optimal_policy(), &sol, 1.2, {40000, 256, 23, 0});
    const double v = value_function(sol, 0.0, 1.0, 0);
    EXPECT_TRUE(within_3se(est, v)) << est.mean << " +- " << est.std_error << " vs " << v;
}

TEST(EstimateJ, IndependentOfWorkerCount) {
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, 1.2);
    const auto one = estimate_J(m, g, optimal_policy(), &sol, 1.2, {500, 64, 99, 1});
    const auto three = estimate_J(m, g, optimal_policy(), &sol, 1.2, {500, 64, 99, 3});
    const auto eight = estimate_J(m, g, optimal_policy(), &sol, 1.2, {500, 64, 99, 8});
    EXPECT_EQ(one.mean, three.mean);
    EXPECT_EQ(one.std_error, three.std_error);
    EXPECT_EQ(one.mean, eight.mean);
}

TEST(ComparePolicies, IdenticalAlternativeGivesExactZero) {
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, 1.2);
    const auto res = compare_policies(m, g, optimal_policy(), {optimal_policy()}, &sol, 1.2, {200, 64, 5, 0});
    ASSERT_EQ(res.size(), 1u);
    EXPECT_EQ(res[0].difference.mean, 0.0);
    EXPECT_EQ(res[0].difference.std_error, 0.0);
    EXPECT_THROW(compare_policies(m, g, optimal_policy(), {}, &sol, 1.2, {200, 64, 5, 0}), Error);
}

TEST(ComparePolicies, OptimumBeatsShiftAndInaction) {
    const auto m = tworeg();
    const auto g = tworeg_generator();
    const auto sol = solve_phi_psi_chi(m, g, 1.2);
    const auto res = compare_policies(m, g, optimal_policy(), {shifted(optimal_policy(), 0.1), constant_policy(0.0)}, &sol, 1.2,
                                      {20000, 128, 31, 0});
    for (const auto& r : res) EXPECT_GT(r.difference.mean, 3.0 * r.difference.std_error) << r.name;
}
