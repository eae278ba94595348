#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "penf/montecarlo.hpp"

using namespace penf::mc;

namespace {

// Reference SplitMix64 step; the first output from state 0 is 0xe220a8397b1dcdaf.
std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

McConfig small(std::size_t paths, std::uint64_t seed) {
    McConfig c;
    c.dt = 1.0 / 256;
    c.paths = paths;
    c.seed = seed;
    return c;
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("counter-based generator") {
    CHECK(splitmix(0) == 0xe220a8397b1dcdafULL);
    for (std::uint64_t seed : {0ULL, 1ULL, 20240601ULL})
        for (std::uint64_t path : {0ULL, 7ULL})
            for (std::uint64_t ctr : {std::uint64_t{0}, std::uint64_t{1}, kUniformStream})
                CHECK(counter_draw(seed, path, ctr) == splitmix(splitmix(splitmix(seed) ^ path) ^ ctr));
    double u = counter_uniform(3, 4, 5);
    CHECK(u > 0);
    CHECK(u < 1);
    CHECK(u == counter_uniform(3, 4, 5));

    // Box-Muller cosine branch on counters 2c and 2c+1.
    double u1 = counter_uniform(9, 2, 10), u2 = counter_uniform(9, 2, 11);
    CHECK(counter_normal(9, 2, 5) == doctest::Approx(std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2)).epsilon(1e-15));

    double s = 0, s2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double z = counter_normal(1, i, 0);
        s += z;
        s2 += z * z;
    }
    CHECK(std::abs(s / n) < 4 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("configuration validation") {
    auto c = small(10, 1);
    CHECK_NOTHROW(validate(c));
    c.dt = 0;
    CHECK_THROWS_AS(validate(c), McError);
    c = small(0, 1);
    CHECK_THROWS_AS(validate(c), McError);
    c = small(10, 1);
    c.u_grid = {0, 0.3};
    CHECK_THROWS_AS(validate(c), McError);
    c = small(10, 1);
    c.lambda = -1;
    CHECK_THROWS_AS(validate(c), McError);
}

TEST_CASE("base paths") {
    auto c = small(200, 5);
    c.lambda = 1;
    c.lambda_slope = 2;
    auto b = simulate_base_paths(c);
    REQUIRE(b.records() == 5);
    for (std::size_t r = 0; r < b.records(); ++r) {
        double t = b.record_time[r];
        CHECK(b.cumulative_intensity[r] == doctest::Approx(t + t * t));
        for (std::size_t p = 0; p < c.paths; ++p) {
            CHECK(b.at(b.n, p, r) == 1.0);
            CHECK(b.at(b.z, p, r) == doctest::Approx(std::exp(-(t + t * t))));
        }
    }
    auto again = simulate_base_paths(c);
    CHECK(again.w == b.w);
    c.threads = 3;
    auto threaded = simulate_base_paths(c);
    CHECK(threaded.w == b.w);
    CHECK(threaded.y == b.y);
    CHECK(threaded.uniform == b.uniform);
}

TEST_CASE("natural SDE with f = 0 and N = 1 is frozen at its start value") {
    auto c = small(300, 7);
    auto b = simulate_base_paths(c);
    for (std::size_t u = 0; u < b.records(); ++u) {
        auto m = solve_natural_sde(b, u, FSpec{});
        for (std::size_t p = 0; p < c.paths; ++p)
            for (std::size_t r = u; r < b.records(); ++r)
                CHECK(std::abs(m.values[p * b.records() + r] - (1 - std::exp(-b.cumulative_intensity[u]))) < 1e-12);
    }
}

TEST_CASE("natural SDE with f(x) = x/2 keeps its mean") {
    auto c = small(20000, 13);
    c.n_vol = 0.2;
    c.f = FSpec{FKind::linear, 0.5, 0.5, 0.5};
    auto b = simulate_base_paths(c);
    for (std::size_t u = 1; u < b.records(); ++u) {
        auto m = solve_natural_sde(b, u, c.f);
        std::vector<std::vector<double>> samples;
        for (std::size_t p = 0; p < c.paths; ++p)
            samples.emplace_back(m.values.begin() + p * b.records() + u, m.values.begin() + (p + 1) * b.records());
        CHECK(martingale_drift_test(samples).pass);
    }
}

TEST_CASE("Cox default sampling") {
    auto c = small(20000, 17);
    c.lambda = 1;
    auto b = simulate_base_paths(c);
    auto s = sample_default_cox(b);
    double alive = 0;
    for (double t : s.tau) alive += t > 1;
    alive /= static_cast<double>(c.paths);
    double se = std::sqrt(std::exp(-1) * (1 - std::exp(-1)) / static_cast<double>(c.paths));
    CHECK(std::abs(alive - std::exp(-1)) < 4 * se);

    c.lambda = 0;
    auto none = sample_default_cox(simulate_base_paths(c));
    for (double t : none.tau) CHECK(t == kNever);
}

TEST_CASE("natural sampler with f = 0 and N = 1 reproduces Cox in law") {
    auto c = small(5000, 19);
    c.lambda = 1;
    c.u_grid.clear();
    for (int i = 0; i <= 16; ++i) c.u_grid.push_back(i / 16.0);
    auto b = simulate_base_paths(c);
    std::vector<MTrajectory> family;
    for (std::size_t u = 0; u < b.records(); ++u) family.push_back(solve_natural_sde(b, u, FSpec{}));
    auto nat = sample_default_natural(b, family);
    c.seed = 23;
    auto cox = sample_default_cox(simulate_base_paths(c));
    // The natural sampler lands on the u-grid; compare grid-rounded Cox times.
    std::vector<double> a, d;
    for (double t : nat.tau) a.push_back(std::isinf(t) ? 2.0 : t);
    for (double t : cox.tau) d.push_back(t > 1 ? 2.0 : std::ceil(t * 16) / 16);
    CHECK(ks_two_sample(a, d).p_value > 0.01);
}

TEST_CASE("projection condition") {
    // N = 1: with a volatile N, paths where Z leaves [0, 1] are excluded and bias the survivors.
    auto c = small(20000, 29);
    auto b = simulate_base_paths(c);
    auto good = projection_condition_test(b, sample_default_cox(b));
    CHECK(good.pass);
    CHECK(good.used_paths == c.paths);
    CHECK(good.rows.front().survival == 1.0);
    auto bad = projection_condition_test(b, sample_default_cox(b, 0.5));
    CHECK_FALSE(bad.pass);
}

TEST_CASE("replication") {
    auto c = small(4000, 31);
    c.dt = 1.0 / 1024;
    auto b = simulate_base_paths(c);
    auto s = sample_default_cox(b);
    auto constant = replication_backtest(b, s, Claim::constant, {3, 2, 1, 0});
    for (const auto& row : constant.rows) CHECK(row.rms == 0.0);
    auto bond = replication_backtest(b, s, Claim::defaultable_bond, {3, 2, 1, 0});
    CHECK(bond.pass);
    CHECK(bond.rows.size() == 4);
    for (std::size_t i = 1; i < bond.rows.size(); ++i) CHECK(bond.rows[i].rms < bond.rows[i - 1].rms);
    CHECK(replication_backtest(b, s, Claim::stopped_walk, {3, 2, 1, 0}).pass);
}

TEST_CASE("drift test size and power") {
    const std::size_t paths = 4000;
    int rejections = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<std::vector<double>> walk(paths, std::vector<double>(2, 0.0));
        for (std::size_t p = 0; p < paths; ++p) walk[p][1] = counter_normal(1000 + trial, p, 0);
        rejections += !martingale_drift_test(walk, 0.05).pass;
    }
    // Binomial(200, 0.05): mean 10, sd about 3.
    CHECK(rejections >= 1);
    CHECK(rejections <= 22);

    std::vector<std::vector<double>> drifted(paths, std::vector<double>(3, 0.0));
    for (std::size_t p = 0; p < paths; ++p) {
        drifted[p][1] = counter_normal(5, p, 0) + 0.1;
        drifted[p][2] = drifted[p][1] + counter_normal(5, p, 1);
    }
    CHECK_FALSE(martingale_drift_test(drifted).pass);
    std::vector<std::vector<double>> flat(paths, std::vector<double>(3, 1.0));
    CHECK(martingale_drift_test(flat).pass);
}

TEST_CASE("two-sample KS") {
    std::vector<double> a{1, 2, 3, 4}, b{10, 11, 12, 13};
    CHECK(ks_two_sample(a, a).statistic == 0.0);
    CHECK(ks_two_sample(a, b).statistic == 1.0);
}

}  // TEST_SUITE
