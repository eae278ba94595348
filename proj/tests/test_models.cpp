#include "doctest.h"
#include "random_models.hpp"

using namespace penf;

namespace {

ProcessTable deterministic(const std::vector<Rational>& values, std::size_t atoms) {
    std::vector<Vec> rows;
    for (const auto& v : values) rows.emplace_back(atoms, v);
    return ProcessTable(rows);
}

// P(tau > t_k | F^_k) straight from the product weights.
Rational survival_given(const EnlargedSpace& s, int k, std::size_t base_atom) {
    const auto& blk = s.base_filtration().stage(k);
    Rational alive = 0, total = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        const auto& at = s.atoms()[a];
        if (blk.block(at.base) != blk.block(base_atom)) continue;
        total += s.mu()[a];
        if (at.time > k) alive += s.mu()[a];
    }
    return alive / total;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("build_tree") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    CHECK(walk.space.size() == 4);
    CHECK(walk.filtration.stage(1).num_blocks() == 2);
    CHECK(walk.walk[2] == Vec{2, 0, 0, -2});
    CHECK(walk.walk[3] == walk.walk[2]);
    CHECK_THROWS_AS(build_tree({{Branch{Rational(1, 2), 1}}}), InvalidParameters);
    CHECK_THROWS_AS(build_tree({{Branch{0, 1}, Branch{1, -1}}}), InvalidParameters);
}

TEST_CASE("Cox model with a deterministic intensity") {
    auto quiet = build_tree({{Branch{1, 0}}, {Branch{1, 0}}});
    auto s = cox_model(quiet.space, quiet.filtration, {deterministic({1, Rational(1, 2), Rational(1, 4), Rational(1, 4)}, 1)});
    CHECK(s.kernel().rows[0] == Vec{0, Rational(1, 2), Rational(1, 4), Rational(1, 4)});
    for (int k = 0; k <= 2; ++k) CHECK(survival_given(s, k, 0) == Rational(1, 1 << k));
}

TEST_CASE("Cox model with zero intensity never defaults") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    auto s = cox_model(walk.space, walk.filtration, {ProcessTable(4, 4, 1)});
    for (std::size_t a = 0; a < s.size(); ++a) CHECK(s.tau()[a] == s.terminal());
}

TEST_CASE("Cox model with a coin-driven intensity") {
    auto coin = build_tree({fair_coin()});
    // Lambda_1 = log 2 on heads, log 4 on tails.
    ProcessTable surv(std::vector<Vec>{{1, 1}, {Rational(1, 2), Rational(1, 4)}, {Rational(1, 2), Rational(1, 4)}});
    auto s = cox_model(coin.space, coin.filtration, {surv});
    CHECK(s.kernel().rows[0] == Vec{0, Rational(1, 2), Rational(1, 2)});
    CHECK(s.kernel().rows[1] == Vec{0, Rational(3, 4), Rational(1, 4)});
    CHECK(survival_given(s, 1, 0) == Rational(1, 2));
    CHECK(survival_given(s, 1, 1) == Rational(1, 4));
}

TEST_CASE("Cox model rejects a decreasing intensity") {
    auto quiet = build_tree({{Branch{1, 0}}, {Branch{1, 0}}});
    CHECK_THROWS_AS(cox_model(quiet.space, quiet.filtration,
                              {deterministic({1, Rational(1, 2), Rational(3, 4), Rational(3, 4)}, 1)}),
                    InvalidParameters);
    CHECK_THROWS_AS(cox_model(quiet.space, quiet.filtration,
                              {deterministic({Rational(1, 2), Rational(1, 2), 0, 0}, 1)}),
                    InvalidParameters);
}

TEST_CASE("density model") {
    auto coin = build_tree({fair_coin()});
    // Flat density: tau independent of F with law mu.
    Vec mu{0, Rational(1, 3), Rational(2, 3)};
    DensityParams flat{{ProcessTable(3, 2, 1), ProcessTable(3, 2, 1), ProcessTable(3, 2, 1)}, mu};
    auto s = density_model(coin.space, coin.filtration, flat);
    CHECK(s.kernel().rows[0] == mu);
    CHECK(s.kernel().rows[1] == mu);

    // alpha_1(1) = 1 + dW/2, alpha_1(inf) = 1 - dW/2 against mu = (1/2, 1/2).
    ProcessTable up(std::vector<Vec>{{1, 1}, {Rational(3, 2), Rational(1, 2)}, {Rational(3, 2), Rational(1, 2)}});
    ProcessTable down(std::vector<Vec>{{1, 1}, {Rational(1, 2), Rational(3, 2)}, {Rational(1, 2), Rational(3, 2)}});
    DensityParams tilted{{ProcessTable(3, 2, 1), up, down}, Vec{0, Rational(1, 2), Rational(1, 2)}};
    auto t = density_model(coin.space, coin.filtration, tilted);
    CHECK(t.kernel().rows[0] == Vec{0, Rational(3, 4), Rational(1, 4)});
    CHECK(t.kernel().rows[1] == Vec{0, Rational(1, 4), Rational(3, 4)});

    // Under alpha_n(tau)^{-1} tau is independent of F_n with law mu.
    auto q = density_decoupling_density(t, tilted, 1);
    Vec qmu(t.size());
    for (std::size_t a = 0; a < t.size(); ++a) qmu[a] = q[a] * t.mu()[a];
    for (int theta : {1, 2}) {
        Vec ind(t.size());
        for (std::size_t a = 0; a < t.size(); ++a) ind[a] = t.tau()[a] == theta;
        CHECK(cond_exp(ind, t.lifted().stage(1), qmu) == Vec(t.size(), Rational(1, 2)));
    }

    DensityParams broken{{ProcessTable(3, 2, 1), up, up}, Vec{0, Rational(1, 2), Rational(1, 2)}};
    CHECK_THROWS_AS(density_model(coin.space, coin.filtration, broken), InvalidParameters);
}

TEST_CASE("honest times") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    const auto& f = walk.filtration;
    auto tau = last_max_rule(walk.walk, 2);
    CHECK(tau == std::vector<int>{2, 1, 2, 0});
    CHECK(is_honest(f, tau));
    auto s = honest_time_model(walk.space, f, tau);
    CHECK(survival_given(s, 0, 0) == Rational(3, 4));
    CHECK(survival_given(s, 1, 0) == Rational(1, 2));
    CHECK(survival_given(s, 1, 3) == Rational(1, 2));
    CHECK(survival_given(s, 2, 0) == Rational(0));

    // tau = horizon is honest; tau revealed only after it happens is not.
    CHECK(is_honest(f, std::vector<int>(4, 2)));
    auto late = build_tree({{Branch{1, 0}}, {Branch{1, 0}}, fair_coin()});
    CHECK_FALSE(is_honest(late.filtration, {1, 2}));
    CHECK_THROWS_AS(honest_time_model(late.space, late.filtration, {1, 2}), InvalidParameters);

    // A stopping time adds no information: G = F^.
    std::vector<int> hit;
    for (std::size_t w = 0; w < 4; ++w) hit.push_back(walk.walk[1][w] == 1 ? 1 : 3);
    auto hs = honest_time_model(walk.space, f, hit);
    for (int k = 0; k < hs.num_stages(); ++k) CHECK(hs.G().stage(k) == hs.lifted().stage(k));
}

TEST_CASE("last passage times are honest") {
    penf::testing::Rng rng(53);
    for (int rep = 0; rep < 50; ++rep) {
        auto base = penf::testing::random_tree(rng);
        CHECK(is_honest(base.filtration, penf::testing::random_honest_times(rng, base)));
        CHECK(is_honest(base.filtration, last_zero_rule(base.walk, base.filtration.horizon())));
    }
}

TEST_CASE("natural model with f = 0 and N = 1 is a Cox model") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    auto surv = deterministic({1, Rational(3, 4), Rational(1, 2), Rational(1, 2)}, 4);
    NaturalParams p{ProcessTable(4, 4, 1), surv, walk.walk, zero_function()};
    auto nm = natural_model_discrete(walk.space, walk.filtration, p);
    for (int u = 0; u <= 2; ++u)
        for (int k = u; k < 4; ++k) CHECK(nm.cdf[u][k] == Vec(4, 1 - surv[u][0]));
    auto cox = cox_model(walk.space, walk.filtration, {surv});
    CHECK(nm.space.kernel().rows == cox.kernel().rows);
}

TEST_CASE("natural model recursion and projection condition") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    const std::size_t n = 4;
    ProcessTable nn(4, n), y(4, n);
    for (int k = 0; k < 4; ++k)
        for (std::size_t w = 0; w < n; ++w) {
            nn[k][w] = 1 + Rational(1, 8) * walk.walk[std::min(k, 2)][w];
            y[k][w] = walk.walk[k][w] / 8;
        }
    // N_k = 1 + W_k/8 is a positive martingale.
    auto surv = deterministic({1, Rational(3, 4), Rational(1, 2), Rational(1, 2)}, n);
    NaturalParams p{nn, surv, y, scaled_identity(Rational(1, 2), Rational(1, 2))};
    auto nm = natural_model_discrete(walk.space, walk.filtration, p);

    CHECK(nm.cdf[0] == ProcessTable(4, n));
    for (int u = 1; u <= 2; ++u) {
        for (std::size_t w = 0; w < n; ++w) {
            Rational m = 1 - nn[u][w] * surv[u][w];
            CHECK(nm.cdf[u][u][w] == m);
            for (int k = u; k < 3; ++k) {
                Rational zk = nn[k][w] * surv[k][w];
                Rational dn = nn[k + 1][w] - nn[k][w], dy = y[k + 1][w] - y[k][w];
                m += -m * surv[k][w] / (1 - zk) * dn + m * (m - (1 - zk)) / 2 * dy;
                CHECK(nm.cdf[u][k + 1][w] == m);
            }
        }
    }
    for (int k = 0; k <= 2; ++k)
        for (std::size_t w = 0; w < n; ++w) CHECK(survival_given(nm.space, k, w) == nn[k][w] * surv[k][w]);
}

TEST_CASE("natural model rejects f with f(0) != 0") {
    auto walk = build_tree({fair_coin()});
    auto surv = deterministic({1, Rational(1, 2), Rational(1, 2)}, 2);
    ScalarFunction shifted{"shifted", [](const Rational& x) { return Rational(x + 1); },
                           [](const Rational&) { return Rational(1); }, 2, 1};
    NaturalParams p{ProcessTable(3, 2, 1), surv, walk.walk, shifted};
    CHECK_THROWS_AS(natural_model_discrete(walk.space, walk.filtration, p), InvalidParameters);
}

}  // TEST_SUITE
