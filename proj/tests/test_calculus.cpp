#include "doctest.h"
#include "random_models.hpp"

using namespace penf;
using penf::testing::Rng;

namespace {

ProcessTable zeros_like(const EnlargedSpace& s) { return ProcessTable(s.num_stages(), s.size()); }

// Gamma_k - Gamma_{k-1} = E[dX_k | G_{k-1}] by direct block sums.
ProcessTable drift_oracle(const ProcessTable& x, const EnlargedSpace& s) {
    ProcessTable g = zeros_like(s);
    for (int k = 1; k < s.num_stages(); ++k) {
        const auto& p = s.G().stage(k - 1);
        auto dx = x.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            Rational num = 0, den = 0;
            for (std::size_t b = 0; b < s.size(); ++b)
                if (p.block(b) == p.block(a)) {
                    num += s.mu()[b] * dx[b];
                    den += s.mu()[b];
                }
            g[k][a] = g[k - 1][a] + num / den;
        }
    }
    return g;
}

EnlargedSpace honest_walk() {
    auto walk = build_tree({fair_coin(), fair_coin()});
    return honest_time_model(walk.space, walk.filtration, last_max_rule(walk.walk, 2));
}

}  // namespace

TEST_SUITE("calculus") {

TEST_CASE("Azema supermartingale") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    DefaultKernel never;
    for (int w = 0; w < 4; ++w) never.rows.push_back(Vec{0, 0, 0, 1});
    CHECK(azema_Z(build_product_space(walk.space, walk.filtration, never)) == ProcessTable(4, 4, 1));

    auto cox = penf::testing::curated_model("cox");
    auto z = azema_Z(cox.space);
    const std::vector<Rational> surv{1, Rational(1, 2), Rational(1, 2), Rational(1, 4), Rational(1, 4), Rational(1, 4)};
    for (int k = 0; k < z.stages(); ++k) CHECK(z[k] == Vec(cox.space.size(), surv[k]));

    auto h = honest_walk();
    auto hz = azema_Z(h);
    CHECK(hz[0] == Vec(h.size(), Rational(3, 4)));
    CHECK(hz[1] == Vec(h.size(), Rational(1, 2)));
    CHECK(hz[2] == Vec(h.size(), Rational(0)));
}

TEST_CASE("Azema decomposition on random models") {
    Rng rng(59);
    for (int rep = 0; rep < 40; ++rep) {
        auto m = penf::testing::random_model(rng);
        const auto& s = m.space;
        auto d = azema_decomposition(s);
        CHECK(d.z == d.martingale - d.predictable);
        CHECK(is_martingale(d.martingale, s.lifted(), s.mu()));
        CHECK(is_martingale(d.m, s.lifted(), s.mu()));
        CHECK(is_predictable(d.predictable, s.lifted()));
        CHECK(z_left_limit_violations(s).empty());
    }
}

TEST_CASE("default martingale L") {
    auto quiet = build_tree({{Branch{1, 0}}, {Branch{1, 0}}});
    DefaultKernel cox{{Vec{0, Rational(1, 2), Rational(1, 4), Rational(1, 4)}}};
    auto s = build_product_space(quiet.space, quiet.filtration, cox);
    auto l = default_martingale_L(s);
    for (std::size_t a = 0; a < s.size(); ++a)
        if (s.tau()[a] == 1) CHECK(l[1][a] == Rational(1, 2));
        else CHECK(l[1][a] == Rational(-1, 2));

    DefaultKernel at_one{{Vec{0, 1, 0, 0}}};
    CHECK(default_martingale_L(build_product_space(quiet.space, quiet.filtration, at_one)) == ProcessTable(4, 1));
    DefaultKernel never{{Vec{0, 0, 0, 1}}};
    CHECK(default_martingale_L(build_product_space(quiet.space, quiet.filtration, never)) == ProcessTable(4, 1));
}

TEST_CASE("L is a G-martingale on random models") {
    Rng rng(61);
    for (int rep = 0; rep < 60; ++rep) {
        auto m = penf::testing::random_model(rng);
        CHECK(is_martingale(default_martingale_L(m.space), m.space.G(), m.space.mu()));
    }
}

TEST_CASE("exact drift against direct block sums") {
    auto cox = penf::testing::curated_model("cox");
    auto w = cox.space.lift(cox.drivers.front());
    CHECK(drift_exact(w, cox.space).drift == zeros_like(cox.space));

    auto h = honest_walk();
    auto hw = h.lift(build_tree({fair_coin(), fair_coin()}).walk);
    auto d = drift_exact(hw, h);
    CHECK(d.drift == drift_oracle(hw, h));
    CHECK(d.martingale_part == hw - d.drift);
    CHECK(is_martingale(d.martingale_part, h.G(), h.mu()));
    CHECK(drift_exact(ProcessTable(4, h.size(), 5), h).drift == zeros_like(h));
}

TEST_CASE("before-default drift formula on random models") {
    Rng rng(67);
    for (int rep = 0; rep < 40; ++rep) {
        auto m = penf::testing::random_model(rng);
        for (const auto& x : martingale_basis(m.space)) {
            auto exact = drift_exact(x, m.space).drift;
            CHECK(increments_agree(drift_before_formula(x, m.space), exact, m.space, Region::before));
        }
    }
}

TEST_CASE("after-default drift for honest times takes the minus sign") {
    auto h = honest_walk();
    auto hw = h.lift(build_tree({fair_coin(), fair_coin()}).walk);
    auto sign = resolve_after_sign(hw, h);
    CHECK(sign.minus_matches);
    CHECK_FALSE(sign.plus_matches);
    CHECK(increments_agree(drift_after_honest_formula(hw, h), drift_exact(hw, h).drift, h, Region::after));

    auto walk = build_tree({fair_coin(), fair_coin()});
    auto zero = honest_time_model(walk.space, walk.filtration, std::vector<int>(4, 0));
    auto zw = zero.lift(walk.walk);
    CHECK(increments_agree(drift_after_honest_formula(zw, zero), drift_exact(zw, zero).drift, zero, Region::after));

    Rng rng(71);
    for (int rep = 0; rep < 30; ++rep) {
        auto m = penf::testing::random_honest_model(rng);
        for (const auto& x : martingale_basis(m.space)) {
            auto exact = drift_exact(x, m.space).drift;
            CHECK(increments_agree(drift_after_honest_formula(x, m.space), exact, m.space, Region::after));
        }
    }
}

TEST_CASE("natural-model drift vanishes for f = 0 and N = 1") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    std::vector<Vec> rows{Vec(4, 1), Vec(4, Rational(3, 4)), Vec(4, Rational(1, 2)), Vec(4, Rational(1, 2))};
    NaturalParams p{ProcessTable(4, 4, 1), ProcessTable(rows), walk.walk, zero_function()};
    auto nm = natural_model_discrete(walk.space, walk.filtration, p);
    auto nd = drift_natural_formula(nm.space.lift(walk.walk), nm, p);
    CHECK(nd.drift == zeros_like(nm.space));
    CHECK(nd.deviations.empty());
    CHECK(drift_exact(nm.space.lift(walk.walk), nm.space).drift == zeros_like(nm.space));
}

TEST_CASE("stochastic exponential") {
    auto coin = build_tree({fair_coin()});
    auto e0 = stochastic_exponential(ProcessTable(3, 2), coin.walk);
    CHECK(e0.eta == ProcessTable(3, 2, 1));
    auto e = stochastic_exponential(ProcessTable(3, 2, Rational(1, 2)), coin.walk);
    CHECK(e.eta[1] == Vec{Rational(3, 2), Rational(1, 2)});
    CHECK(e.positive);
    CHECK_FALSE(stochastic_exponential(ProcessTable(3, 2, 2), coin.walk).positive);
}

TEST_CASE("measure changes and Girsanov") {
    Vec mu{Rational(1, 2), Rational(1, 2)};
    CHECK_THROWS(MeasureChange(Vec{0, 2}, mu));
    CHECK_THROWS(MeasureChange(Vec{1, 2}, mu));
    MeasureChange q(Vec{Rational(3, 2), Rational(1, 2)}, mu);
    CHECK(q.reweight(mu) == Vec{Rational(3, 4), Rational(1, 4)});

    auto coin = build_tree({fair_coin()});
    const auto& f = coin.filtration;
    CHECK(girsanov_transform(coin.walk, ProcessTable(3, 2, 1), f, mu) == coin.walk);
    auto eta = stochastic_exponential(ProcessTable(3, 2, Rational(1, 2)), coin.walk).eta;
    auto wt = girsanov_transform(coin.walk, eta, f, mu);
    CHECK(wt[1] == Vec{Rational(1, 2), Rational(-3, 2)});
    CHECK(is_martingale(wt, f, q.reweight(mu)));
}

TEST_CASE("Girsanov transforms stay martingales on random trees") {
    Rng rng(73);
    for (int rep = 0; rep < 30; ++rep) {
        auto base = penf::testing::random_tree(rng);
        const auto& f = base.filtration;
        const auto& mu = base.space.weights();
        // Small predictable integrand keeps the exponential positive.
        ProcessTable j(f.num_stages(), mu.size());
        for (int k = 1; k < f.num_stages(); ++k) {
            const auto& p = f.stage(k - 1);
            Vec vals(p.num_blocks());
            for (auto& v : vals) v = penf::testing::frac(static_cast<long>(rng() % 5) - 2, 40);
            for (std::size_t w = 0; w < mu.size(); ++w) j[k][w] = vals[p.block(w)];
        }
        auto e = stochastic_exponential(j, base.walk);
        REQUIRE(e.positive);
        MeasureChange q(e.eta[f.terminal()], mu);
        for (const auto& d : penf::testing::spanning_drivers(base))
            CHECK(is_martingale(girsanov_transform(d, e.eta, f, mu), f, q.reweight(mu)));
    }
}

TEST_CASE("strong orthogonality") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    ProcessTable first = walk.walk, second = walk.walk;
    for (int k = 0; k < 4; ++k) {
        first[k] = walk.walk[std::min(k, 1)];
        for (std::size_t w = 0; w < 4; ++w) second[k][w] = walk.walk[k][w] - first[k][w];
    }
    CHECK(strongly_orthogonal({first, second}));
    CHECK_FALSE(strongly_orthogonal({walk.walk, walk.walk}));
}

TEST_CASE("sH-measure checks") {
    auto cox = penf::testing::curated_model("cox");
    const auto& s = cox.space;
    auto basis = martingale_basis(s);
    CHECK(immersion_check(s));
    CHECK(sh_measure_check(s, MeasureChange::identity(s.size()), StoppingTime::constant(s.size(), 0),
                           StoppingTime::constant(s.size(), s.terminal()), basis)
              .passed);

    auto dens = penf::testing::curated_model("density");
    const auto& ds = dens.space;
    const int n = ds.horizon();
    MeasureChange qn(density_decoupling_density(ds, *dens.density, n), ds.mu());
    CHECK(sh_measure_check(ds, qn, StoppingTime::constant(ds.size(), 0), StoppingTime::constant(ds.size(), n),
                           martingale_basis(ds))
              .passed);

    auto h = honest_walk();
    CHECK_FALSE(immersion_check(h));
    auto plain = sh_measure_check(h, MeasureChange::identity(h.size()), h.tau(), StoppingTime::constant(h.size(), h.terminal()),
                                  martingale_basis(h));
    CHECK_FALSE(plain.passed);
    CHECK(plain.failing_basis >= 0);

    auto hs = penf::testing::curated_model("honest-sh");
    const auto& hss = hs.space;
    for (auto form : {HonestEtaForm::exact, HonestEtaForm::no_denominator}) {
        auto sh = build_sh_measure_honest(hss, 2, 64, form);
        REQUIRE(sh.positive);
        auto chk = sh_measure_check(hss, MeasureChange(sh.density, hss.mu()), sh.start, sh.end, martingale_basis(hss));
        CHECK(chk.passed == (form == HonestEtaForm::exact));
    }
}

TEST_CASE("step covering exists for Cox models") {
    auto cox = penf::testing::curated_model("cox");
    auto cov = step_covering(cox.space);
    CHECK(cov.available);
    CHECK(cov.pieces.size() == static_cast<std::size_t>(cox.space.terminal()));
}

}  // TEST_SUITE
