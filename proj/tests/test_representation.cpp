#include "doctest.h"
#include "random_models.hpp"

using namespace penf;
using penf::testing::Rng;

namespace {

std::vector<Branch> ternary() {
    return {{Rational(1, 3), 1}, {Rational(1, 3), 0}, {Rational(1, 3), -1}};
}

bool is_zero(const ProcessTable& x) { return x == ProcessTable(x.stages(), x.atoms()); }

}  // namespace

TEST_SUITE("representation") {

TEST_CASE("MRP on binary and ternary trees") {
    auto walk = build_tree({fair_coin(), fair_coin()});
    auto ok = mrp_check(walk.space.weights(), walk.filtration, {walk.walk});
    CHECK(ok.spanning);
    CHECK_FALSE(ok.witness);

    auto tri = build_tree({ternary()});
    const auto& mu = tri.space.weights();
    auto gap = mrp_check(mu, tri.filtration, {tri.walk});
    REQUIRE_FALSE(gap.spanning);
    CHECK(gap.gap_step == 1);
    REQUIRE(gap.witness);
    CHECK_FALSE(is_zero(*gap.witness));
    CHECK(is_martingale(*gap.witness, tri.filtration, mu));
    CHECK(is_zero(predictable_bracket(*gap.witness, tri.walk, tri.filtration, mu)));

    CHECK(mrp_check(mu, tri.filtration, penf::testing::spanning_drivers(tri)).spanning);
}

TEST_CASE("MRP verdict is invariant under equivalent measure changes") {
    Rng rng(79);
    for (int rep = 0; rep < 30; ++rep) {
        auto base = penf::testing::random_tree(rng);
        const auto& f = base.filtration;
        const auto& mu = base.space.weights();
        ProcessTable j(f.num_stages(), mu.size());
        for (int k = 1; k < f.num_stages(); ++k)
            for (std::size_t w = 0; w < mu.size(); ++w) j[k][w] = penf::testing::frac(f.stage(k - 1).block(w) % 3 - 1, 30);
        auto e = stochastic_exponential(j, base.walk);
        REQUIRE(e.positive);
        auto qmu = MeasureChange(e.eta[f.terminal()], mu).reweight(mu);
        for (auto drivers : {std::vector<ProcessTable>{base.walk}, penf::testing::spanning_drivers(base)}) {
            std::vector<ProcessTable> moved;
            for (const auto& d : drivers) moved.push_back(girsanov_transform(d, e.eta, f, mu));
            CHECK(mrp_check(mu, f, drivers).spanning == mrp_check(qmu, f, moved).spanning);
        }
    }
}

TEST_CASE("G-MRP for a Cox model with W and L") {
    auto cox = penf::testing::curated_model("cox");
    const auto& s = cox.space;
    auto cert = mrp_check(s.mu(), s.G(), {s.lift(cox.drivers.front()), default_martingale_L(s)});
    CHECK(cert.spanning);
}

TEST_CASE("integrands before default") {
    auto cox = penf::testing::curated_model("cox");
    const auto& s = cox.space;
    std::vector<ProcessTable> drivers{s.lift(cox.drivers.front())};

    auto one = integrand_solver_before(s, Vec(s.size(), Rational(1)), drivers);
    CHECK(one.exact);
    CHECK(is_zero(one.j.front()));
    CHECK(is_zero(one.k));
    CHECK(one.xi == Vec(s.size(), Rational(0)));

    Vec hit(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) hit[a] = s.tau()[a] == 2;
    auto r = integrand_solver_before(s, hit, drivers);
    CHECK(r.exact);
    CHECK(residual_is_orthogonal(s, r.xi));

    auto fixed = penf::testing::curated_model("fixed-coin");
    const auto& fs = fixed.space;
    auto coin = fs.lift(fixed.drivers.front())[1];
    auto rf = integrand_solver_before(fs, coin, {fs.lift(fixed.drivers.front())});
    CHECK(rf.exact);
    CHECK(rf.xi != Vec(fs.size(), Rational(0)));
    CHECK(residual_is_orthogonal(fs, rf.xi));
}

TEST_CASE("reconstruction on random models") {
    Rng rng(83);
    for (int rep = 0; rep < 25; ++rep) {
        auto m = penf::testing::random_model(rng);
        const auto& s = m.space;
        std::vector<ProcessTable> drivers;
        for (const auto& d : penf::testing::spanning_drivers(m.base)) drivers.push_back(s.lift(d));
        auto gt = sigma_at(s.tau(), s.G(), SigmaKind::at);
        for (const auto& blk : gt.blocks()) {
            Vec zeta(s.size());
            for (int a : blk) zeta[a] = 1;
            auto r = integrand_solver_before(s, zeta, drivers);
            CHECK(r.exact);
            CHECK(residual_is_orthogonal(s, r.xi));
        }
    }
}

TEST_CASE("full representation for honest times") {
    auto h = penf::testing::curated_model("honest");
    const auto& s = h.space;
    std::vector<ProcessTable> drivers{s.lift(h.drivers.front())};
    auto r = honest_full_representation(s, drivers.front()[s.terminal()], drivers);
    CHECK(r.exact);
    auto one = honest_full_representation(s, Vec(s.size(), Rational(1)), drivers);
    CHECK(one.exact);
    for (const auto& j : one.j_after) CHECK(is_zero(j));
}

TEST_CASE("fragment MRP") {
    auto dens = penf::testing::curated_model("density");
    const auto& s = dens.space;
    const int n = s.horizon();
    MeasureChange qn(density_decoupling_density(s, *dens.density, n), s.mu());
    std::vector<ProcessTable> drivers;
    for (const auto& d : dens.drivers) drivers.push_back(s.lift(d));
    auto cert = fragment_mrp_check(s, qn, s.tau(), StoppingTime::constant(s.size(), n), drivers);
    CHECK(cert.spanning);
    CHECK(fragment_mrp_check(s, qn, StoppingTime::constant(s.size(), n), StoppingTime::constant(s.size(), n), drivers)
              .spanning);

    auto h = penf::testing::curated_model("honest");
    const auto& hs = h.space;
    CHECK_THROWS_AS(fragment_mrp_check(hs, MeasureChange::identity(hs.size()), hs.tau(),
                                       StoppingTime::constant(hs.size(), hs.terminal()), {hs.lift(h.drivers.front())}),
                    ShMeasureFailure);
}

TEST_CASE("stopped filtration") {
    auto cox = penf::testing::curated_model("cox");
    const auto& s = cox.space;
    auto st = stopped_filtration(s);
    for (int k = 0; k < st.num_stages(); ++k) {
        auto r = min(s.tau(), StoppingTime::constant(s.size(), k));
        CHECK(st.stage(k) == sigma_at(r, s.G(), SigmaKind::at));
    }
    auto l = default_martingale_L(s);
    CHECK(stopped(l, s.tau()) == l);
}

TEST_CASE("theorem harness on curated models") {
    for (const char* name : {"cox", "density", "honest", "fixed-coin", "never"}) {
        auto m = penf::testing::curated_model(name);
        auto rep = theorem_harness(m.space, m.drivers);
        INFO(name);
        CHECK(rep.f_mrp);
        CHECK(rep.all_consistent());
    }
    auto cox = theorem_harness(penf::testing::curated_model("cox").space, penf::testing::curated_model("cox").drivers);
    CHECK(cox.d);
    CHECK(cox.e);
    auto fixed = penf::testing::curated_model("fixed-coin");
    auto rep = theorem_harness(fixed.space, fixed.drivers);
    CHECK_FALSE(rep.b);
    CHECK_FALSE(rep.c);
    auto honest = penf::testing::curated_model("honest");
    CHECK_FALSE(theorem_harness(honest.space, honest.drivers).d);
}

TEST_CASE("theorem harness on random models") {
    Rng rng(89);
    for (int rep = 0; rep < 25; ++rep) {
        auto m = penf::testing::random_model(rng);
        auto r = theorem_harness(m.space, penf::testing::spanning_drivers(m.base));
        for (const auto& e : r.equivalences) {
            INFO(e.label);
            CHECK(e.consistent());
        }
    }
}

}  // TEST_SUITE
