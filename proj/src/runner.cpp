#include "penf/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "penf/montecarlo.hpp"
#include "penf/representation.hpp"

namespace penf {

namespace {

Json vec_json(const Vec& v) {
    Json out = Json::array();
    for (const auto& q : v) out.push_back(to_string(q));
    return out;
}

Json table_json(const ProcessTable& t) {
    Json out = Json::array();
    for (const auto& row : t.rows()) out.push_back(vec_json(row));
    return out;
}

Json time_json(const StoppingTime& t) { return Json(t.values()); }

struct Table {
    std::string name;
    std::vector<std::string> columns;
    Json rows = Json::array();

    void add(Json row) { rows.push_back(std::move(row)); }
    Json json() const { return Json{{"name", name}, {"columns", columns}, {"rows", rows}}; }
};

struct CheckResult {
    CheckResult(std::string i, std::string l) : id(std::move(i)), label(std::move(l)) {}

    std::string id;
    std::string label;
    bool applicable = true;
    bool passed = true;
    std::string summary;
    Json detail = Json::object();
    std::vector<Table> tables;

    Json json() const {
        Json t = Json::array();
        for (const auto& x : tables) t.push_back(x.json());
        return Json{{"id", id},           {"label", label},   {"applicable", applicable}, {"passed", passed},
                    {"summary", summary}, {"detail", detail}, {"tables", t}};
    }
};

std::string time_label(int k, int terminal) { return k == terminal ? "inf" : std::to_string(k); }

Json atoms_json(const EnlargedSpace& s, const std::vector<int>& atoms) {
    Json out = Json::array();
    for (int a : atoms) out.push_back(Json{{"atom", a}, {"label", s.product().label(a)}});
    return out;
}

std::vector<ProcessTable> lifted(const EnlargedSpace& s, const std::vector<ProcessTable>& base) {
    std::vector<ProcessTable> out;
    for (const auto& d : base) out.push_back(s.lift(d));
    return out;
}

// Basis martingales first, then the drivers.
std::vector<std::pair<std::string, ProcessTable>> test_martingales(const ExactModel& m) {
    std::vector<std::pair<std::string, ProcessTable>> out;
    auto basis = martingale_basis(m.space);
    for (std::size_t i = 0; i < basis.size(); ++i) out.emplace_back("basis-" + std::to_string(i), basis[i]);
    for (std::size_t i = 0; i < m.drivers.size(); ++i)
        out.emplace_back("driver-" + std::to_string(i), m.space.lift(m.drivers[i]));
    return out;
}

// ---- exact checks ----

CheckResult check_mrp(const ExactModel& m, const Scenario& sc) {
    CheckResult r{"mrp", "MRP-rank"};
    const Vec& mu = m.base.space.weights();
    auto cert = mrp_check(mu, m.base.filtration, m.drivers);
    bool expect_gap = sc.text("checks", "mrp_expect") == "gap";
    Table nodes{"nodes", {"step", "block", "mean_zero_dim", "span_dim"}};
    for (const auto& n : cert.nodes) nodes.add(Json::array({n.step, n.block, n.mean_zero_dim, n.span_dim}));
    r.tables.push_back(nodes);
    r.detail["spanning"] = cert.spanning;
    r.detail["expected"] = expect_gap ? "gap" : "spanning";
    if (cert.spanning) {
        r.passed = !expect_gap;
        r.summary = "drivers span every node (" + std::to_string(cert.nodes.size()) + " nodes)";
        return r;
    }
    const ProcessTable& w = *cert.witness;
    bool nonzero = false;
    for (const auto& row : w.rows())
        for (const auto& q : row) nonzero = nonzero || q != 0;
    bool orthogonal = true;
    for (const auto& d : m.drivers) {
        auto br = predictable_bracket(w, d, m.base.filtration, mu);
        for (const auto& row : br.rows())
            for (const auto& q : row) orthogonal = orthogonal && q == 0;
    }
    bool verified = nonzero && orthogonal && is_martingale(w, m.base.filtration, mu);
    r.detail["gap_step"] = cert.gap_step;
    r.detail["gap_block"] = cert.gap_block;
    r.detail["witness_verified"] = verified;
    r.detail["witness"] = table_json(w);
    Table wt{"witness", {"step", "atom", "label", "value"}};
    for (int k = 0; k < w.stages(); ++k)
        for (std::size_t a = 0; a < w.atoms(); ++a)
            wt.add(Json::array({k, a, m.base.space.label(a), to_string(w[k][a])}));
    r.tables.push_back(wt);
    r.passed = expect_gap && verified;
    r.summary = "gap at step " + std::to_string(cert.gap_step) + ", block " + std::to_string(cert.gap_block) +
                (verified ? ", witness verified" : ", witness not verified");
    return r;
}

// First (step, atom) in the region where the increments of a and b differ.
std::optional<std::pair<int, int>> first_difference(const ProcessTable& a, const ProcessTable& b,
                                                    const EnlargedSpace& s, Region region) {
    const auto& tau = s.tau();
    for (int k = 1; k < a.stages(); ++k) {
        Vec da = a.increment(k), db = b.increment(k);
        for (std::size_t x = 0; x < s.size(); ++x) {
            bool in = region == Region::before ? k <= tau[x] : k > tau[x];
            if (in && da[x] != db[x]) return std::pair{k, static_cast<int>(x)};
        }
    }
    return std::nullopt;
}

CheckResult check_drift_eq2(const ExactModel& m) {
    CheckResult r{"drift-eq2", "Eq(2)-identity"};
    Table t{"martingales", {"martingale", "agree"}};
    int failures = 0;
    auto tests = test_martingales(m);
    for (const auto& [name, x] : tests) {
        auto exact = drift_exact(x, m.space).drift;
        auto formula = drift_before_formula(x, m.space);
        bool ok = increments_agree(formula, exact, m.space, Region::before);
        t.add(Json::array({name, ok}));
        if (!ok && failures++ == 0) {
            Json w{{"martingale", name}};
            if (auto d = first_difference(formula, exact, m.space, Region::before)) {
                auto [k, a] = *d;
                w["step"] = k;
                w["atom"] = atoms_json(m.space, {a});
                w["formula_increment"] = to_string(formula.increment(k)[a]);
                w["exact_increment"] = to_string(exact.increment(k)[a]);
            }
            r.detail["witness"] = w;
        }
    }
    r.tables.push_back(t);
    if (m.natural) {
        auto nd = drift_natural_formula(m.space.lift(m.base.walk), *m.natural, *m.natural_params);
        Table dev{"natural_deviations", {"step", "atom", "formula", "exact"}};
        for (const auto& row : nd.deviations)
            dev.add(Json::array({row.step, m.space.product().label(row.atom), to_string(row.formula),
                                 to_string(row.exact)}));
        r.tables.push_back(dev);
        r.detail["natural_max_deviation"] = to_string(nd.max_deviation);
    }
    r.passed = failures == 0;
    r.summary = std::to_string(tests.size() - failures) + "/" + std::to_string(tests.size()) +
                " martingales match the exact drift on (0, tau]";
    return r;
}

CheckResult check_drift_eq3(const ExactModel& m) {
    CheckResult r{"drift-eq3", "Eq(3)-identity"};
    auto times = point_mass_times(m.space);
    if (!times || !is_honest(m.base.filtration, *times)) {
        r.applicable = false;
        r.summary = "tau is not honest";
        return r;
    }
    Table t{"martingales", {"martingale", "minus_matches", "plus_matches"}};
    int failures = 0;
    auto tests = test_martingales(m);
    for (const auto& [name, x] : tests) {
        auto res = resolve_after_sign(x, m.space);
        t.add(Json::array({name, res.minus_matches, res.plus_matches}));
        if (!res.minus_matches && failures++ == 0) {
            auto exact = drift_exact(x, m.space).drift;
            auto formula = drift_after_honest_formula(x, m.space, -1);
            Json w{{"martingale", name}};
            if (auto d = first_difference(formula, exact, m.space, Region::after)) {
                auto [k, a] = *d;
                w["step"] = k;
                w["atom"] = atoms_json(m.space, {a});
                w["formula_increment"] = to_string(formula.increment(k)[a]);
                w["exact_increment"] = to_string(exact.increment(k)[a]);
            }
            r.detail["witness"] = w;
        }
    }
    r.tables.push_back(t);
    r.detail["sign"] = "-";
    r.passed = failures == 0;
    r.summary = std::to_string(tests.size() - failures) + "/" + std::to_string(tests.size()) +
                " martingales match the exact drift on (tau, inf) with the minus sign";
    return r;
}

CheckResult check_appendix(const ExactModel& m, const Scenario& sc) {
    CheckResult r{"appendix", "Appendix-identities"};
    AppendixOptions opt;
    const auto& mut = sc.text("checks", "mutation");
    if (mut == "drop-tau-generator") opt.gstar = GStarMutation::drop_tau_generator;
    if (mut == "flip-comparison") opt.fragment = FragmentMutation::flip_comparison;
    r.detail["mutation"] = mut;
    std::mt19937_64 rng(static_cast<std::uint64_t>(sc.integer("scenario", "seed")));
    long pairs = sc.integer("checks", "appendix_pairs");
    std::map<std::string, std::pair<int, int>> counts;  // name -> (passed, failed)
    std::vector<std::string> order;
    Json witnesses = Json::object();
    for (long i = 0; i < pairs; ++i) {
        StoppingTime S = random_stopping_time(m.space.G(), rng);
        StoppingTime T = max(S, random_stopping_time(m.space.G(), rng));
        auto rep = check_appendix_identities(m.space, S, T, opt);
        for (const auto& res : rep.results) {
            if (!counts.count(res.name)) order.push_back(res.name);
            auto& c = counts[res.name];
            (res.passed ? c.first : c.second)++;
            if (!res.passed && !witnesses.contains(res.name))
                witnesses[res.name] = Json{{"pair", i},
                                           {"S", time_json(S)},
                                           {"T", time_json(T)},
                                           {"atoms", atoms_json(m.space, res.witness)},
                                           {"detail", res.detail}};
        }
    }
    Table t{"identities", {"identity", "passed", "failed"}};
    int failing = 0;
    for (const auto& name : order) {
        t.add(Json::array({name, counts[name].first, counts[name].second}));
        failing += counts[name].second > 0;
    }
    r.tables.push_back(t);
    r.detail["pairs"] = pairs;
    r.detail["witnesses"] = witnesses;
    r.passed = failing == 0;
    r.summary = std::to_string(order.size() - failing) + "/" + std::to_string(order.size()) +
                " identities hold on " + std::to_string(pairs) + " random (S, T) pairs";
    return r;
}

std::vector<CheckResult> check_harness(const ExactModel& m) {
    auto h = theorem_harness(m.space, m.drivers);
    std::vector<CheckResult> out;
    for (const auto& e : h.equivalences) {
        CheckResult r{"harness", e.label};
        r.applicable = e.applicable;
        r.passed = e.consistent();
        r.detail = Json{{"lhs", e.lhs}, {"rhs", e.rhs}};
        r.summary = e.applicable ? std::string(e.lhs ? "true" : "false") + " <=> " + (e.rhs ? "true" : "false")
                                 : "not applicable: " + h.covering_detail;
        out.push_back(r);
    }
    Json flags{{"f_mrp", h.f_mrp}, {"a", h.a},  {"b", h.b}, {"c", h.c}, {"d", h.d}, {"d_w", h.d_w}, {"e", h.e},
               {"covering_available", h.covering_available}, {"covering_verified", h.covering_verified},
               {"covering_detail", h.covering_detail}};
    for (auto& r : out) r.detail["conditions"] = flags;
    return out;
}

struct ShCase {
    std::string name;
    MeasureChange q;
    StoppingTime start, end;
};

CheckResult check_sh_measure(const ExactModel& m, const Scenario& sc) {
    CheckResult r{"sh-measure", "sH-measure"};
    const auto& s = m.space;
    std::vector<ShCase> cases;
    if (immersion_check(s))
        cases.push_back({"immersion", MeasureChange::identity(s.size()), StoppingTime::constant(s.size(), 0),
                         StoppingTime::constant(s.size(), s.terminal())});
    if (m.density) {
        int n = std::clamp<int>(static_cast<int>(sc.integer("checks", "sh_n")), 0, s.horizon());
        cases.push_back({"density-decoupling", MeasureChange(density_decoupling_density(s, *m.density, n), s.mu()),
                         StoppingTime::constant(s.size(), 0), StoppingTime::constant(s.size(), n)});
    }
    auto times = point_mass_times(s);
    if (times && is_honest(m.base.filtration, *times)) {
        auto sh = build_sh_measure_honest(s, static_cast<int>(sc.integer("checks", "sh_a")),
                                          static_cast<int>(sc.integer("checks", "sh_n")));
        if (sh.positive) cases.push_back({"honest", MeasureChange(sh.density, s.mu()), sh.start, sh.end});
        else r.detail["honest_density_positive"] = false;
    }
    if (cases.empty()) {
        r.applicable = false;
        r.summary = "no sH-measure construction applies";
        return r;
    }
    auto basis = martingale_basis(s);
    auto drivers = lifted(s, m.drivers);
    Table t{"cases", {"case", "sh_measure", "fragment_mrp"}};
    int failures = 0;
    for (const auto& c : cases) {
        auto chk = sh_measure_check(s, c.q, c.start, c.end, basis);
        bool spanning = false;
        std::string why;
        try {
            // Representation on a fragment needs the default already revealed, so it starts at S v tau.
            auto cert = fragment_mrp_check(s, c.q, max(c.start, s.tau()), c.end, drivers);
            spanning = cert.spanning;
            if (!spanning) why = "gap at step " + std::to_string(cert.gap_step);
        } catch (const ShMeasureFailure& e) {
            why = e.what();
        }
        t.add(Json::array({c.name, chk.passed, spanning}));
        Json cd{{"start", time_json(c.start)}, {"end", time_json(c.end)}, {"density", vec_json(c.q.density())},
                {"sh_measure", chk.passed},    {"fragment_mrp", spanning}};
        if (!chk.passed) cd["failing_basis"] = chk.failing_basis, cd["sh_detail"] = chk.detail;
        if (!why.empty()) cd["mrp_detail"] = why;
        r.detail[c.name] = cd;
        failures += !(chk.passed && spanning);
    }
    r.tables.push_back(t);
    r.passed = failures == 0;
    r.summary = std::to_string(cases.size() - failures) + "/" + std::to_string(cases.size()) +
                " constructions give an sH-measure with spanning fragments";
    return r;
}

CheckResult check_l_martingale(const ExactModel& m) {
    CheckResult r{"l-martingale", "Eq(1)-martingale"};
    auto L = default_martingale_L(m.space);
    bool mart = is_martingale(L, m.space.G(), m.space.mu());
    auto violations = z_left_limit_violations(m.space);
    r.detail["L"] = table_json(L);
    r.detail["z_left_limit_violations"] = atoms_json(m.space, violations);
    r.passed = mart && violations.empty();
    r.summary = mart ? "L is a G-martingale" : "L is not a G-martingale";
    return r;
}

CheckResult check_representation(const ExactModel& m) {
    CheckResult r{"representation", "Thm3.2-reconstruction"};
    const auto& s = m.space;
    auto drivers = lifted(s, m.drivers);
    bool gtau = gtau_equality(s);
    Partition gt = sigma_at(s.tau(), s.G(), SigmaKind::at);
    Table t{"blocks", {"block", "exact", "xi_zero", "xi_orthogonal"}};
    int failures = 0;
    for (const auto& block : gt.blocks()) {
        Vec zeta(s.size(), Rational(0));
        for (int a : block) zeta[a] = 1;
        auto triple = integrand_solver_before(s, zeta, drivers);
        bool xi_zero = std::all_of(triple.xi.begin(), triple.xi.end(), [](const Rational& q) { return q == 0; });
        bool orth = residual_is_orthogonal(s, triple.xi);
        bool ok = triple.exact && orth && (!gtau || xi_zero);
        t.add(Json::array({block.front(), triple.exact, xi_zero, orth}));
        if (!ok && failures++ == 0)
            r.detail["witness"] = Json{{"block", atoms_json(s, block)},
                                       {"target", table_json(triple.target)},
                                       {"rebuilt", table_json(triple.rebuilt)},
                                       {"xi", vec_json(triple.xi)}};
    }
    r.tables.push_back(t);
    r.detail["gtau_equality"] = gtau;
    std::size_t total = gt.num_blocks();
    auto times = point_mass_times(s);
    if (times && is_honest(m.base.filtration, *times)) {
        Partition full = s.G().stage(s.terminal());
        Table h{"honest_blocks", {"block", "exact"}};
        for (const auto& block : full.blocks()) {
            Vec zeta(s.size(), Rational(0));
            for (int a : block) zeta[a] = 1;
            auto rep = honest_full_representation(s, zeta, drivers);
            h.add(Json::array({block.front(), rep.exact}));
            if (!rep.exact && failures++ == 0)
                r.detail["witness"] = Json{{"block", atoms_json(s, block)},
                                           {"target", table_json(rep.target)},
                                           {"rebuilt", table_json(rep.rebuilt)}};
        }
        total += full.num_blocks();
        r.tables.push_back(h);
    }
    r.passed = failures == 0;
    r.summary = std::to_string(total - failures) + "/" + std::to_string(total) + " block indicators rebuilt exactly";
    return r;
}

Json model_summary(const ExactModel& m, const Scenario& sc, std::vector<Table>& tables) {
    const auto& s = m.space;
    auto times = point_mass_times(s);
    Json out{{"type", sc.text("model", "type")},
             {"steps", sc.list("model", "steps")},
             {"drivers", sc.text("model", "drivers")},
             {"base_atoms", m.base.space.size()},
             {"product_atoms", s.size()},
             {"honest", times.has_value() && is_honest(m.base.filtration, *times)},
             {"immersion", immersion_check(s)},
             {"gtau_equality", gtau_equality(s)}};
    auto z = azema_Z(s);
    std::vector<int> rep(m.base.space.size(), -1);
    for (std::size_t a = 0; a < s.size(); ++a)
        if (rep[s.atoms()[a].base] < 0) rep[s.atoms()[a].base] = static_cast<int>(a);
    Table zt{"azema", {"step", "base_atom", "Z"}};
    for (int k = 0; k < z.stages(); ++k)
        for (std::size_t w = 0; w < rep.size(); ++w)
            zt.add(Json::array({time_label(k, s.terminal()), m.base.space.label(w), to_string(z[k][rep[w]])}));
    tables.push_back(zt);
    Table kt{"kernel", {"base_atom"}};
    for (int k = 0; k <= s.terminal(); ++k) kt.columns.push_back("p_" + time_label(k, s.terminal()));
    for (std::size_t w = 0; w < rep.size(); ++w) {
        Json row = Json::array({m.base.space.label(w)});
        for (const auto& q : s.kernel().rows[w]) row.push_back(to_string(q));
        kt.add(row);
    }
    tables.push_back(kt);
    return out;
}

// ---- Monte Carlo ----

mc::FSpec f_spec(const Scenario& sc, const std::string& sec) {
    mc::FSpec f;
    if (sc.text(sec, "f") == "zero") return f;
    f.kind = mc::FKind::linear;
    f.scale = sc.real(sec, "f_scale");
    f.bound = sc.real(sec, "f_bound");
    f.derivative_bound = sc.real(sec, "f_derivative_bound");
    return f;
}

mc::McConfig mc_config(const Scenario& sc, unsigned threads) {
    mc::McConfig c;
    c.dt = sc.real("mc", "dt");
    c.horizon = sc.real("mc", "horizon");
    long paths = sc.integer("mc", "paths");
    if (paths < 1) throw mc::McError("paths must be positive");
    c.paths = static_cast<std::size_t>(paths);
    c.seed = static_cast<std::uint64_t>(sc.integer("scenario", "seed"));
    c.u_grid.clear();
    for (const auto& q : sc.rationals("mc", "u_grid")) c.u_grid.push_back(to_double(q));
    c.n_vol = sc.real("mc", "n_vol");
    c.lambda = sc.real("mc", "lambda");
    c.lambda_slope = sc.real("mc", "lambda_slope");
    c.y_vol = sc.real("mc", "y_vol");
    c.y_rho = sc.real("mc", "y_rho");
    c.f = f_spec(sc, "mc");
    c.floor = sc.real("mc", "floor");
    c.threads = std::max(1u, threads);
    mc::validate(c);
    return c;
}

Json mc_manifest(const Scenario& sc) {
    Json cfg = Json::object();
    for (const char* k : {"dt", "horizon", "paths", "u_grid", "lambda", "lambda_slope", "n_vol", "y_vol", "y_rho", "f",
                          "floor", "sampler", "hazard_scale", "levels", "claims"})
        cfg[k] = sc.text("mc", k);
    if (sc.has("mc", "f_scale"))
        for (const char* k : {"f_scale", "f_offset", "f_bound", "f_derivative_bound"}) cfg[k] = sc.text("mc", k);
    return Json{{"seed", sc.integer("scenario", "seed")},
                {"rng", "splitmix64-counter: mix(mix(mix(seed) ^ path) ^ counter); normals by Box-Muller cosine branch"},
                {"streams", {{"driver", 0}, {"second_driver", mc::kSecondDriverStream},
                             {"uniform", mc::kUniformStream}, {"bridge", mc::kBridgeStream}}},
                {"scheme", "euler"},
                {"config", cfg}};
}

std::vector<CheckResult> run_mc_checks(const Scenario& sc, const std::vector<std::string>& run, unsigned threads,
                                       Json& manifest) {
    auto cfg = mc_config(sc, threads);
    auto bundle = mc::simulate_base_paths(cfg);
    const std::size_t R = bundle.records();
    auto wants = [&](const char* c) { return std::find(run.begin(), run.end(), c) != run.end(); };
    bool natural = sc.text("mc", "sampler") == "natural";
    std::vector<mc::MTrajectory> family;
    if (natural || wants("sde-martingale") || wants("cox-reproduction") || wants("flagged-fraction")) {
        for (std::size_t u = 0; u < R; ++u) family.push_back(mc::solve_natural_sde(bundle, u, cfg.f));
        mc::flag_non_monotone(family, bundle);
    }
    auto sample = natural ? mc::sample_default_natural(bundle, family)
                          : mc::sample_default_cox(bundle, sc.real("mc", "hazard_scale"));

    std::vector<bool> flagged(cfg.paths, false);
    std::map<std::string, std::size_t> flag_counts{{"z_out_of_range", 0}, {"near_singular", 0},
                                                   {"m_out_of_range", 0}, {"non_monotone", 0}};
    for (std::size_t p = 0; p < cfg.paths; ++p) {
        std::uint8_t f = bundle.flags[p];
        for (const auto& t : family) f |= t.flags[p];
        flagged[p] = f != 0 || sample.excluded[p];
        if (f & mc::kZOutOfRange) ++flag_counts["z_out_of_range"];
        if (f & mc::kNearSingular) ++flag_counts["near_singular"];
        if (f & mc::kMOutOfRange) ++flag_counts["m_out_of_range"];
        if (f & mc::kNonMonotone) ++flag_counts["non_monotone"];
    }
    std::size_t n_flagged = std::count(flagged.begin(), flagged.end(), true);
    manifest["flags"] = flag_counts;
    manifest["flagged_paths"] = n_flagged;
    manifest["excluded_paths"] = sample.excluded_count();

    std::vector<CheckResult> out;
    for (const auto& id : run) {
        if (id == "projection") {
            CheckResult r{id, "Natural-projection"};
            auto rep = mc::projection_condition_test(bundle, sample);
            Table t{"rows", {"t", "survival", "projected", "se", "pass"}};
            for (const auto& row : rep.rows) t.add(Json::array({row.t, row.survival, row.projected, row.se, row.pass}));
            r.tables.push_back(t);
            r.detail["used_paths"] = rep.used_paths;
            r.passed = rep.pass;
            r.summary = std::to_string(rep.rows.size()) + " grid times checked at 3 SE on " +
                        std::to_string(rep.used_paths) + " paths";
            out.push_back(r);
        } else if (id == "flagged-fraction") {
            CheckResult r{id, "Natural-validity"};
            double frac = static_cast<double>(n_flagged) / static_cast<double>(cfg.paths);
            r.detail["fraction"] = frac;
            r.detail["threshold"] = 0.01;
            r.passed = frac < 0.01;
            r.summary = std::to_string(n_flagged) + " of " + std::to_string(cfg.paths) + " paths flagged";
            out.push_back(r);
        } else if (id == "sde-martingale") {
            CheckResult r{id, "NaturalSDE-martingale"};
            Table t{"blocks", {"u", "block", "mean", "t_stat", "p_value"}};
            int failures = 0;
            for (const auto& traj : family) {
                if (R - traj.u_index < 2) continue;
                std::vector<std::vector<double>> samples;
                for (std::size_t p = 0; p < cfg.paths; ++p) {
                    if (flagged[p]) continue;
                    samples.emplace_back(traj.values.begin() + p * R + traj.u_index,
                                         traj.values.begin() + (p + 1) * R);
                }
                auto rep = mc::martingale_drift_test(samples);
                for (const auto& row : rep.rows)
                    t.add(Json::array({bundle.record_time[traj.u_index], row.block, row.mean, row.t_stat,
                                       row.p_value}));
                failures += !rep.pass;
            }
            r.tables.push_back(t);
            r.passed = failures == 0;
            r.summary = std::to_string(failures) + " conditional-CDF families reject the martingale hypothesis";
            out.push_back(r);
        } else if (id == "cox-reproduction") {
            CheckResult r{id, "Cox-reproduction"};
            double worst = 0;
            for (const auto& traj : family) {
                double target = 1 - std::exp(-bundle.cumulative_intensity[traj.u_index]);
                for (std::size_t p = 0; p < cfg.paths; ++p)
                    for (std::size_t k = traj.u_index; k < R; ++k)
                        worst = std::max(worst, std::abs(traj.values[p * R + k] - target));
            }
            r.detail["max_abs_error"] = worst;
            r.detail["tolerance"] = 1e-12;
            r.passed = worst <= 1e-12;
            r.summary = "max |M^u - (1 - e^-Lambda_u)| over all paths and records";
            out.push_back(r);
        } else if (id == "replication") {
            CheckResult r{id, "Replication-convergence"};
            std::vector<int> levels;
            for (long l : sc.integers("mc", "levels")) levels.push_back(static_cast<int>(l));
            int failures = 0;
            for (const auto& name : sc.list("mc", "claims")) {
                mc::Claim claim = name == "constant"           ? mc::Claim::constant
                                  : name == "defaultable-bond" ? mc::Claim::defaultable_bond
                                                               : mc::Claim::stopped_walk;
                auto rep = mc::replication_backtest(bundle, sample, claim, levels);
                Table t{name, {"dt", "rms", "ratio"}};
                for (const auto& row : rep.rows)
                    t.add(Json::array({row.dt, row.rms, std::isnan(row.ratio) ? Json(nullptr) : Json(row.ratio)}));
                r.tables.push_back(t);
                failures += !rep.pass;
            }
            r.passed = failures == 0;
            r.summary = std::to_string(failures) + " claims miss the 0.85 ratio per halving";
            out.push_back(r);
        }
    }
    return out;
}

std::string csv_cell(const Json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

std::string render_csv(const Json& table) {
    std::string out;
    const auto& cols = table["columns"];
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_cell(cols[i]);
    out += "\n";
    for (const auto& row : table["rows"]) {
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
        out += "\n";
    }
    return out;
}

}  // namespace

std::vector<Branch> step_branches(const std::string& kind) {
    if (kind == "quiet") return {Branch{1, 0}};
    if (kind == "coin") return fair_coin();
    if (kind == "tri") return {Branch{Rational(1, 3), 1}, Branch{Rational(1, 3), 0}, Branch{Rational(1, 3), -1}};
    throw InvalidParameters("unknown step kind " + kind);
}

std::optional<std::vector<int>> point_mass_times(const EnlargedSpace& s) {
    std::vector<int> out;
    for (const auto& row : s.kernel().rows) {
        auto it = std::find(row.begin(), row.end(), Rational(1));
        if (it == row.end()) return std::nullopt;
        out.push_back(static_cast<int>(it - row.begin()));
    }
    return out;
}

StoppingTime random_stopping_time(const Filtration& f, std::mt19937_64& rng) {
    std::vector<int> t(f.atoms(), -1);
    for (int k = 0; k <= f.terminal(); ++k) {
        const Partition& p = f.stage(k);
        std::vector<int> decision(p.num_blocks(), -1);
        for (std::size_t a = 0; a < t.size(); ++a) {
            if (t[a] >= 0) continue;
            int& d = decision[p.block(a)];
            if (d < 0) d = k == f.terminal() || rng() % 3 == 0;
            if (d) t[a] = k;
        }
    }
    return StoppingTime(std::move(t));
}

ExactModel build_exact_model(const Scenario& sc) {
    std::vector<std::vector<Branch>> per_step;
    for (const auto& k : sc.list("model", "steps")) per_step.push_back(step_branches(k));
    const long cap = sc.integer("scenario", "cap");
    std::size_t base_atoms = 1;
    for (const auto& b : per_step) {
        base_atoms *= b.size();
        if (static_cast<long>(base_atoms) > cap)
            throw CapExceeded("base space exceeds the atom cap of " + std::to_string(cap));
    }
    BaseModel base = build_tree(per_step);
    const int n = base.filtration.horizon();
    const int stages = base.filtration.num_stages();
    const std::size_t atoms = base.space.size();
    const Vec& mu = base.space.weights();

    std::vector<ProcessTable> drivers{base.walk};
    if (sc.text("model", "drivers") == "walk-and-square") {
        ProcessTable sq = base.walk;
        for (int k = 0; k < sq.stages(); ++k)
            for (auto& q : sq[k]) q *= q;
        drivers.push_back(doob_decomposition(sq, base.filtration, mu).martingale);
    }

    auto deterministic = [&](const std::vector<Rational>& values) {
        ProcessTable t(stages, atoms);
        for (int k = 0; k < stages; ++k) std::fill(t[k].begin(), t[k].end(), values[std::min(k, n)]);
        return t;
    };

    const auto& type = sc.text("model", "type");
    std::optional<DensityParams> density;
    std::optional<NaturalParams> nparams;
    std::optional<NaturalModel> natural;
    std::optional<EnlargedSpace> space;
    if (type == "cox") {
        space = cox_model(base.space, base.filtration, CoxParams{deterministic(sc.rationals("model", "survival"))});
    } else if (type == "density") {
        auto mus = sc.rationals("model", "mu");
        auto tilt = sc.rationals("model", "tilt");
        int j = static_cast<int>(sc.integer("model", "tilt_step"));
        DensityParams p;
        p.mu = mus;
        for (std::size_t th = 0; th < mus.size(); ++th) {
            ProcessTable alpha(stages, atoms, Rational(1));
            for (int k = j; k < stages; ++k)
                for (std::size_t a = 0; a < atoms; ++a)
                    alpha[k][a] = 1 + tilt[th] * (base.walk[std::min(j, n)][a] - base.walk[j - 1][a]);
            p.alpha.push_back(alpha);
        }
        space = density_model(base.space, base.filtration, p);
        density = p;
    } else if (type == "honest") {
        const auto& rule = sc.text("model", "rule");
        std::vector<int> tau;
        if (rule == "last-max") tau = last_max_rule(base.walk, n);
        else if (rule == "last-zero") tau = last_zero_rule(base.walk, n);
        else {
            for (const auto& t : sc.list("model", "tau")) tau.push_back(parse_time(t, n));
            if (tau.size() != atoms)
                throw InvalidParameters("tau needs one entry per base atom (" + std::to_string(atoms) + ")");
        }
        space = honest_time_model(base.space, base.filtration, tau);
    } else if (type == "natural") {
        NaturalParams p;
        Rational vol = sc.rational("model", "n_vol");
        p.n = ProcessTable(stages, atoms, Rational(1));
        for (int k = 1; k < stages; ++k)
            for (std::size_t a = 0; a < atoms; ++a)
                p.n[k][a] = k > n ? p.n[n][a] : p.n[k - 1][a] * (1 + vol * (base.walk[k][a] - base.walk[k - 1][a]));
        p.survival = deterministic(sc.rationals("model", "survival"));
        p.y = sc.rational("model", "y_scale") * base.walk;
        if (sc.text("model", "f") == "zero") {
            p.f = zero_function();
        } else {
            p.f = scaled_identity(sc.rational("model", "f_scale"), sc.rational("model", "f_bound"));
            p.f.derivative_bound = sc.rational("model", "f_derivative_bound");
        }
        natural = natural_model_discrete(base.space, base.filtration, p);
        space = natural->space;
        nparams = p;
    } else {
        DefaultKernel kernel;
        Vec law(n + 2, Rational(0));
        if (sc.has("model", "law")) law = sc.rationals("model", "law");
        else law[parse_time(sc.text("model", "fixed"), n)] = 1;
        kernel.rows.assign(atoms, law);
        space = build_product_space(base.space, base.filtration, kernel);
    }
    if (static_cast<long>(space->size()) > cap)
        throw CapExceeded("product space has " + std::to_string(space->size()) + " atoms, above the cap of " +
                          std::to_string(cap));
    return ExactModel{std::move(base), std::move(drivers), std::move(*space), std::move(density), std::move(nparams),
                      std::move(natural)};
}

RunOutcome run(const Scenario& sc, Command cmd, unsigned threads) {
    Json report;
    report["schema"] = kReportSchema;
    report["command"] = cmd == Command::model ? "model" : cmd == Command::check ? "check" : "mc";
    report["scenario"] = Json{{"name", sc.name()}, {"mode", sc.text("scenario", "mode")}, {"canonical", sc.canonical(false)}};
    std::vector<CheckResult> results;
    std::vector<Table> model_tables;
    try {
        if (cmd == Command::check && !sc.exact()) throw EngineError("scenario is in mc mode; use the mc command");
        if (cmd == Command::mc && sc.exact()) throw EngineError("scenario is in exact mode; use the check command");
        auto run_list = sc.list("checks", "run");
        if (sc.exact()) {
            ExactModel m = build_exact_model(sc);
            report["model"] = model_summary(m, sc, model_tables);
            if (cmd == Command::check) {
                for (const auto& id : run_list) {
                    if (id == "mrp") results.push_back(check_mrp(m, sc));
                    else if (id == "drift-eq2") results.push_back(check_drift_eq2(m));
                    else if (id == "drift-eq3") results.push_back(check_drift_eq3(m));
                    else if (id == "appendix") results.push_back(check_appendix(m, sc));
                    else if (id == "harness") for (auto& r : check_harness(m)) results.push_back(r);
                    else if (id == "sh-measure") results.push_back(check_sh_measure(m, sc));
                    else if (id == "l-martingale") results.push_back(check_l_martingale(m));
                    else if (id == "representation") results.push_back(check_representation(m));
                }
            }
        } else {
            Json manifest = mc_manifest(sc);
            if (cmd == Command::mc) results = run_mc_checks(sc, run_list, threads, manifest);
            else mc_config(sc, threads);
            report["manifest"] = manifest;
        }
    } catch (const EngineError& e) {
        report["error"] = e.what();
    } catch (const mc::McError& e) {
        report["error"] = e.what();
    }
    Json tables = Json::array();
    for (const auto& t : model_tables) tables.push_back(t.json());
    report["model_tables"] = tables;
    Json checks = Json::array();
    bool all = true;
    for (const auto& r : results) {
        checks.push_back(r.json());
        all = all && r.passed;
    }
    report["checks"] = checks;
    int code = report.contains("error") ? 2 : all ? 0 : 1;
    report["passed"] = code == 0;
    report["exit_code"] = code;
    return {report, code};
}

std::string render_summary(const Json& report) {
    std::ostringstream out;
    const auto& sc = report["scenario"];
    out << "scenario " << sc["name"].get<std::string>() << " (" << sc["mode"].get<std::string>() << "), command "
        << report["command"].get<std::string>() << "\n";
    if (report.contains("model"))
        for (const auto& [k, v] : report["model"].items()) out << "  " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    if (report.contains("manifest")) {
        const auto& m = report["manifest"];
        out << "  seed: " << m["seed"].dump() << "\n";
        if (m.contains("flagged_paths")) out << "  flagged paths: " << m["flagged_paths"].dump() << "\n";
    }
    if (report.contains("error")) out << "error: " << report["error"].get<std::string>() << "\n";
    for (const auto& c : report["checks"]) {
        std::string tag = !c["applicable"].get<bool>() ? "n/a " : c["passed"].get<bool>() ? "PASS" : "FAIL";
        out << "[" << tag << "] " << c["label"].get<std::string>() << " (" << c["id"].get<std::string>()
            << "): " << c["summary"].get<std::string>() << "\n";
    }
    out << "result: " << (report["passed"].get<bool>() ? "PASS" : "FAIL") << " (exit " << report["exit_code"].dump()
        << ")\n";
    return out.str();
}

std::vector<Artifact> render_artifacts(const Json& report, const std::vector<std::string>& formats) {
    auto wants = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
    std::vector<Artifact> out;
    if (wants("json")) {
        out.push_back({"report.json", report.dump(2) + "\n"});
        if (report.contains("manifest")) out.push_back({"manifest.json", report["manifest"].dump(2) + "\n"});
    }
    if (wants("csv")) {
        for (const auto& t : report["model_tables"])
            out.push_back({"model-" + t["name"].get<std::string>() + ".csv", render_csv(t)});
        std::map<std::string, int> seen;
        for (const auto& c : report["checks"]) {
            std::string base = c["id"].get<std::string>();
            int n = seen[base]++;
            if (n) base += "-" + std::to_string(n);
            for (const auto& t : c["tables"]) out.push_back({base + "-" + t["name"].get<std::string>() + ".csv", render_csv(t)});
        }
        Table checks{"checks", {"id", "label", "applicable", "passed", "summary"}};
        for (const auto& c : report["checks"])
            checks.add(Json::array({c["id"], c["label"], c["applicable"], c["passed"], c["summary"]}));
        out.push_back({"checks.csv", render_csv(checks.json())});
    }
    if (wants("text")) out.push_back({"summary.txt", render_summary(report)});
    return out;
}

void write_artifacts(const std::string& dir, const std::vector<Artifact>& artifacts) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (const auto& a : artifacts) {
        fs::path target = fs::path(dir) / a.name;
        fs::path tmp = fs::path(dir) / ("." + a.name + ".tmp");
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw EngineError("cannot write " + tmp.string());
            f << a.content;
            if (!f.flush()) throw EngineError("write failed for " + tmp.string());
        }
        fs::rename(tmp, target);
    }
}

}  // namespace penf
