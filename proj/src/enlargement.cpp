#include "penf/enlargement.hpp"

#include <map>
#include <tuple>
#include <utility>

namespace penf {

namespace {

FiniteSpace make_product(const FiniteSpace& base, const DefaultKernel& kernel, int terminal,
                         std::vector<ProductAtom>& atoms) {
    if (kernel.rows.size() != base.size()) throw DimensionMismatch("kernel needs one row per base atom");
    Vec w;
    std::vector<std::string> labels;
    for (std::size_t b = 0; b < base.size(); ++b) {
        const Vec& row = kernel.rows[b];
        if (static_cast<int>(row.size()) != terminal + 1)
            throw DimensionMismatch("kernel row must cover every grid index plus infinity");
        Rational total = 0;
        for (const auto& p : row) {
            if (sgn(p) < 0) throw EngineError("kernel row has a negative entry");
            total += p;
        }
        if (total != 1) throw EngineError("kernel row " + std::to_string(b) + " sums to " + to_string(total));
    }
    // Order atoms by default index first; ties by base atom.
    for (int k = 0; k <= terminal; ++k)
        for (std::size_t b = 0; b < base.size(); ++b) {
            const Rational& p = kernel.rows[b][k];
            if (sgn(p) == 0) continue;
            atoms.push_back({k, static_cast<int>(b)});
            w.push_back(base.weight(b) * p);
            labels.push_back((k == terminal ? std::string("inf") : std::to_string(k)) + ":" + base.label(b));
        }
    return FiniteSpace(std::move(w), std::move(labels));
}

}  // namespace

EnlargedSpace::EnlargedSpace(FiniteSpace base, Filtration base_filtration, DefaultKernel kernel)
    : base_(std::move(base)), base_f_(std::move(base_filtration)), kernel_(std::move(kernel)) {
    if (base_f_.atoms() != base_.size()) throw DimensionMismatch("filtration and base space differ in size");
    product_ = make_product(base_, kernel_, terminal(), atoms_);

    std::vector<int> tv(atoms_.size());
    for (std::size_t a = 0; a < atoms_.size(); ++a) tv[a] = atoms_[a].time;
    tau_ = StoppingTime(tv);

    std::vector<Partition> lifted_stages, g_stages;
    for (int k = 0; k < num_stages(); ++k) {
        const Partition& bs = base_f_.stage(k);
        std::vector<int> lb(atoms_.size());
        std::vector<std::pair<int, int>> gk(atoms_.size());
        for (std::size_t a = 0; a < atoms_.size(); ++a) {
            lb[a] = bs.block(atoms_[a].base);
            // tau is seen once it has happened: right limit of tau ^ t on the grid.
            int seen = k == terminal() ? tv[a] : std::min(tv[a], k + 1);
            gk[a] = {lb[a], seen};
        }
        lifted_stages.emplace_back(lb);
        g_stages.push_back(partition_from_keys(gk));
    }
    lifted_ = Filtration(base_f_.grid(), lifted_stages);
    g_ = Filtration(base_f_.grid(), g_stages);
}

Vec EnlargedSpace::lift(const Vec& base_var) const {
    if (base_var.size() != base_.size()) throw DimensionMismatch("lift: variable is not on the base space");
    Vec out(atoms_.size());
    for (std::size_t a = 0; a < atoms_.size(); ++a) out[a] = base_var[atoms_[a].base];
    return out;
}

ProcessTable EnlargedSpace::lift(const ProcessTable& base_process) const {
    if (base_process.stages() != num_stages()) throw DimensionMismatch("lift: process has the wrong number of stages");
    std::vector<Vec> rows;
    for (int k = 0; k < base_process.stages(); ++k) rows.push_back(lift(base_process[k]));
    return ProcessTable(rows);
}

EnlargedSpace build_product_space(const FiniteSpace& base, const Filtration& f, const DefaultKernel& kernel) {
    return EnlargedSpace(base, f, kernel);
}

Mask alive_after(const EnlargedSpace& s, int k) {
    Mask m(s.size());
    for (std::size_t a = 0; a < s.size(); ++a)
        m[a] = k == s.terminal() ? s.tau()[a] == s.terminal() : s.tau()[a] > k;
    return m;
}

Partition g_star(const EnlargedSpace& s, const StoppingTime& t, GStarMutation mutation) {
    if (!is_stopping_time(t, s.G())) throw NotStoppingTime("g_star: T is not a G-stopping time");
    Partition ft = sigma_at_random_time(t, s.lifted(), SigmaKind::at);
    const Partition& finf = s.lifted().stage(s.terminal());
    std::vector<std::tuple<int, int, int>> keys(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) {
        int tau = s.tau()[a];
        int tv = t[a];
        if (tv == s.terminal()) {
            keys[a] = {2, tau, finf.block(a)};
        } else if (tv < tau) {
            keys[a] = {0, 0, ft.block(a)};
        } else {
            int tau_key = mutation == GStarMutation::drop_tau_generator ? 0 : tau;
            keys[a] = {1, tau_key, ft.block(a)};
        }
    }
    return partition_from_keys(keys);
}

namespace {

std::vector<Partition> fragment_stages(const EnlargedSpace& s, const StoppingTime& start, const StoppingTime& end,
                                       FragmentMutation mutation, GStarMutation gstar_mutation) {
    if (start.size() != s.size() || end.size() != s.size())
        throw DimensionMismatch("fragment_filtration: stopping times on a different space");
    StoppingTime t_end = max(start, end);
    Partition gstar = g_star(s, t_end, gstar_mutation);
    std::vector<Partition> stages;
    for (int k = 0; k < s.num_stages(); ++k) {
        StoppingTime r = max(start, StoppingTime::constant(s.size(), k));
        Partition gr = sigma_at_random_time(r, s.G(), SigmaKind::at);
        std::vector<std::pair<int, int>> keys(s.size());
        for (std::size_t a = 0; a < s.size(); ++a) {
            bool settled = t_end[a] <= r[a];
            // Reversed inequality; a strict/non-strict swap is invisible since G*_T = G_T on the grid.
            if (mutation == FragmentMutation::flip_comparison) settled = r[a] < t_end[a];
            keys[a] = settled ? std::pair{0, gstar.block(a)} : std::pair{1, gr.block(a)};
        }
        stages.push_back(partition_from_keys(keys));
    }
    return stages;
}

}  // namespace

Filtration fragment_filtration(const EnlargedSpace& s, const StoppingTime& start, const StoppingTime& end,
                               FragmentMutation mutation, GStarMutation gstar_mutation) {
    return Filtration(s.G().grid(), fragment_stages(s, start, end, mutation, gstar_mutation));
}

ProcessTable fragment_process(const ProcessTable& x, const StoppingTime& start, const StoppingTime& end) {
    if (start.size() != x.atoms() || end.size() != x.atoms())
        throw DimensionMismatch("fragment_process: stopping times on a different space");
    ProcessTable out(x.stages(), x.atoms());
    for (int k = 0; k < x.stages(); ++k)
        for (std::size_t a = 0; a < x.atoms(); ++a) {
            int s = start[a];
            int t = std::max(s, end[a]);
            int r = std::min(std::max(s, k), t);
            out[k][a] = x[r][a] - x[s][a];
        }
    return out;
}

namespace {

// Every increment supported on `mask` that is a martingale increment for
// (src_prev -> src_now) must also be centred given tgt_prev. Per source node C
// and target block D this means mu(E ∩ D ∩ mask) is proportional to mu(E) over
// the children E of C. Returns offending atoms, or empty.
std::vector<int> transfer_witness(const Partition& src_prev, const Partition& src_now, const Partition& tgt_prev,
                                  const Mask& mask, const Vec& mu) {
    std::map<int, std::vector<int>> children;  // C -> list of E
    std::vector<Rational> mass(src_now.num_blocks());
    std::vector<int> parent(src_now.num_blocks(), -1);
    for (std::size_t a = 0; a < mu.size(); ++a) {
        int e = src_now.block(a);
        mass[e] += mu[a];
        if (parent[e] < 0) {
            parent[e] = src_prev.block(a);
            children[parent[e]].push_back(e);
        }
    }
    std::map<std::pair<int, int>, std::map<int, Rational>> nu;  // (C, D) -> E -> mass
    std::map<std::pair<int, int>, std::vector<int>> members;
    for (std::size_t a = 0; a < mu.size(); ++a) {
        if (!mask[a]) continue;
        std::pair<int, int> key{src_prev.block(a), tgt_prev.block(a)};
        nu[key][src_now.block(a)] += mu[a];
        members[key].push_back(static_cast<int>(a));
    }
    for (const auto& [key, masses] : nu) {
        const auto& kids = children[key.first];
        Rational ratio = -1;
        for (int e : kids) {
            auto it = masses.find(e);
            Rational r = it == masses.end() ? Rational(0) : it->second / mass[e];
            if (ratio < 0) ratio = r;
            else if (r != ratio) return members[key];
        }
    }
    return {};
}

IdentityResult compare(const std::string& name, const Partition& lhs, const Partition& rhs) {
    IdentityResult r{name};
    if (lhs == rhs) return r;
    r.passed = false;
    r.witness = refinement_witness(lhs, rhs);
    if (r.witness.empty()) r.witness = refinement_witness(rhs, lhs);
    r.detail = "partitions differ";
    return r;
}

}  // namespace

bool AppendixReport::all_passed() const {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

const IdentityResult& AppendixReport::find(const std::string& name) const {
    for (const auto& r : results)
        if (r.name == name) return r;
    throw EngineError("no identity named " + name);
}

AppendixReport check_appendix_identities(const EnlargedSpace& s, const StoppingTime& start, const StoppingTime& end,
                                         const AppendixOptions& options) {
    if (!is_stopping_time(start, s.G()) || !is_stopping_time(end, s.G()))
        throw NotStoppingTime("check_appendix_identities: S and T must be G-stopping times");
    AppendixReport rep;
    const std::size_t n = s.size();
    const int inf = s.terminal();
    const StoppingTime& tau = s.tau();
    const Partition& finf = s.lifted().stage(inf);

    // Both decompositions of G_{T-}, checked for T and for S.
    for (const auto& [tag, t] : {std::pair{std::string("T"), end}, std::pair{std::string("S"), start}}) {
        Partition direct = sigma_at_random_time(t, s.G(), SigmaKind::before);
        Partition fminus = sigma_at_random_time(t, s.lifted(), SigmaKind::before);
        std::vector<std::tuple<int, int, int>> k1(n), k2(n);
        for (std::size_t a = 0; a < n; ++a) {
            int tv = t[a], tt = tau[a];
            if (tv == inf) {
                k1[a] = k2[a] = {2, tt, finf.block(a)};
                continue;
            }
            k1[a] = tv <= tt ? std::tuple{0, 0, fminus.block(a)} : std::tuple{1, tt, fminus.block(a)};
            k2[a] = tv < tt ? std::tuple{0, 0, fminus.block(a)} : std::tuple{1, tt, fminus.block(a)};
        }
        rep.results.push_back(compare("swing-first-form[" + tag + "]", direct, partition_from_keys(k1)));
        rep.results.push_back(compare("swing-second-form[" + tag + "]", direct, partition_from_keys(k2)));
    }

    // G_{T-} ⊆ G*_T ⊆ G_T.
    Partition gs_t = g_star(s, end, options.gstar);
    {
        IdentityResult r{"gstar-sandwich"};
        Partition below = sigma_at_random_time(end, s.G(), SigmaKind::before);
        Partition above = sigma_at_random_time(end, s.G(), SigmaKind::at);
        auto w1 = refinement_witness(gs_t, below);
        auto w2 = refinement_witness(above, gs_t);
        if (!w1.empty() || !w2.empty()) {
            r.passed = false;
            r.witness = !w1.empty() ? w1 : w2;
            r.detail = !w1.empty() ? "G_{T-} not contained in G*_T" : "G*_T not contained in G_T";
        }
        rep.results.push_back(r);
    }

    // G*_{S v T} = {S<T} ∩ G*_T + {T<=S} ∩ G*_S.
    {
        StoppingTime sv = max(start, end);
        Partition lhs = g_star(s, sv, options.gstar);
        Partition gs_s = g_star(s, start, options.gstar);
        std::vector<std::pair<int, int>> keys(n);
        for (std::size_t a = 0; a < n; ++a)
            keys[a] = start[a] < end[a] ? std::pair{0, gs_t.block(a)} : std::pair{1, gs_s.block(a)};
        rep.results.push_back(compare("gstar-split", lhs, partition_from_keys(keys)));
    }

    std::vector<Partition> frag = fragment_stages(s, start, end, options.fragment, options.gstar);
    Filtration frag_f = Filtration::unchecked(s.G().grid(), frag);
    StoppingTime t_end = max(start, end);

    {
        IdentityResult r{"propA-filtration"};
        for (std::size_t k = 1; k < frag.size() && r.passed; ++k) {
            auto w = refinement_witness(frag[k], frag[k - 1]);
            if (!w.empty()) {
                r.passed = false;
                r.witness = w;
                r.detail = "stage " + std::to_string(k) + " does not refine stage " + std::to_string(k - 1);
            }
        }
        rep.results.push_back(r);
    }

    {
        Partition at_end = sigma_at_random_time(t_end, frag_f, SigmaKind::at);
        Partition gs_end = g_star(s, t_end, options.gstar);
        IdentityResult r1 = compare("propA-stopped-at-T", at_end, gs_end);
        rep.results.push_back(r1);
        Partition at_start = sigma_at_random_time(start, frag_f, SigmaKind::at);
        rep.results.push_back(compare("propA-stopped-at-S", at_start, frag.front()));
    }

    // Adaptedness transfer in both directions, tested on step processes Z 1{t >= j}.
    // Their fragments are Z 1{S < j <= r_k} with r_k = (S v k) ^ T, so Z only matters on that event.
    // Forward, Z ranges over G_j off {T = j} and over G*_j on it (the X_T in G*_T condition).
    {
        IdentityResult r{"propA-adapted"};
        for (int k = 1; k < s.num_stages() && r.passed; ++k) {
            StoppingTime rk = min(max(start, StoppingTime::constant(n, k)), t_end);
            for (int j = 1; j <= k && r.passed; ++j) {
                Mask e(n);
                Vec ind(n, Rational(0));
                for (std::size_t a = 0; a < n; ++a) {
                    e[a] = start[a] < j && j <= rk[a];
                    if (e[a]) ind[a] = 1;
                }
                Partition gstar_j = g_star(s, StoppingTime::constant(n, j), options.gstar);
                std::vector<std::pair<int, int>> keys(n);
                for (std::size_t a = 0; a < n; ++a)
                    keys[a] = t_end[a] == j ? std::pair{0, gstar_j.block(a)} : std::pair{1, s.G().stage(j).block(a)};
                Partition allowed = partition_from_keys(keys);
                auto fail = [&](std::vector<int> w, const std::string& what) {
                    r.passed = false;
                    r.witness = std::move(w);
                    r.detail = what + " at stage " + std::to_string(k) + " for a step at " + std::to_string(j);
                };
                if (!is_measurable(ind, frag[k]))
                    fail({}, "G-adapted fragment not adapted");
                else if (auto w = refinement_witness(restrict_to(frag[k], e), restrict_to(allowed, e)); !w.empty())
                    fail(w, "G-adapted fragment not adapted");
                else if (!is_measurable(ind, s.G().stage(k)))
                    fail({}, "fragment-adapted process not G-adapted");
                else if (auto w2 = refinement_witness(restrict_to(s.G().stage(k), e), restrict_to(frag[j], e));
                         !w2.empty())
                    fail(w2, "fragment-adapted process not G-adapted");
            }
        }
        rep.results.push_back(r);
    }

    // Martingale transfer in both directions.
    {
        IdentityResult fwd{"propA-martingale-forward"}, bwd{"propA-martingale-converse"};
        for (int k = 1; k < s.num_stages(); ++k) {
            Mask live(n);
            for (std::size_t a = 0; a < n; ++a) live[a] = start[a] < k && k <= t_end[a];
            if (fwd.passed) {
                auto w = transfer_witness(s.G().stage(k - 1), s.G().stage(k), frag[k - 1], live, s.mu());
                if (!w.empty()) {
                    fwd.passed = false;
                    fwd.witness = w;
                    fwd.detail = "increment at stage " + std::to_string(k) + " not centred in the fragment filtration";
                }
            }
            if (bwd.passed) {
                auto w = transfer_witness(frag[k - 1], frag[k], s.G().stage(k - 1), live, s.mu());
                if (!w.empty()) {
                    bwd.passed = false;
                    bwd.witness = w;
                    bwd.detail = "increment at stage " + std::to_string(k) + " not centred in G";
                }
            }
        }
        rep.results.push_back(fwd);
        rep.results.push_back(bwd);
    }
    return rep;
}

bool gtau_equality(const EnlargedSpace& s) {
    Mask d(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) d[a] = s.tau()[a] > 0 && s.tau()[a] < s.terminal();
    Partition at = sigma_at_random_time(s.tau(), s.G(), SigmaKind::at);
    Partition before = sigma_at_random_time(s.tau(), s.G(), SigmaKind::before);
    return restrict_to(at, d) == restrict_to(before, d);
}

}  // namespace penf
