#include "penf/representation.hpp"

#include <algorithm>
#include <map>

#include "penf/linalg.hpp"

namespace penf {

namespace {

// A block of stage k-1 with its stage-k children.
struct Node {
    int block = 0;
    std::vector<int> children;  // child block ids
    std::vector<int> rep;       // one atom per child
    Vec q;                      // conditional child probabilities
    std::vector<int> atoms;     // all atoms of the node
};

std::vector<Node> nodes_of(const Partition& parent, const Partition& child, const Vec& mu) {
    std::vector<Node> nodes(parent.num_blocks());
    std::vector<std::map<int, std::size_t>> index(parent.num_blocks());
    std::vector<Rational> mass(parent.num_blocks());
    for (std::size_t a = 0; a < mu.size(); ++a) {
        int pb = parent.block(a), cb = child.block(a);
        Node& n = nodes[pb];
        n.block = pb;
        n.atoms.push_back(static_cast<int>(a));
        auto [it, fresh] = index[pb].try_emplace(cb, n.children.size());
        if (fresh) {
            n.children.push_back(cb);
            n.rep.push_back(static_cast<int>(a));
            n.q.emplace_back(0);
        }
        n.q[it->second] += mu[a];
        mass[pb] += mu[a];
    }
    for (std::size_t b = 0; b < nodes.size(); ++b)
        for (auto& q : nodes[b].q) q /= mass[b];
    return nodes;
}

std::size_t child_index(const Node& n, const Partition& child, int atom) {
    auto it = std::find(n.children.begin(), n.children.end(), child.block(atom));
    return static_cast<std::size_t>(it - n.children.begin());
}

void require_product(const ProcessTable& x, const EnlargedSpace& s, const char* what) {
    if (x.stages() != s.num_stages() || x.atoms() != s.size())
        throw DimensionMismatch(std::string(what) + ": process must live on the product space");
}

Vec indicator(const Mask& m) {
    Vec v(m.size());
    for (std::size_t a = 0; a < m.size(); ++a) v[a] = m[a] ? 1 : 0;
    return v;
}

// Solve target_k - E[target_k | parent] = sum_i J^i dX^i_k node by node; J^i is constant on nodes.
// Only atoms with use(a) take part.
template <class Use>
std::vector<Vec> solve_step(const Partition& parent, const Partition& child, const Vec& mu, const Vec& target,
                            const std::vector<Vec>& increments, Use use, int step) {
    const std::size_t drivers = increments.size();
    std::vector<Vec> j(drivers, Vec(mu.size()));
    Vec w(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a) w[a] = use(a) ? mu[a] : Rational(0);
    std::map<int, Rational> node_mass, node_mean;
    for (std::size_t a = 0; a < mu.size(); ++a) {
        if (!use(a)) continue;
        node_mass[parent.block(a)] += w[a];
        node_mean[parent.block(a)] += w[a] * target[a];
    }
    std::map<int, std::map<int, int>> reps;  // parent block -> child block -> atom
    for (std::size_t a = 0; a < mu.size(); ++a)
        if (use(a)) reps[parent.block(a)].try_emplace(child.block(a), static_cast<int>(a));
    for (const auto& [pb, kids] : reps) {
        Rational mean = node_mean[pb] / node_mass[pb];
        Matrix m;
        Vec rhs;
        for (const auto& [cb, a] : kids) {
            Vec row;
            for (std::size_t i = 0; i < drivers; ++i) row.push_back(increments[i][a]);
            m.push_back(row);
            rhs.push_back(target[a] - mean);
        }
        auto sol = solve(m, rhs, drivers);
        if (!sol) throw MrpGap("no integrand represents the martingale at step " + std::to_string(step));
        for (std::size_t a = 0; a < mu.size(); ++a)
            if (use(a) && parent.block(a) == pb)
                for (std::size_t i = 0; i < drivers; ++i) j[i][a] = (*sol)[i];
    }
    return j;
}

}  // namespace

MrpCertificate mrp_check(const Vec& mu, const Filtration& f, const std::vector<ProcessTable>& drivers) {
    for (const auto& d : drivers)
        if (!is_martingale(d, f, mu)) throw EngineError("mrp_check: driver is not a martingale");
    MrpCertificate cert;
    for (int k = 1; k < f.num_stages(); ++k) {
        std::vector<Vec> inc;
        for (const auto& d : drivers) inc.push_back(d.increment(k));
        for (const Node& node : nodes_of(f.stage(k - 1), f.stage(k), mu)) {
            if (node.atoms.empty()) continue;
            const std::size_t m = node.children.size();
            Matrix rows;
            for (const auto& v : inc) {
                Vec r;
                for (int a : node.rep) r.push_back(v[a]);
                rows.push_back(r);
            }
            int span = static_cast<int>(rank(rows, m));
            cert.nodes.push_back({k, node.block, static_cast<int>(m) - 1, span});
            if (span >= static_cast<int>(m) - 1 || !cert.spanning) continue;

            cert.spanning = false;
            cert.gap_step = k;
            cert.gap_block = node.block;
            Matrix orth{node.q};
            for (const auto& r : rows) {
                Vec weighted(m);
                for (std::size_t c = 0; c < m; ++c) weighted[c] = node.q[c] * r[c];
                orth.push_back(weighted);
            }
            Vec v = nullspace(orth, m).front();
            ProcessTable w(f.num_stages(), f.atoms());
            const Partition& child = f.stage(k);
            for (int a : node.atoms) {
                const Rational& val = v[child_index(node, child, a)];
                for (int j = k; j < f.num_stages(); ++j) w[j][a] = val;
            }
            cert.witness = std::move(w);
        }
    }
    return cert;
}

RepresentationTriple integrand_solver_before(const EnlargedSpace& s, const Vec& zeta,
                                             const std::vector<ProcessTable>& drivers) {
    if (zeta.size() != s.size()) throw DimensionMismatch("integrand_solver_before: zeta on a different space");
    if (!is_measurable(zeta, sigma_at(s.tau(), s.G(), SigmaKind::at)))
        throw EngineError("integrand_solver_before: zeta is not measurable for G_tau");
    const Vec& mu = s.mu();
    const Filtration& fh = s.lifted();
    for (const auto& d : drivers) {
        require_product(d, s, "integrand_solver_before");
        if (!is_martingale(d, fh, mu)) throw EngineError("integrand_solver_before: driver is not an F^-martingale");
    }
    const int stages = s.num_stages();
    const int n = s.horizon();
    const auto& tau = s.tau();
    ProcessTable z = azema_Z(s);
    ProcessTable a_pred = dual_projections(tau, fh, mu).predictable;

    RepresentationTriple out;
    out.x = ProcessTable(stages, s.size());
    for (int k = 0; k < stages; ++k) {
        Vec alive = indicator(alive_after(s, k));
        for (std::size_t a = 0; a < s.size(); ++a) alive[a] *= zeta[a];
        Vec e = cond_exp(alive, fh.stage(k), mu);
        for (std::size_t a = 0; a < s.size(); ++a) out.x[k][a] = sgn(z[k][a]) == 0 ? Rational(0) : e[a] / z[k][a];
    }

    out.k = ProcessTable(stages, s.size());
    for (int k = 1; k <= n; ++k) {
        Vec num(s.size());
        for (std::size_t a = 0; a < s.size(); ++a)
            if (tau[a] == k) num[a] = zeta[a] - out.x[k][a];
        Vec e = cond_exp(num, fh.stage(k - 1), mu);
        Vec da = a_pred.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) out.k[k][a] = sgn(da[a]) == 0 ? Rational(0) : e[a] / da[a];
    }

    out.xi = Vec(s.size());
    for (std::size_t a = 0; a < s.size(); ++a)
        if (tau[a] > 0 && tau[a] <= n) out.xi[a] = zeta[a] - out.x[tau[a]][a] - out.k[tau[a]][a];

    out.j.assign(drivers.size(), ProcessTable(stages, s.size()));
    for (int k = 1; k < stages; ++k) {
        Vec v = out.x.increment(k);
        if (k <= n) {
            Vec da = a_pred.increment(k);
            for (std::size_t a = 0; a < s.size(); ++a)
                if (sgn(z[k - 1][a]) != 0) v[a] += out.k[k][a] * da[a] / z[k - 1][a];
        }
        std::vector<Vec> inc;
        for (const auto& d : drivers) inc.push_back(d.increment(k));
        auto j = solve_step(fh.stage(k - 1), fh.stage(k), mu, v, inc, [](std::size_t) { return true; }, k);
        for (std::size_t i = 0; i < drivers.size(); ++i) out.j[i][k] = j[i];
    }

    std::vector<ProcessTable> tilde;
    for (const auto& d : drivers) tilde.push_back(drift_exact(d, s).martingale_part);
    ProcessTable l = default_martingale_L(s);
    ProcessTable h = default_indicator(s);

    out.target = ProcessTable(stages, s.size());
    out.rebuilt = ProcessTable(stages, s.size());
    for (int k = 0; k < stages; ++k) out.target[k] = cond_exp(zeta, s.G().stage(k), mu);
    Vec running = out.target[0];
    for (int k = 0; k < stages; ++k) {
        Vec dl = l.increment(k);
        std::vector<Vec> dw;
        for (const auto& t : tilde) dw.push_back(t.increment(k));
        for (std::size_t a = 0; a < s.size(); ++a) {
            if (k > 0 && k <= tau[a]) {
                running[a] += out.k[k][a] * dl[a];
                for (std::size_t i = 0; i < drivers.size(); ++i) running[a] += out.j[i][k][a] * dw[i][a];
            }
            out.rebuilt[k][a] = running[a] + out.xi[a] * h[k][a];
        }
    }
    out.exact = out.rebuilt == out.target;
    return out;
}

bool residual_is_orthogonal(const EnlargedSpace& s, const Vec& xi) {
    Vec restricted(s.size());
    for (std::size_t a = 0; a < s.size(); ++a)
        if (s.tau()[a] > 0 && s.tau()[a] <= s.horizon()) restricted[a] = xi[a];
    Vec e = cond_exp(restricted, sigma_at_random_time(s.tau(), s.G(), SigmaKind::before), s.mu());
    return std::all_of(e.begin(), e.end(), [](const Rational& v) { return sgn(v) == 0; });
}

HonestRepresentation honest_full_representation(const EnlargedSpace& s, const Vec& zeta,
                                                const std::vector<ProcessTable>& drivers) {
    if (zeta.size() != s.size()) throw DimensionMismatch("honest_full_representation: zeta on a different space");
    std::vector<int> base_tau(s.base().size(), -1);
    for (const auto& atom : s.atoms()) {
        if (base_tau[atom.base] >= 0) throw EngineError("honest_full_representation: tau is not F-measurable");
        base_tau[atom.base] = atom.time;
    }
    if (!is_honest(s.base_filtration(), base_tau)) throw EngineError("honest_full_representation: tau is not honest");

    const Vec& mu = s.mu();
    const int stages = s.num_stages();
    const auto& tau = s.tau();
    HonestRepresentation out;
    Vec zeta_tau = cond_exp(zeta, sigma_at(tau, s.G(), SigmaKind::at), mu);
    out.before = integrand_solver_before(s, zeta_tau, drivers);

    std::vector<ProcessTable> tilde;
    for (const auto& d : drivers) tilde.push_back(drift_exact(d, s).martingale_part);
    out.target = ProcessTable(stages, s.size());
    for (int k = 0; k < stages; ++k) out.target[k] = cond_exp(zeta, s.G().stage(k), mu);

    out.j_after.assign(drivers.size(), ProcessTable(stages, s.size()));
    for (int k = 1; k < stages; ++k) {
        std::vector<Vec> inc;
        for (const auto& t : tilde) inc.push_back(t.increment(k));
        Vec target = out.target[k];
        auto after = [&](std::size_t a) { return tau[a] < k; };
        auto j = solve_step(s.G().stage(k - 1), s.G().stage(k), mu, target, inc, after, k);
        // After an honest time the integrand must be readable from F^_{k-1}.
        const Partition& node = s.lifted().stage(k - 1);
        for (std::size_t i = 0; i < drivers.size(); ++i) {
            std::map<int, Rational> seen;
            for (std::size_t a = 0; a < s.size(); ++a) {
                if (!after(a)) continue;
                auto [it, fresh] = seen.try_emplace(node.block(a), j[i][a]);
                if (!fresh && it->second != j[i][a])
                    throw EngineError("honest_full_representation: integrand after default is not F-predictable");
            }
            out.j_after[i][k] = j[i];
        }
    }

    out.rebuilt = out.before.rebuilt;
    for (std::size_t a = 0; a < s.size(); ++a) {
        Rational extra = 0;
        for (int k = 1; k < stages; ++k) {
            if (tau[a] < k)
                for (std::size_t i = 0; i < drivers.size(); ++i)
                    extra += out.j_after[i][k][a] * tilde[i].increment(k)[a];
            out.rebuilt[k][a] += extra;
        }
    }
    out.exact = out.rebuilt == out.target;
    return out;
}

MrpCertificate fragment_mrp_check(const EnlargedSpace& s, const MeasureChange& q, const StoppingTime& start,
                                  const StoppingTime& end, const std::vector<ProcessTable>& drivers) {
    ShCheck check = sh_measure_check(s, q, start, end, martingale_basis(s));
    if (!check.passed) throw ShMeasureFailure("fragment_mrp_check: " + check.detail);
    std::vector<ProcessTable> pieces;
    for (const auto& d : drivers) {
        require_product(d, s, "fragment_mrp_check");
        pieces.push_back(fragment_process(d, start, end));
    }
    return mrp_check(q.reweight(s.mu()), fragment_filtration(s, start, end), pieces);
}

Filtration stopped_filtration(const EnlargedSpace& s) {
    std::vector<Partition> stages;
    for (int k = 0; k < s.num_stages(); ++k)
        stages.push_back(sigma_at(min(s.tau(), StoppingTime::constant(s.size(), k)), s.G(), SigmaKind::at));
    return Filtration(s.G().grid(), stages);
}

ProcessTable stopped(const ProcessTable& x, const StoppingTime& t) {
    if (t.size() != x.atoms()) throw DimensionMismatch("stopped: time on a different space");
    ProcessTable out(x.stages(), x.atoms());
    for (int k = 0; k < x.stages(); ++k)
        for (std::size_t a = 0; a < x.atoms(); ++a) out[k][a] = x[std::min(k, t[a])][a];
    return out;
}

bool HarnessReport::all_consistent() const {
    return std::all_of(equivalences.begin(), equivalences.end(), [](const Equivalence& e) { return e.consistent(); });
}

HarnessReport theorem_harness(const EnlargedSpace& s, const std::vector<ProcessTable>& drivers) {
    HarnessReport r;
    r.f_mrp = mrp_check(s.base().weights(), s.base_filtration(), drivers).spanning;
    if (!r.f_mrp) throw MrpGap("theorem_harness: the drivers do not span the base martingales");

    std::vector<ProcessTable> lifted, tilde;
    for (const auto& d : drivers) lifted.push_back(s.lift(d));
    r.d_w = true;
    for (const auto& w : lifted) {
        auto dec = drift_exact(w, s);
        tilde.push_back(dec.martingale_part);
        if (!(dec.drift == ProcessTable(s.num_stages(), s.size()))) r.d_w = false;
    }
    ProcessTable l = default_martingale_L(s);

    std::vector<ProcessTable> g_drivers = tilde;
    g_drivers.push_back(l);
    r.e = mrp_check(s.mu(), s.G(), g_drivers).spanning;

    std::vector<ProcessTable> stopped_drivers;
    for (const auto& t : tilde) stopped_drivers.push_back(stopped(t, s.tau()));
    stopped_drivers.push_back(l);
    r.a = mrp_check(s.mu(), stopped_filtration(s), stopped_drivers).spanning;

    Partition before = sigma_at_random_time(s.tau(), s.G(), SigmaKind::before);
    r.b = true;
    for (const auto& w : lifted) {
        Vec v(s.size());
        for (std::size_t a = 0; a < s.size(); ++a) {
            int t = s.tau()[a];
            if (t > 0 && t <= s.horizon()) v[a] = w[t][a];
        }
        if (!is_measurable(v, before)) r.b = false;
    }
    r.c = gtau_equality(s);
    r.d = immersion_check(s);

    Covering cov = step_covering(s);
    r.covering_available = cov.available;
    r.covering_detail = cov.detail;
    if (cov.available) {
        r.covering_verified = true;
        auto basis = martingale_basis(s);
        for (const auto& piece : cov.pieces) {
            MeasureChange q(piece.density, s.mu());
            if (!sh_measure_check(s, q, piece.start, piece.end, basis).passed) {
                r.covering_verified = false;
                r.covering_detail = "step " + std::to_string(piece.step) + ": piece fails the sH check";
                break;
            }
        }
    }

    r.equivalences.push_back({"Thm3.3-iff", true, r.a && r.b, r.c});
    r.equivalences.push_back({"Thm5.1-iff", r.covering_available && r.covering_verified, r.e && r.b, r.c});
    r.equivalences.push_back({"Thm6.1-iff", true, r.d && r.b, r.d_w && r.e && r.c});
    return r;
}

}  // namespace penf
