#include "penf/calculus.hpp"

#include <algorithm>
#include <map>

namespace penf {

namespace {

void require_product_shape(const ProcessTable& x, const EnlargedSpace& s, const char* what) {
    if (x.stages() != s.num_stages() || x.atoms() != s.size())
        throw DimensionMismatch(std::string(what) + ": table must live on the product space");
}

// Per atom: mu(fine block ∩ coarse block) / mu(coarse block).
Vec child_probability(const Partition& fine, const Partition& coarse, const Vec& mu) {
    std::map<std::pair<int, int>, Rational> joint;
    std::vector<Rational> coarse_mass(coarse.num_blocks());
    for (std::size_t a = 0; a < mu.size(); ++a) {
        joint[{coarse.block(a), fine.block(a)}] += mu[a];
        coarse_mass[coarse.block(a)] += mu[a];
    }
    Vec out(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a)
        out[a] = joint[{coarse.block(a), fine.block(a)}] / coarse_mass[coarse.block(a)];
    return out;
}

bool before_mask(const EnlargedSpace& s, int k, std::size_t a) { return s.tau()[a] >= k; }

}  // namespace

ProcessTable azema_Z(const EnlargedSpace& s) {
    ProcessTable z(s.num_stages(), s.size());
    for (int k = 0; k < s.num_stages(); ++k) {
        Mask alive = alive_after(s, k);
        Vec ind(s.size());
        for (std::size_t a = 0; a < s.size(); ++a) ind[a] = alive[a] ? 1 : 0;
        z[k] = cond_exp(ind, s.lifted().stage(k), s.mu());
    }
    return z;
}

AzemaDecomposition azema_decomposition(const EnlargedSpace& s) {
    AzemaDecomposition d;
    d.z = azema_Z(s);
    auto dp = dual_projections(s.tau(), s.lifted(), s.mu());
    d.predictable = dp.predictable;
    d.optional = dp.optional;
    d.martingale = d.z + d.predictable;
    d.m = d.martingale + d.optional - d.predictable;
    return d;
}

std::vector<int> z_left_limit_violations(const EnlargedSpace& s) {
    ProcessTable z = azema_Z(s);
    std::vector<int> bad;
    for (std::size_t a = 0; a < s.size(); ++a) {
        int t = s.tau()[a];
        if (t >= 1 && t <= s.horizon() && sgn(z[t - 1][a]) == 0) bad.push_back(static_cast<int>(a));
    }
    return bad;
}

ProcessTable default_indicator(const EnlargedSpace& s) {
    ProcessTable h(s.num_stages(), s.size());
    for (int k = 0; k < s.num_stages(); ++k)
        for (std::size_t a = 0; a < s.size(); ++a) h[k][a] = s.tau()[a] <= std::min(k, s.horizon()) ? 1 : 0;
    return h;
}

ProcessTable default_martingale_L(const EnlargedSpace& s) {
    ProcessTable z = azema_Z(s);
    ProcessTable a_pred = dual_projections(s.tau(), s.lifted(), s.mu()).predictable;
    ProcessTable l(s.num_stages(), s.size());
    for (int k = 1; k <= s.horizon(); ++k) {
        Vec da = a_pred.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            Rational step = s.tau()[a] == k ? 1 : 0;
            if (before_mask(s, k, a)) {
                if (sgn(z[k - 1][a]) == 0) throw EngineError("default_martingale_L: Z vanishes before default");
                step -= da[a] / z[k - 1][a];
            }
            l[k][a] = l[k - 1][a] + step;
        }
    }
    l[s.terminal()] = l[s.horizon()];
    return l;
}

DriftDecomposition drift_exact(const ProcessTable& x, const EnlargedSpace& s) {
    require_product_shape(x, s, "drift_exact");
    if (!is_martingale(x, s.lifted(), s.mu())) throw EngineError("drift_exact: X is not an F^-martingale");
    ProcessTable drift(s.num_stages(), s.size());
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec e = cond_exp(x.increment(k), s.G().stage(k - 1), s.mu());
        for (std::size_t a = 0; a < s.size(); ++a) drift[k][a] = drift[k - 1][a] + e[a];
    }
    return {x - drift, drift};
}

ProcessTable drift_before_formula(const ProcessTable& x, const EnlargedSpace& s) {
    require_product_shape(x, s, "drift_before_formula");
    auto d = azema_decomposition(s);
    ProcessTable br = predictable_bracket(d.m, x, s.lifted(), s.mu());
    ProcessTable out(s.num_stages(), s.size());
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec db = br.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            out[k][a] = out[k - 1][a];
            if (!before_mask(s, k, a)) continue;
            if (sgn(d.z[k - 1][a]) == 0) throw EngineError("drift_before_formula: Z vanishes before default");
            out[k][a] += db[a] / d.z[k - 1][a];
        }
    }
    return out;
}

ProcessTable drift_after_honest_formula(const ProcessTable& x, const EnlargedSpace& s, int sign) {
    require_product_shape(x, s, "drift_after_honest_formula");
    auto d = azema_decomposition(s);
    ProcessTable br = predictable_bracket(d.m, x, s.lifted(), s.mu());
    ProcessTable out(s.num_stages(), s.size());
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec db = br.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            out[k][a] = out[k - 1][a];
            if (before_mask(s, k, a)) continue;
            Rational gap = 1 - d.z[k - 1][a];
            if (sgn(gap) == 0) throw EngineError("drift_after_honest_formula: 1 - Z vanishes after default");
            out[k][a] += sign * db[a] / gap;
        }
    }
    return out;
}

bool increments_agree(const ProcessTable& a, const ProcessTable& b, const EnlargedSpace& s, Region region) {
    require_product_shape(a, s, "increments_agree");
    require_product_shape(b, s, "increments_agree");
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec da = a.increment(k), db = b.increment(k);
        for (std::size_t i = 0; i < s.size(); ++i) {
            bool in = before_mask(s, k, i) == (region == Region::before);
            if (in && da[i] != db[i]) return false;
        }
    }
    return true;
}

SignResolution resolve_after_sign(const ProcessTable& x, const EnlargedSpace& s) {
    ProcessTable exact = drift_exact(x, s).drift;
    return {increments_agree(drift_after_honest_formula(x, s, +1), exact, s, Region::after),
            increments_agree(drift_after_honest_formula(x, s, -1), exact, s, Region::after)};
}

NaturalDrift drift_natural_formula(const ProcessTable& x, const NaturalModel& model, const NaturalParams& params) {
    const EnlargedSpace& s = model.space;
    require_product_shape(x, s, "drift_natural_formula");
    if (static_cast<int>(model.cdf.size()) != s.horizon() + 1)
        throw EngineError("drift_natural_formula: missing M^u tables");
    ProcessTable z = s.lift(model.z);
    ProcessTable surv = s.lift(params.survival);
    ProcessTable bn = predictable_bracket(s.lift(params.n), x, s.lifted(), s.mu());
    ProcessTable by = predictable_bracket(s.lift(params.y), x, s.lifted(), s.mu());
    ProcessTable exact = drift_exact(x, s).drift;

    NaturalDrift out{ProcessTable(s.num_stages(), s.size()), {}, Rational(0)};
    const int n = s.horizon();
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec dn = bn.increment(k), dy = by.increment(k), de = exact.increment(k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            const Rational& zl = z[k - 1][a];
            const Rational& sl = surv[std::min(k - 1, n)][a];
            Rational step;
            if (before_mask(s, k, a)) {
                step = sl / zl * dn[a];
            } else {
                int t = s.tau()[a];
                const Rational& mt = model.cdf[t][k - 1][s.atoms()[a].base];
                Rational arg = mt - (1 - zl);
                Rational beta = params.f.value(arg) + mt * params.f.derivative(arg);
                step = -sl / (1 - zl) * dn[a] + beta * dy[a];
            }
            out.drift[k][a] = out.drift[k - 1][a] + step;
            if (step != de[a]) {
                out.deviations.push_back({k, static_cast<int>(a), step, de[a]});
                out.max_deviation = std::max(out.max_deviation, Rational(abs(step - de[a])));
            }
        }
    }
    return out;
}

Exponential stochastic_exponential(const ProcessTable& integrand, const ProcessTable& driver) {
    if (integrand.stages() != driver.stages() || integrand.atoms() != driver.atoms())
        throw DimensionMismatch("stochastic_exponential: shapes differ");
    Exponential e{ProcessTable(driver.stages(), driver.atoms(), Rational(1)), true};
    for (int k = 1; k < driver.stages(); ++k) {
        Vec dy = driver.increment(k);
        for (std::size_t a = 0; a < driver.atoms(); ++a) {
            e.eta[k][a] = e.eta[k - 1][a] * (1 + integrand[k][a] * dy[a]);
            if (sgn(e.eta[k][a]) <= 0) e.positive = false;
        }
    }
    return e;
}

MeasureChange::MeasureChange(Vec density, const Vec& mu) : density_(std::move(density)) {
    if (density_.size() != mu.size()) throw DimensionMismatch("MeasureChange: density on a different space");
    Rational mean = 0;
    for (std::size_t a = 0; a < mu.size(); ++a) {
        if (sgn(density_[a]) <= 0) throw EngineError("MeasureChange: density must be strictly positive");
        mean += mu[a] * density_[a];
    }
    if (mean != 1) throw EngineError("MeasureChange: density has mean " + to_string(mean));
}

Vec MeasureChange::reweight(const Vec& mu) const {
    if (mu.size() != density_.size()) throw DimensionMismatch("MeasureChange: reweighting a different space");
    Vec out(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a) out[a] = mu[a] * density_[a];
    return out;
}

ProcessTable girsanov_transform(const ProcessTable& x, const ProcessTable& eta, const Filtration& f, const Vec& mu) {
    for (int k = 0; k < eta.stages(); ++k)
        for (const auto& v : eta[k])
            if (sgn(v) <= 0) throw EngineError("girsanov_transform: density process must be positive");
    ProcessTable br = predictable_bracket(eta, x, f, mu);
    ProcessTable out = x;
    Vec shift(x.atoms());
    for (int k = 1; k < x.stages(); ++k) {
        Vec db = br.increment(k);
        for (std::size_t a = 0; a < x.atoms(); ++a) {
            shift[a] += db[a] / eta[k - 1][a];
            out[k][a] -= shift[a];
        }
    }
    return out;
}

std::vector<ProcessTable> martingale_basis(const EnlargedSpace& s) {
    const Filtration& f = s.base_filtration();
    std::vector<ProcessTable> basis;
    for (const auto& block : f.stage(f.terminal()).blocks()) {
        Vec ind(s.base().size());
        for (int w : block) ind[w] = 1;
        ProcessTable x(f.num_stages(), ind.size());
        for (int k = 0; k < f.num_stages(); ++k) x[k] = cond_exp(ind, f.stage(k), s.base().weights());
        basis.push_back(s.lift(x));
    }
    return basis;
}

bool strongly_orthogonal(const std::vector<ProcessTable>& drivers) {
    for (std::size_t i = 0; i < drivers.size(); ++i)
        for (std::size_t j = i + 1; j < drivers.size(); ++j)
            for (int k = 1; k < drivers[i].stages(); ++k) {
                Vec di = drivers[i].increment(k), dj = drivers[j].increment(k);
                for (std::size_t a = 0; a < di.size(); ++a)
                    if (sgn(di[a] * dj[a]) != 0) return false;
            }
    return true;
}

ShCheck sh_measure_check(const EnlargedSpace& s, const MeasureChange& q, const StoppingTime& start,
                         const StoppingTime& end, const std::vector<ProcessTable>& basis) {
    if (q.density().size() != s.size()) throw DimensionMismatch("sh_measure_check: density on a different space");
    Filtration fr = fragment_filtration(s, start, end);
    Vec mu = q.reweight(s.mu());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        ProcessTable piece = fragment_process(basis[i], start, end);
        try {
            if (!is_martingale(piece, fr, mu))
                return {false, static_cast<int>(i), "fragment is not a martingale under the new measure"};
        } catch (const NotAdapted&) {
            return {false, static_cast<int>(i), "fragment is not adapted to the fragment filtration"};
        }
    }
    return {};
}

bool immersion_check(const EnlargedSpace& s) {
    for (const auto& x : martingale_basis(s)) {
        const auto drift = drift_exact(x, s).drift;
        for (const auto& row : drift.rows())
            for (const auto& v : row)
                if (sgn(v) != 0) return false;
    }
    return true;
}

ShMeasure build_sh_measure_honest(const EnlargedSpace& s, int a, int n, HonestEtaForm form) {
    const int term = s.terminal();
    a = std::clamp(a, 0, term);
    const int cap = std::clamp(n, a, term);
    auto d = azema_decomposition(s);
    const ProcessTable& z = d.z;
    ProcessTable m_tilde = drift_exact(d.m, s).martingale_part;
    ProcessTable bracket = predictable_bracket(d.m, d.m, s.lifted(), s.mu());

    // P(tau >= t_k | F^_k).
    ProcessTable z_wide = z;
    for (int k = 1; k <= s.horizon(); ++k) {
        Vec da = d.optional.increment(k);
        for (std::size_t i = 0; i < s.size(); ++i) z_wide[k][i] += da[i];
    }

    std::vector<int> start(s.size()), end(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) start[i] = std::max(s.tau()[i], a);

    // T_{a,n} is read off F^-measurable quantities, so it is an F-stopping time.
    std::vector<bool> stopped(s.size(), false);
    std::vector<Rational> budget(s.size());
    std::fill(end.begin(), end.end(), cap);
    for (int k = a; k < cap; ++k) {
        const Partition& node = s.lifted().stage(k);
        std::vector<bool> blocked(node.num_blocks(), false);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (k + 1 <= s.horizon() && sgn(1 - z[k][i]) != 0 && z_wide[k + 1][i] == 1) blocked[node.block(i)] = true;
        Vec db = bracket.increment(k + 1);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (stopped[i]) continue;
            Rational gap = 1 - z[k][i];
            if (sgn(gap) != 0) budget[i] += db[i] / (gap * gap);
            if (blocked[node.block(i)] || budget[i] > n) {
                stopped[i] = true;
                end[i] = k;
            }
        }
    }

    ShMeasure out{StoppingTime(start), StoppingTime(end), ProcessTable(s.num_stages(), s.size(), Rational(1)), true, {}};
    for (int k = 1; k < s.num_stages(); ++k) {
        Vec dm = m_tilde.increment(k);
        for (std::size_t i = 0; i < s.size(); ++i) {
            Rational ratio = 1;
            if (start[i] < k && k <= end[i]) {
                Rational gap = 1 - z[k - 1][i];
                switch (form) {
                    case HonestEtaForm::exact: {
                        Rational wide_gap = 1 - (k == term ? z[k][i] : z_wide[k][i]);
                        if (sgn(wide_gap) == 0) throw EngineError("build_sh_measure_honest: degenerate step ratio");
                        ratio = gap / wide_gap;
                        break;
                    }
                    case HonestEtaForm::left_point:
                        if (sgn(gap) == 0) throw EngineError("build_sh_measure_honest: 1 - Z vanishes after default");
                        ratio = 1 + dm[i] / gap;
                        break;
                    case HonestEtaForm::no_denominator:
                        ratio = 1 + dm[i];
                        break;
                }
            }
            out.eta[k][i] = out.eta[k - 1][i] * ratio;
            if (sgn(out.eta[k][i]) <= 0) out.positive = false;
        }
    }
    out.density = out.eta[term];
    return out;
}

Covering step_covering(const EnlargedSpace& s) {
    Covering cov;
    for (int k = 1; k < s.num_stages(); ++k) {
        const Partition& child = s.lifted().stage(k);
        Vec given_f = child_probability(child, s.lifted().stage(k - 1), s.mu());
        Vec given_g = child_probability(child, s.G().stage(k - 1), s.mu());

        // Every F^-child of the node must stay visible inside each G_{k-1} block after default.
        std::map<int, Rational> visible;
        const Partition& gp = s.G().stage(k - 1);
        std::map<std::pair<int, int>, bool> counted;
        for (std::size_t a = 0; a < s.size(); ++a) {
            if (before_mask(s, k, a)) continue;
            if (counted.emplace(std::pair{gp.block(a), child.block(a)}, true).second) visible[gp.block(a)] += given_f[a];
        }
        for (const auto& [block, mass] : visible)
            if (mass != 1) {
                cov.available = false;
                cov.detail = "step " + std::to_string(k) + ": a G-block after default misses part of its F-node";
                cov.pieces.clear();
                return cov;
            }

        Vec density(s.size(), Rational(1));
        std::vector<int> start(s.size()), end(s.size(), k);
        for (std::size_t a = 0; a < s.size(); ++a) {
            start[a] = std::max(s.tau()[a], k - 1);
            if (!before_mask(s, k, a)) density[a] = given_f[a] / given_g[a];
        }
        cov.pieces.push_back({k, StoppingTime(start), StoppingTime(end), density});
    }
    return cov;
}

}  // namespace penf
