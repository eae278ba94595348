#include "penf/models.hpp"

#include <algorithm>

namespace penf {

namespace {

void check_shape(const ProcessTable& x, const Filtration& f, const char* what) {
    if (x.stages() != f.num_stages() || x.atoms() != f.atoms())
        throw DimensionMismatch(std::string(what) + ": table shape does not match the filtration");
}

std::vector<Rational> unit_grid(int steps) {
    std::vector<Rational> grid;
    for (int k = 0; k <= steps; ++k) grid.emplace_back(k);
    return grid;
}

// Survival tables: adapted, start at one, non-increasing, inside [0,1].
void check_survival(const ProcessTable& survival, const Filtration& f, const char* what) {
    check_shape(survival, f, what);
    if (!is_adapted(survival, f)) throw InvalidParameters(std::string(what) + ": survival table is not adapted");
    for (std::size_t w = 0; w < f.atoms(); ++w) {
        if (survival[0][w] != 1) throw InvalidParameters(std::string(what) + ": survival must start at 1");
        for (int k = 0; k <= f.horizon(); ++k) {
            const Rational& v = survival[k][w];
            if (sgn(v) < 0 || v > 1) throw InvalidParameters(std::string(what) + ": survival outside [0,1]");
            if (k > 0 && v > survival[k - 1][w])
                throw InvalidParameters(std::string(what) + ": intensity must be non-decreasing");
        }
    }
}

}  // namespace

BaseModel build_tree(int steps, const BranchRule& rule) {
    if (steps < 0) throw InvalidParameters("build_tree: negative horizon");
    struct Node {
        std::vector<int> path;
        Rational prob;
        Vec walk;
    };
    std::vector<Node> level{{{}, Rational(1), Vec{Rational(0)}}};
    for (int step = 1; step <= steps; ++step) {
        std::vector<Node> next;
        for (const auto& node : level) {
            auto branches = rule(step, node.path);
            if (branches.empty()) throw InvalidParameters("build_tree: node without branches");
            Rational total = 0;
            for (std::size_t b = 0; b < branches.size(); ++b) {
                if (sgn(branches[b].prob) <= 0) throw InvalidParameters("build_tree: branch probability must be positive");
                total += branches[b].prob;
                Node child = node;
                child.path.push_back(static_cast<int>(b));
                child.prob *= branches[b].prob;
                child.walk.push_back(node.walk.back() + branches[b].increment);
                next.push_back(std::move(child));
            }
            if (total != 1) throw InvalidParameters("build_tree: branch probabilities do not sum to 1");
        }
        level = std::move(next);
    }

    Vec weights;
    std::vector<std::string> labels;
    std::vector<std::vector<int>> paths;
    for (const auto& node : level) {
        weights.push_back(node.prob);
        std::string label;
        for (int b : node.path) label += std::to_string(b);
        labels.push_back(label.empty() ? "root" : label);
        paths.push_back(node.path);
    }
    std::vector<Partition> stages;
    for (int k = 0; k <= steps; ++k) {
        std::vector<std::vector<int>> prefix;
        for (const auto& p : paths) prefix.emplace_back(p.begin(), p.begin() + k);
        stages.push_back(partition_from_keys(prefix));
    }
    stages.push_back(stages.back());

    ProcessTable walk(steps + 2, level.size());
    for (std::size_t a = 0; a < level.size(); ++a) {
        for (int k = 0; k <= steps; ++k) walk[k][a] = level[a].walk[k];
        walk[steps + 1][a] = level[a].walk[steps];
    }
    return {FiniteSpace(weights, labels), Filtration(unit_grid(steps), stages), walk, paths};
}

BaseModel build_tree(const std::vector<std::vector<Branch>>& per_step) {
    return build_tree(static_cast<int>(per_step.size()),
                      [&](int step, const std::vector<int>&) { return per_step[step - 1]; });
}

std::vector<Branch> fair_coin() { return {{Rational(1, 2), Rational(1)}, {Rational(1, 2), Rational(-1)}}; }

EnlargedSpace cox_model(const FiniteSpace& base, const Filtration& f, const CoxParams& params) {
    check_survival(params.survival, f, "cox_model");
    const int n = f.horizon();
    DefaultKernel kernel;
    for (std::size_t w = 0; w < base.size(); ++w) {
        Vec row(n + 2, Rational(0));
        for (int k = 1; k <= n; ++k) row[k] = params.survival[k - 1][w] - params.survival[k][w];
        row[n + 1] = params.survival[n][w];
        kernel.rows.push_back(std::move(row));
    }
    return EnlargedSpace(base, f, kernel);
}

namespace {

void check_density(const FiniteSpace& base, const Filtration& f, const DensityParams& params) {
    const int points = f.terminal() + 1;
    if (static_cast<int>(params.alpha.size()) != points || static_cast<int>(params.mu.size()) != points)
        throw DimensionMismatch("density_model: need one alpha table and one weight per grid point plus infinity");
    Rational mass = 0;
    for (const auto& m : params.mu) {
        if (sgn(m) < 0) throw InvalidParameters("density_model: negative reference weight");
        mass += m;
    }
    if (mass != 1) throw InvalidParameters("density_model: reference weights must sum to 1");
    for (int theta = 0; theta < points; ++theta) {
        const auto& a = params.alpha[theta];
        check_shape(a, f, "density_model");
        for (int k = 0; k < a.stages(); ++k)
            for (const auto& v : a[k])
                if (sgn(v) <= 0) throw InvalidParameters("density_model: alpha must be strictly positive");
        if (!is_adapted(a, f)) throw InvalidParameters("density_model: alpha is not adapted");
        if (!is_martingale(a, f, base.weights()))
            throw InvalidParameters("density_model: alpha(" + std::to_string(theta) + ") is not a martingale in k");
    }
    for (int k = 0; k < f.num_stages(); ++k)
        for (std::size_t w = 0; w < base.size(); ++w) {
            Rational total = 0;
            for (int theta = 0; theta < points; ++theta) total += params.alpha[theta][k][w] * params.mu[theta];
            if (total != 1) throw InvalidParameters("density_model: conditional law does not integrate to 1");
        }
}

}  // namespace

EnlargedSpace density_model(const FiniteSpace& base, const Filtration& f, const DensityParams& params) {
    check_density(base, f, params);
    DefaultKernel kernel;
    for (std::size_t w = 0; w < base.size(); ++w) {
        Vec row;
        for (std::size_t theta = 0; theta < params.mu.size(); ++theta)
            row.push_back(params.alpha[theta][f.horizon()][w] * params.mu[theta]);
        kernel.rows.push_back(std::move(row));
    }
    return EnlargedSpace(base, f, kernel);
}

Vec density_decoupling_density(const EnlargedSpace& s, const DensityParams& params, int k) {
    if (k < 0 || k >= s.num_stages()) throw EngineError("density_decoupling_density: stage out of range");
    Vec d(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) {
        const auto& atom = s.atoms()[a];
        d[a] = 1 / params.alpha[atom.time][k][atom.base];
    }
    return d;
}

bool is_honest(const Filtration& f, const std::vector<int>& tau) {
    if (tau.size() != f.atoms()) throw DimensionMismatch("is_honest: tau on a different space");
    Vec as_var(tau.begin(), tau.end());
    if (!is_measurable(as_var, f.stage(f.terminal()))) return false;
    for (int k = 0; k <= f.horizon(); ++k) {
        const Partition& p = f.stage(k);
        std::vector<int> seen(p.num_blocks(), -1);
        for (std::size_t w = 0; w < tau.size(); ++w) {
            if (tau[w] > k) continue;
            int& v = seen[p.block(w)];
            if (v >= 0 && v != tau[w]) return false;
            v = tau[w];
        }
    }
    return true;
}

EnlargedSpace honest_time_model(const FiniteSpace& base, const Filtration& f, const std::vector<int>& tau) {
    if (tau.size() != base.size()) throw DimensionMismatch("honest_time_model: one time per base atom");
    for (int t : tau)
        if (t < 0 || t > f.terminal()) throw InvalidParameters("honest_time_model: time outside the grid");
    if (!is_honest(f, tau)) throw InvalidParameters("honest_time_model: rule is not an honest time");
    DefaultKernel kernel;
    for (int t : tau) {
        Vec row(f.terminal() + 1, Rational(0));
        row[t] = 1;
        kernel.rows.push_back(std::move(row));
    }
    return EnlargedSpace(base, f, kernel);
}

std::vector<int> last_max_rule(const ProcessTable& walk, int horizon) {
    std::vector<int> tau(walk.atoms());
    for (std::size_t w = 0; w < walk.atoms(); ++w) {
        Rational best = walk[0][w];
        for (int k = 0; k <= horizon; ++k)
            if (walk[k][w] >= best) {
                best = walk[k][w];
                tau[w] = k;
            }
    }
    return tau;
}

std::vector<int> last_zero_rule(const ProcessTable& walk, int horizon) {
    std::vector<int> tau(walk.atoms(), horizon + 1);
    for (std::size_t w = 0; w < walk.atoms(); ++w)
        for (int k = 0; k <= horizon; ++k)
            if (sgn(walk[k][w]) == 0) tau[w] = k;
    return tau;
}

ScalarFunction zero_function() {
    auto zero = [](const Rational&) { return Rational(0); };
    return {"zero", zero, zero, Rational(0), Rational(0)};
}

ScalarFunction scaled_identity(const Rational& c, const Rational& bound) {
    return {"linear(" + to_string(c) + ")", [c](const Rational& x) { return Rational(c * x); },
            [c](const Rational&) { return c; }, bound, abs(c)};
}

NaturalModel natural_model_discrete(const FiniteSpace& base, const Filtration& f, const NaturalParams& params) {
    const Vec& p = base.weights();
    check_survival(params.survival, f, "natural_model");
    check_shape(params.n, f, "natural_model");
    check_shape(params.y, f, "natural_model");
    if (!params.f.value || !params.f.derivative) throw InvalidParameters("natural_model: f is missing");
    if (params.f.value(Rational(0)) != 0) throw InvalidParameters("natural_model: f(0) must be 0");
    if (!is_martingale(params.n, f, p)) throw InvalidParameters("natural_model: N is not a martingale");
    if (!is_martingale(params.y, f, p)) throw InvalidParameters("natural_model: Y is not a martingale");

    const int n = f.horizon();
    const std::size_t atoms = base.size();
    ProcessTable z(f.num_stages(), atoms);
    for (int k = 0; k < f.num_stages(); ++k)
        for (std::size_t w = 0; w < atoms; ++w) {
            if (sgn(params.n[k][w]) <= 0) throw InvalidParameters("natural_model: N must be positive");
            z[k][w] = params.n[k][w] * params.survival[std::min(k, n)][w];
        }
    for (std::size_t w = 0; w < atoms; ++w) {
        if (params.n[0][w] != 1) throw InvalidParameters("natural_model: N must start at 1");
        for (int k = 1; k <= n; ++k)
            if (sgn(z[k][w]) <= 0 || z[k][w] >= 1)
                throw InvalidParameters("natural_model: need 0 < Z < 1 at stage " + std::to_string(k));
    }

    std::vector<ProcessTable> cdf;
    for (int u = 0; u <= n; ++u) {
        ProcessTable m(f.num_stages(), atoms);
        for (std::size_t w = 0; w < atoms; ++w) m[u][w] = 1 - z[u][w];
        for (int k = u; k < f.terminal(); ++k) {
            Vec dn = params.n.increment(k + 1), dy = params.y.increment(k + 1);
            for (std::size_t w = 0; w < atoms; ++w) {
                const Rational& cur = m[k][w];
                if (sgn(cur) == 0) {
                    m[k + 1][w] = 0;
                    continue;
                }
                Rational gap = 1 - z[k][w];
                Rational arg = cur - gap;
                Rational fv = params.f.value(arg);
                if (abs(fv) > params.f.bound)
                    throw InvalidParameters("natural_model: f exceeds its declared bound at " + to_string(arg));
                Rational ratio = params.survival[std::min(k, n)][w] / gap;
                m[k + 1][w] = cur * (1 - ratio * dn[w] + fv * dy[w]);
            }
        }
        for (int k = u - 1; k >= 0; --k) m[k] = cond_exp(m[k + 1], f.stage(k), p);
        for (int k = 0; k < f.num_stages(); ++k)
            for (std::size_t w = 0; w < atoms; ++w)
                if (sgn(m[k][w]) < 0 || m[k][w] > 1)
                    throw InvalidParameters("natural_model: M^" + std::to_string(u) + " leaves [0,1] at stage " +
                                            std::to_string(k));
        cdf.push_back(std::move(m));
    }
    for (int u = 1; u <= n; ++u)
        for (int k = 0; k < f.num_stages(); ++k)
            for (std::size_t w = 0; w < atoms; ++w)
                if (cdf[u][k][w] < cdf[u - 1][k][w])
                    throw InvalidParameters("natural_model: M^u is not monotone in u at u=" + std::to_string(u));

    DefaultKernel kernel;
    const int term = f.terminal();
    for (std::size_t w = 0; w < atoms; ++w) {
        Vec row(n + 2, Rational(0));
        row[0] = cdf[0][term][w];
        for (int u = 1; u <= n; ++u) row[u] = cdf[u][term][w] - cdf[u - 1][term][w];
        row[n + 1] = 1 - cdf[n][term][w];
        kernel.rows.push_back(std::move(row));
    }
    return {EnlargedSpace(base, f, kernel), std::move(cdf), std::move(z)};
}

}  // namespace penf
