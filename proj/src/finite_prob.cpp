#include "penf/finite_prob.hpp"

#include <algorithm>
#include <utility>

namespace penf {

FiniteSpace::FiniteSpace(Vec weights, std::vector<std::string> labels)
    : weights_(std::move(weights)), labels_(std::move(labels)) {
    if (weights_.empty()) throw EngineError("finite space needs at least one atom");
    Rational total = 0;
    for (const auto& w : weights_) {
        if (sgn(w) <= 0) throw EngineError("atom weights must be strictly positive");
        total += w;
    }
    if (total != 1) throw EngineError("atom weights sum to " + to_string(total) + ", not 1");
    if (labels_.empty()) {
        labels_.reserve(weights_.size());
        for (std::size_t a = 0; a < weights_.size(); ++a) labels_.push_back("a" + std::to_string(a));
    }
    if (labels_.size() != weights_.size()) throw DimensionMismatch("label count differs from atom count");
}

Partition::Partition(const std::vector<int>& block_of) : block_of_(block_of.size()) {
    std::map<int, int> relabel;
    for (std::size_t a = 0; a < block_of.size(); ++a) {
        auto [it, inserted] = relabel.try_emplace(block_of[a], static_cast<int>(relabel.size()));
        block_of_[a] = it->second;
    }
    num_blocks_ = static_cast<int>(relabel.size());
}

Partition Partition::trivial(std::size_t atoms) { return Partition(std::vector<int>(atoms, 0)); }

Partition Partition::discrete(std::size_t atoms) {
    std::vector<int> b(atoms);
    for (std::size_t a = 0; a < atoms; ++a) b[a] = static_cast<int>(a);
    return Partition(b);
}

std::vector<std::vector<int>> Partition::blocks() const {
    std::vector<std::vector<int>> out(num_blocks_);
    for (std::size_t a = 0; a < block_of_.size(); ++a) out[block_of_[a]].push_back(static_cast<int>(a));
    return out;
}

bool refines(const Partition& fine, const Partition& coarse) {
    if (fine.size() != coarse.size()) throw DimensionMismatch("partitions on different spaces");
    std::vector<int> parent(fine.num_blocks(), -1);
    for (std::size_t a = 0; a < fine.size(); ++a) {
        int& p = parent[fine.block(a)];
        if (p < 0) p = coarse.block(a);
        else if (p != coarse.block(a)) return false;
    }
    return true;
}

std::vector<int> refinement_witness(const Partition& fine, const Partition& coarse) {
    if (fine.size() != coarse.size()) throw DimensionMismatch("partitions on different spaces");
    std::vector<int> parent(fine.num_blocks(), -1);
    for (std::size_t a = 0; a < fine.size(); ++a) {
        int& p = parent[fine.block(a)];
        if (p < 0) p = coarse.block(a);
        else if (p != coarse.block(a)) return fine.blocks()[fine.block(a)];
    }
    return {};
}

Partition join(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) throw DimensionMismatch("partitions on different spaces");
    std::vector<std::pair<int, int>> keys(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) keys[i] = {a.block(i), b.block(i)};
    return partition_from_keys(keys);
}

Partition restrict_to(const Partition& p, const Mask& d) {
    if (p.size() != d.size()) throw DimensionMismatch("mask size differs from partition size");
    std::vector<int> keys(p.size());
    for (std::size_t a = 0; a < p.size(); ++a) keys[a] = d[a] ? p.block(a) : -1;
    return partition_from_keys(keys);
}

bool is_measurable(const Vec& x, const Partition& p) {
    if (x.size() != p.size()) throw DimensionMismatch("variable size differs from partition size");
    std::vector<const Rational*> seen(p.num_blocks(), nullptr);
    for (std::size_t a = 0; a < x.size(); ++a) {
        const Rational*& s = seen[p.block(a)];
        if (!s) s = &x[a];
        else if (*s != x[a]) return false;
    }
    return true;
}

bool is_filtration(const std::vector<Partition>& stages) {
    for (std::size_t k = 1; k < stages.size(); ++k)
        if (!refines(stages[k], stages[k - 1])) return false;
    return true;
}

Filtration::Filtration(std::vector<Rational> grid, std::vector<Partition> stages)
    : grid_(std::move(grid)), stages_(std::move(stages)) {
    if (grid_.empty()) throw EngineError("time grid is empty");
    if (grid_.front() != 0) throw EngineError("time grid must start at 0");
    for (std::size_t k = 1; k < grid_.size(); ++k)
        if (grid_[k] <= grid_[k - 1]) throw EngineError("time grid must be strictly increasing");
    if (stages_.size() != grid_.size() + 1)
        throw DimensionMismatch("need one stage per grid point plus a terminal stage");
    for (const auto& s : stages_)
        if (s.size() != stages_.front().size()) throw DimensionMismatch("stages on different spaces");
    if (!is_filtration(stages_)) throw EngineError("stages do not refine monotonically");
}

Filtration Filtration::unchecked(std::vector<Rational> grid, std::vector<Partition> stages) {
    Filtration f;
    f.grid_ = std::move(grid);
    f.stages_ = std::move(stages);
    return f;
}

ProcessTable::ProcessTable(int stages, std::size_t atoms, const Rational& fill)
    : rows_(static_cast<std::size_t>(stages), Vec(atoms, fill)) {}

ProcessTable::ProcessTable(std::vector<Vec> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_)
        if (r.size() != rows_.front().size()) throw DimensionMismatch("ragged process table");
}

Vec ProcessTable::increment(int k) const {
    if (k == 0) return rows_[0];
    Vec d(rows_[k].size());
    for (std::size_t a = 0; a < d.size(); ++a) d[a] = rows_[k][a] - rows_[k - 1][a];
    return d;
}

static void check_same_shape(const ProcessTable& a, const ProcessTable& b) {
    if (a.stages() != b.stages() || a.atoms() != b.atoms()) throw DimensionMismatch("process tables differ in shape");
}

ProcessTable& ProcessTable::operator+=(const ProcessTable& o) {
    check_same_shape(*this, o);
    for (int k = 0; k < stages(); ++k)
        for (std::size_t a = 0; a < atoms(); ++a) rows_[k][a] += o.rows_[k][a];
    return *this;
}

ProcessTable& ProcessTable::operator-=(const ProcessTable& o) {
    check_same_shape(*this, o);
    for (int k = 0; k < stages(); ++k)
        for (std::size_t a = 0; a < atoms(); ++a) rows_[k][a] -= o.rows_[k][a];
    return *this;
}

ProcessTable& ProcessTable::operator*=(const Rational& c) {
    for (auto& r : rows_)
        for (auto& v : r) v *= c;
    return *this;
}

ProcessTable operator+(ProcessTable a, const ProcessTable& b) { return a += b; }
ProcessTable operator-(ProcessTable a, const ProcessTable& b) { return a -= b; }
ProcessTable operator*(const Rational& c, ProcessTable a) { return a *= c; }

StoppingTime max(const StoppingTime& s, const StoppingTime& t) {
    if (s.size() != t.size()) throw DimensionMismatch("stopping times on different spaces");
    std::vector<int> v(s.size());
    for (std::size_t a = 0; a < v.size(); ++a) v[a] = std::max(s[a], t[a]);
    return StoppingTime(v);
}

StoppingTime min(const StoppingTime& s, const StoppingTime& t) {
    if (s.size() != t.size()) throw DimensionMismatch("stopping times on different spaces");
    std::vector<int> v(s.size());
    for (std::size_t a = 0; a < v.size(); ++a) v[a] = std::min(s[a], t[a]);
    return StoppingTime(v);
}

bool is_stopping_time(const StoppingTime& t, const Filtration& f) {
    if (t.size() != f.atoms()) throw DimensionMismatch("stopping time on a different space");
    for (std::size_t a = 0; a < t.size(); ++a)
        if (t[a] < 0 || t[a] > f.terminal()) return false;
    for (int k = 0; k <= f.horizon(); ++k) {
        Vec ind(t.size());
        for (std::size_t a = 0; a < t.size(); ++a) ind[a] = t[a] <= k ? 1 : 0;
        if (!is_measurable(ind, f.stage(k))) return false;
    }
    return true;
}

Vec cond_exp(const Vec& x, const Partition& p, const Vec& mu) {
    if (x.size() != p.size() || mu.size() != p.size())
        throw DimensionMismatch("cond_exp: variable, partition and weights differ in size");
    Vec num(p.num_blocks()), den(p.num_blocks());
    for (std::size_t a = 0; a < x.size(); ++a) {
        num[p.block(a)] += mu[a] * x[a];
        den[p.block(a)] += mu[a];
    }
    for (int b = 0; b < p.num_blocks(); ++b) {
        if (sgn(den[b]) <= 0) throw EngineError("cond_exp: block with non-positive mass");
        num[b] /= den[b];
    }
    Vec out(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) out[a] = num[p.block(a)];
    return out;
}

Partition generate_partition(std::size_t atoms, const std::vector<Vec>& generators) {
    if (atoms == 0) throw EngineError("generate_partition on an empty space");
    std::vector<int> cur(atoms, 0);
    for (const auto& g : generators) {
        if (g.size() != atoms) throw DimensionMismatch("generator size differs from atom count");
        std::vector<std::pair<int, Rational>> keys(atoms);
        for (std::size_t a = 0; a < atoms; ++a) keys[a] = {cur[a], g[a]};
        cur = partition_from_keys(keys).block_of();
    }
    return Partition(cur);
}

bool is_adapted(const ProcessTable& x, const Filtration& f) {
    if (x.stages() != f.num_stages() || x.atoms() != f.atoms())
        throw DimensionMismatch("process table does not match filtration shape");
    for (int k = 0; k < x.stages(); ++k)
        if (!is_measurable(x[k], f.stage(k))) return false;
    return true;
}

bool is_predictable(const ProcessTable& x, const Filtration& f) {
    if (x.stages() != f.num_stages() || x.atoms() != f.atoms())
        throw DimensionMismatch("process table does not match filtration shape");
    for (int k = 0; k < x.stages(); ++k)
        if (!is_measurable(x[k], f.stage(k - 1))) return false;
    return true;
}

bool is_martingale(const ProcessTable& x, const Filtration& f, const Vec& mu) {
    if (!is_adapted(x, f)) throw NotAdapted("is_martingale: process is not adapted");
    for (int k = 1; k < x.stages(); ++k) {
        Vec e = cond_exp(x.increment(k), f.stage(k - 1), mu);
        for (const auto& v : e)
            if (sgn(v) != 0) return false;
    }
    return true;
}

DoobDecomposition doob_decomposition(const ProcessTable& x, const Filtration& f, const Vec& mu) {
    if (!is_adapted(x, f)) throw NotAdapted("doob_decomposition: process is not adapted");
    ProcessTable a(x.stages(), x.atoms());
    for (int k = 1; k < x.stages(); ++k) {
        Vec e = cond_exp(x.increment(k), f.stage(k - 1), mu);
        for (std::size_t i = 0; i < x.atoms(); ++i) a[k][i] = a[k - 1][i] - e[i];
    }
    return {x + a, a};
}

ProcessTable predictable_bracket(const ProcessTable& u, const ProcessTable& v, const Filtration& f, const Vec& mu) {
    if (!is_adapted(u, f) || !is_adapted(v, f)) throw NotAdapted("predictable_bracket: inputs must be adapted");
    ProcessTable out(u.stages(), u.atoms());
    for (int k = 1; k < u.stages(); ++k) {
        Vec du = u.increment(k), dv = v.increment(k);
        for (std::size_t i = 0; i < du.size(); ++i) du[i] *= dv[i];
        Vec e = cond_exp(du, f.stage(k - 1), mu);
        for (std::size_t i = 0; i < e.size(); ++i) out[k][i] = out[k - 1][i] + e[i];
    }
    return out;
}

ProcessTable integrate(const ProcessTable& k, const ProcessTable& x) {
    if (k.stages() != x.stages() || k.atoms() != x.atoms()) throw DimensionMismatch("integrate: shape mismatch");
    ProcessTable out(x.stages(), x.atoms());
    for (int j = 1; j < x.stages(); ++j) {
        Vec dx = x.increment(j);
        for (std::size_t a = 0; a < dx.size(); ++a) out[j][a] = out[j - 1][a] + k[j][a] * dx[a];
    }
    return out;
}

DualProjections dual_projections(const StoppingTime& tau, const Filtration& f, const Vec& mu) {
    if (tau.size() != f.atoms()) throw DimensionMismatch("dual_projections: tau on a different space");
    for (std::size_t a = 0; a < tau.size(); ++a)
        if (tau[a] < 0 || tau[a] > f.terminal()) throw EngineError("dual_projections: tau outside the grid");
    ProcessTable pa(f.num_stages(), f.atoms()), oa(f.num_stages(), f.atoms());
    for (int k = 1; k <= f.horizon(); ++k) {
        Vec jump(tau.size());
        for (std::size_t a = 0; a < tau.size(); ++a) jump[a] = tau[a] == k ? 1 : 0;
        Vec p = cond_exp(jump, f.stage(k - 1), mu);
        Vec o = cond_exp(jump, f.stage(k), mu);
        for (std::size_t a = 0; a < tau.size(); ++a) {
            pa[k][a] = pa[k - 1][a] + p[a];
            oa[k][a] = oa[k - 1][a] + o[a];
        }
    }
    pa[f.terminal()] = pa[f.horizon()];
    oa[f.terminal()] = oa[f.horizon()];
    return {pa, oa};
}

Partition sigma_at_random_time(const StoppingTime& t, const Filtration& f, SigmaKind kind) {
    if (t.size() != f.atoms()) throw DimensionMismatch("sigma_at: random time on a different space");
    std::vector<std::pair<int, int>> keys(t.size());
    for (std::size_t a = 0; a < t.size(); ++a) {
        int k = t[a];
        if (k < 0 || k > f.terminal()) throw EngineError("sigma_at: time outside the grid");
        int s = k;
        if (kind == SigmaKind::before && k != f.terminal()) s = k - 1;
        keys[a] = {k, f.stage(s).block(a)};
    }
    return partition_from_keys(keys);
}

Partition sigma_at(const StoppingTime& t, const Filtration& f, SigmaKind kind) {
    if (!is_stopping_time(t, f)) throw NotStoppingTime("sigma_at: not a stopping time");
    return sigma_at_random_time(t, f, kind);
}

}  // namespace penf
