#include "random_models.hpp"

#include <algorithm>
#include <numeric>

namespace penf::testing {

BaseModel random_tree(Rng& rng, int max_steps, std::size_t max_atoms) {
    for (;;) {
        const int steps = 1 + static_cast<int>(rng() % max_steps);
        // Rules must be deterministic per node, so draw them lazily and memoise.
        std::map<std::vector<int>, std::vector<Branch>> memo;
        auto rule = [&](int, const std::vector<int>& path) {
            auto it = memo.find(path);
            if (it != memo.end()) return it->second;
            const int kids = 1 + static_cast<int>(rng() % 3);
            std::vector<int> weights(kids), steps_up;
            for (auto& w : weights) w = 1 + static_cast<int>(rng() % 4);
            while (static_cast<int>(steps_up.size()) < kids) {
                int v = static_cast<int>(rng() % 7) - 3;
                if (std::find(steps_up.begin(), steps_up.end(), v) == steps_up.end()) steps_up.push_back(v);
            }
            const int total = std::accumulate(weights.begin(), weights.end(), 0);
            Rational mean = 0;
            for (int i = 0; i < kids; ++i) mean += frac(weights[i] * steps_up[i], total);
            std::vector<Branch> out;
            for (int i = 0; i < kids; ++i) out.push_back({frac(weights[i], total), steps_up[i] - mean});
            if (kids == 1) out[0].increment = 0;
            memo.emplace(path, out);
            return out;
        };
        // Count atoms first so oversize trees are rejected cheaply.
        std::vector<std::vector<int>> frontier{{}};
        for (int k = 1; k <= steps && frontier.size() <= max_atoms; ++k) {
            std::vector<std::vector<int>> next;
            for (const auto& p : frontier) {
                const auto kids = rule(k, p).size();
                for (std::size_t b = 0; b < kids; ++b) {
                    auto q = p;
                    q.push_back(static_cast<int>(b));
                    next.push_back(std::move(q));
                }
            }
            frontier = std::move(next);
        }
        if (frontier.size() > max_atoms) continue;
        return build_tree(steps, rule);
    }
}

DefaultKernel random_kernel(Rng& rng, const BaseModel& base) {
    const int n = base.filtration.horizon();
    DefaultKernel k;
    for (std::size_t w = 0; w < base.space.size(); ++w) {
        std::vector<int> weights(n + 2, 0);
        int total = 0;
        while (total == 0) {
            for (int t = 1; t <= n + 1; ++t) weights[t] = static_cast<int>(rng() % 4);
            total = std::accumulate(weights.begin(), weights.end(), 0);
        }
        Vec row(n + 2);
        for (int t = 0; t <= n + 1; ++t) row[t] = frac(weights[t], total);
        k.rows.push_back(std::move(row));
    }
    return k;
}

std::vector<int> random_honest_times(Rng& rng, const BaseModel& base) {
    const Filtration& f = base.filtration;
    const int n = f.horizon();
    std::vector<int> tau(base.space.size(), n + 1);
    for (int k = 1; k <= n; ++k) {
        std::vector<int> in(f.stage(k).num_blocks());
        for (auto& b : in) b = rng() % 2;
        for (std::size_t w = 0; w < tau.size(); ++w)
            if (in[f.stage(k).block(w)]) tau[w] = k;
    }
    return tau;
}

std::vector<ProcessTable> spanning_drivers(const BaseModel& base) {
    ProcessTable sq = base.walk;
    for (int k = 0; k < sq.stages(); ++k)
        for (auto& v : sq[k]) v *= v;
    return {base.walk, doob_decomposition(sq, base.filtration, base.space.weights()).martingale};
}

RandomModel random_model(Rng& rng) {
    auto base = random_tree(rng);
    auto kernel = random_kernel(rng, base);
    auto space = build_product_space(base.space, base.filtration, kernel);
    return {std::move(base), std::move(space)};
}

RandomModel random_honest_model(Rng& rng) {
    auto base = random_tree(rng);
    auto tau = random_honest_times(rng, base);
    auto space = honest_time_model(base.space, base.filtration, tau);
    return {std::move(base), std::move(space)};
}

Scenario curated_scenario(const std::string& name) {
    return parse_scenario(std::string(PENF_SOURCE_DIR) + "/tests/scenarios/" + name + ".scn");
}

ExactModel curated_model(const std::string& name) { return build_exact_model(curated_scenario(name)); }

Partition generated_by(std::size_t atoms, const std::vector<Mask>& sets) {
    std::vector<std::vector<bool>> keys(atoms);
    for (const auto& s : sets)
        for (std::size_t a = 0; a < atoms; ++a) keys[a].push_back(s[a]);
    return partition_from_keys(keys);
}

}  // namespace penf::testing
