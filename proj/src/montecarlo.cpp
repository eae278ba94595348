#include "penf/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

namespace penf::mc {

namespace {

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Static contiguous chunks; each path writes only its own slots.
template <class Fn>
void for_each_path(std::size_t paths, unsigned threads, Fn fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(paths, 1))));
    if (threads == 1) {
        for (std::size_t p = 0; p < paths; ++p) fn(p);
        return;
    }
    std::vector<std::jthread> pool;
    std::size_t chunk = (paths + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        std::size_t lo = t * chunk, hi = std::min(paths, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t p = lo; p < hi; ++p) fn(p);
        });
    }
}

int steps_for(double t, double dt) {
    double q = t / dt;
    long r = std::lround(q);
    if (std::abs(q - static_cast<double>(r)) > 1e-9 * std::max(1.0, q))
        throw McError("time " + std::to_string(t) + " is not a multiple of dt");
    return static_cast<int>(r);
}

struct Increments {
    std::vector<double> dw, dy, n, z;
};

// Rebuilds one path at full resolution from its counters.
void regenerate(const PathBundle& b, std::size_t path, Increments& out) {
    const McConfig& c = b.cfg;
    const int steps = b.steps;
    const double sq = std::sqrt(c.dt);
    const double side = std::sqrt(std::max(0.0, 1 - c.y_rho * c.y_rho));
    out.dw.resize(steps);
    out.dy.resize(steps);
    out.n.resize(steps + 1);
    out.z.resize(steps + 1);
    out.n[0] = 1;
    out.z[0] = 1;
    for (int i = 0; i < steps; ++i) {
        double dw = sq * counter_normal(c.seed, path, kDriverStream + static_cast<std::uint64_t>(i));
        double db = side == 0 ? 0.0 : sq * counter_normal(c.seed, path, kSecondDriverStream + static_cast<std::uint64_t>(i));
        out.dw[i] = dw;
        out.dy[i] = c.y_vol * (c.y_rho * dw + side * db);
        out.n[i + 1] = c.n_vol == 0 ? 1.0 : out.n[i] * std::exp(c.n_vol * dw - 0.5 * c.n_vol * c.n_vol * c.dt);
        out.z[i + 1] = out.n[i + 1] * std::exp(-cumulative_intensity(c, (i + 1) * c.dt));
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t counter) {
    return mix(mix(mix(seed) ^ path) ^ counter);
}

double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t counter) {
    return (static_cast<double>(counter_draw(seed, path, counter) >> 11) + 0.5) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t counter) {
    double u1 = counter_uniform(seed, path, 2 * counter);
    double u2 = counter_uniform(seed, path, 2 * counter + 1);
    return std::sqrt(-2 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
}

void validate(const McConfig& cfg) {
    if (!(cfg.dt > 0)) throw McError("dt must be positive");
    if (!(cfg.horizon > 0)) throw McError("horizon must be positive");
    if (cfg.paths < 1) throw McError("need at least one path");
    if (cfg.lambda < 0 || cfg.lambda + cfg.lambda_slope * cfg.horizon < 0) throw McError("intensity must stay nonnegative");
    if (cfg.y_rho < -1 || cfg.y_rho > 1) throw McError("y_rho must lie in [-1, 1]");
    if (!(cfg.floor > 0)) throw McError("floor must be positive");
    if (cfg.f.kind == FKind::linear && std::abs(cfg.f.scale) > cfg.f.bound)
        throw McError("f exceeds its declared bound on [-1, 1]");
    if (cfg.f.kind == FKind::linear && std::abs(cfg.f.scale) > cfg.f.derivative_bound)
        throw McError("f' exceeds its declared bound");
    steps_for(cfg.horizon, cfg.dt);
    for (double u : cfg.u_grid) {
        if (u < 0 || u > cfg.horizon) throw McError("u-grid point outside [0, horizon]");
        steps_for(u, cfg.dt);
    }
}

double cumulative_intensity(const McConfig& cfg, double t) { return cfg.lambda * t + 0.5 * cfg.lambda_slope * t * t; }

PathBundle simulate_base_paths(const McConfig& cfg) {
    validate(cfg);
    PathBundle b;
    b.cfg = cfg;
    b.steps = steps_for(cfg.horizon, cfg.dt);
    std::vector<int> rec;
    for (double u : cfg.u_grid) rec.push_back(steps_for(u, cfg.dt));
    rec.push_back(b.steps);
    std::sort(rec.begin(), rec.end());
    rec.erase(std::unique(rec.begin(), rec.end()), rec.end());
    b.record_step = rec;
    for (int s : rec) {
        b.record_time.push_back(s * cfg.dt);
        b.cumulative_intensity.push_back(cumulative_intensity(cfg, s * cfg.dt));
    }
    const std::size_t r = rec.size();
    b.w.assign(cfg.paths * r, 0);
    b.n.assign(cfg.paths * r, 0);
    b.y.assign(cfg.paths * r, 0);
    b.z.assign(cfg.paths * r, 0);
    b.flags.assign(cfg.paths, 0);
    b.uniform.assign(cfg.paths, 0);

    for_each_path(cfg.paths, cfg.threads, [&](std::size_t p) {
        Increments inc;
        regenerate(b, p, inc);
        double w = 0, y = 0;
        std::size_t next = 0;
        std::uint8_t flag = 0;
        for (int i = 0; i <= b.steps; ++i) {
            if (i > 0) {
                w += inc.dw[i - 1];
                y += inc.dy[i - 1];
                if (inc.z[i] > 1 || inc.z[i] < 0) flag |= kZOutOfRange;
            }
            if (next < r && rec[next] == i) {
                b.w[p * r + next] = w;
                b.y[p * r + next] = y;
                b.n[p * r + next] = inc.n[i];
                b.z[p * r + next] = inc.z[i];
                ++next;
            }
        }
        b.flags[p] = flag;
        b.uniform[p] = counter_uniform(cfg.seed, p, kUniformStream);
    });
    return b;
}

std::size_t MTrajectory::flagged() const {
    return static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(), [](std::uint8_t f) { return f != 0; }));
}

MTrajectory solve_natural_sde(const PathBundle& b, std::size_t u_index, const FSpec& f) {
    if (u_index >= b.records()) throw McError("u index outside the record grid");
    const McConfig& c = b.cfg;
    const std::size_t r = b.records();
    MTrajectory out;
    out.u_index = u_index;
    out.values.assign(c.paths * r, std::numeric_limits<double>::quiet_NaN());
    out.flags.assign(c.paths, 0);
    const int start = b.record_step[u_index];

    for_each_path(c.paths, c.threads, [&](std::size_t p) {
        Increments inc;
        regenerate(b, p, inc);
        double m = 1 - inc.z[start];
        std::uint8_t flag = 0;
        std::size_t next = u_index;
        for (int i = start; i <= b.steps; ++i) {
            if (next < r && b.record_step[next] == i) out.values[p * r + next++] = m;
            if (i == b.steps) break;
            if (m == 0) continue;
            double gap = 1 - inc.z[i];
            if (gap < c.floor) {
                flag |= kNearSingular;
                break;
            }
            double survival = std::exp(-cumulative_intensity(c, i * c.dt));
            double dn = inc.n[i + 1] - inc.n[i];
            m *= 1 - survival / gap * dn + f.value(m - gap) * inc.dy[i];
            if (m < 0 || m > 1) flag |= kMOutOfRange;
        }
        out.flags[p] = flag;
    });
    return out;
}

void flag_non_monotone(std::vector<MTrajectory>& family, const PathBundle& b) {
    const std::size_t r = b.records();
    for (std::size_t p = 0; p < b.cfg.paths; ++p) {
        bool bad = false;
        for (std::size_t j = 1; j < family.size() && !bad; ++j)
            for (std::size_t k = family[j].u_index; k < r; ++k) {
                double hi = family[j].values[p * r + k], lo = family[j - 1].values[p * r + k];
                if (hi < lo) {
                    bad = true;
                    break;
                }
            }
        if (bad)
            for (auto& t : family) t.flags[p] |= kNonMonotone;
    }
}

std::size_t DefaultSample::excluded_count() const {
    return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), true));
}

DefaultSample sample_default_cox(const PathBundle& b, double hazard_scale) {
    const McConfig& c = b.cfg;
    DefaultSample s{std::vector<double>(c.paths, kNever), std::vector<bool>(c.paths, false)};
    for (std::size_t p = 0; p < c.paths; ++p) {
        s.excluded[p] = b.flags[p] != 0;
        double e = -std::log(b.uniform[p]) / hazard_scale;
        double a = 0.5 * c.lambda_slope, l = c.lambda;
        if (a == 0) {
            if (l > 0) s.tau[p] = e / l;
        } else {
            double disc = l * l + 4 * a * e;
            if (disc >= 0) {
                double t = (-l + std::sqrt(disc)) / (2 * a);
                if (t >= 0) s.tau[p] = t;
            }
        }
    }
    return s;
}

DefaultSample sample_default_natural(const PathBundle& b, const std::vector<MTrajectory>& family) {
    const std::size_t r = b.records();
    if (family.size() != r) throw McError("need one M^u trajectory per record time");
    DefaultSample s{std::vector<double>(b.cfg.paths, kNever), std::vector<bool>(b.cfg.paths, false)};
    for (std::size_t p = 0; p < b.cfg.paths; ++p) {
        bool flagged = b.flags[p] != 0;
        for (const auto& t : family) flagged = flagged || t.flags[p] != 0;
        s.excluded[p] = flagged;
        if (flagged) continue;
        for (std::size_t j = 0; j < r; ++j)
            if (b.uniform[p] <= family[j].values[p * r + (r - 1)]) {
                s.tau[p] = b.record_time[j];
                break;
            }
    }
    return s;
}

ProjectionReport projection_condition_test(const PathBundle& b, const DefaultSample& sample, std::size_t min_paths) {
    ProjectionReport rep;
    const std::size_t r = b.records();
    std::vector<std::size_t> used;
    for (std::size_t p = 0; p < b.cfg.paths; ++p)
        if (!sample.excluded[p]) used.push_back(p);
    rep.used_paths = used.size();
    if (used.size() < min_paths) throw McError("too few usable paths for the projection test");
    const double n = static_cast<double>(used.size());
    for (std::size_t k = 0; k < r; ++k) {
        double t = b.record_time[k];
        double s1 = 0, s2 = 0, alive = 0, proj = 0;
        for (std::size_t p : used) {
            double ind = sample.tau[p] > t ? 1.0 : 0.0;
            double z = b.z[p * r + k];
            double d = ind - z;
            alive += ind;
            proj += z;
            s1 += d;
            s2 += d * d;
        }
        double mean = s1 / n;
        double var = used.size() > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
        double se = std::sqrt(var / n);
        bool pass = se == 0 ? std::abs(mean) < 1e-12 : std::abs(mean) <= 3 * se;
        rep.rows.push_back({t, alive / n, proj / n, se, pass});
        rep.pass = rep.pass && pass;
    }
    return rep;
}

std::string to_string(Claim c) {
    switch (c) {
        case Claim::constant: return "constant";
        case Claim::defaultable_bond: return "defaultable-bond";
        case Claim::stopped_walk: return "stopped-walk";
    }
    return "?";
}

ReplicationReport replication_backtest(const PathBundle& b, const DefaultSample& sample, Claim claim,
                                       const std::vector<int>& coarsening, double threshold) {
    const McConfig& c = b.cfg;
    if (c.n_vol != 0) throw McError("closed-form integrands need N = 1");
    std::vector<int> levels = coarsening;
    std::sort(levels.rbegin(), levels.rend());
    for (int lv : levels)
        if (lv < 0 || b.steps % (1 << lv) != 0) throw McError("coarsening does not divide the horizon");
    const double horizon = c.horizon;
    const double lambda_total = cumulative_intensity(c, horizon);

    std::vector<double> err(c.paths * levels.size(), 0);
    for_each_path(c.paths, c.threads, [&](std::size_t p) {
        if (sample.excluded[p]) return;
        const double tau = sample.tau[p];
        Increments inc;
        if (claim == Claim::stopped_walk) regenerate(b, p, inc);
        std::vector<double> w(b.steps + 1, 0);
        for (int i = 0; i < static_cast<int>(inc.dw.size()); ++i) w[i + 1] = w[i] + inc.dw[i];

        double payoff = 0;
        if (claim == Claim::defaultable_bond) {
            payoff = tau > horizon ? 1.0 : 0.0;
        } else if (claim == Claim::stopped_walk) {
            if (tau >= horizon) {
                payoff = w[b.steps];
            } else {
                int i = std::min(b.steps - 1, static_cast<int>(std::floor(tau / c.dt)));
                double lo = i * c.dt, hi = lo + c.dt;
                double z = counter_normal(c.seed, p, kBridgeStream);
                payoff = w[i] + (tau - lo) / c.dt * inc.dw[i] + std::sqrt(std::max(0.0, (tau - lo) * (hi - tau) / c.dt)) * z;
            }
        } else {
            payoff = 1;
        }

        for (std::size_t j = 0; j < levels.size(); ++j) {
            const int stride = 1 << levels[j];
            double v = 0;
            if (claim == Claim::constant) {
                v = 1;
            } else if (claim == Claim::defaultable_bond) {
                v = std::exp(-lambda_total);
                for (int i = 0; i < b.steps; i += stride) {
                    double t0 = i * c.dt, t1 = (i + stride) * c.dt;
                    if (!(tau > t0)) break;
                    double k = -std::exp(-(lambda_total - cumulative_intensity(c, t0)));
                    double jump = tau <= t1 ? 1.0 : 0.0;
                    double comp = cumulative_intensity(c, std::min(tau, t1)) - cumulative_intensity(c, t0);
                    v += k * (jump - comp);
                }
            } else {
                for (int i = 0; i < b.steps; i += stride) {
                    double t0 = i * c.dt;
                    if (!(tau > t0)) break;
                    v += w[i + stride] - w[i];
                }
            }
            err[p * levels.size() + j] = v - payoff;
        }
    });

    ReplicationReport rep;
    std::size_t used = c.paths - sample.excluded_count();
    for (std::size_t j = 0; j < levels.size(); ++j) {
        double s2 = 0;
        for (std::size_t p = 0; p < c.paths; ++p) {
            double e = err[p * levels.size() + j];
            s2 += e * e;
        }
        double rms = used ? std::sqrt(s2 / static_cast<double>(used)) : 0.0;
        double ratio = std::numeric_limits<double>::quiet_NaN();
        if (j > 0) {
            double prev = rep.rows.back().rms;
            ratio = prev == 0 ? (rms == 0 ? 0.0 : std::numeric_limits<double>::infinity()) : rms / prev;
            if (!(ratio <= threshold) && !(prev == 0 && rms == 0)) rep.pass = false;
        }
        rep.rows.push_back({c.dt * (1 << levels[j]), rms, ratio});
    }
    return rep;
}

DriftReport martingale_drift_test(const std::vector<std::vector<double>>& samples, double alpha) {
    DriftReport rep{{}, alpha, true};
    if (samples.size() < 2) throw McError("drift test needs at least two paths");
    const std::size_t times = samples.front().size();
    if (times < 2) return rep;
    const double n = static_cast<double>(samples.size());
    const double cutoff = alpha / static_cast<double>(times - 1);
    for (std::size_t k = 0; k + 1 < times; ++k) {
        std::vector<double> d;
        d.reserve(samples.size());
        for (const auto& path : samples) {
            if (path.size() != times) throw McError("ragged sample matrix");
            d.push_back(path[k + 1] - path[k]);
        }
        double mean = mean_of(d);
        double ss = 0;
        for (double x : d) ss += (x - mean) * (x - mean);
        double var = ss / (n - 1);
        double t, pv;
        if (var == 0) {
            t = mean == 0 ? 0.0 : std::numeric_limits<double>::infinity();
            pv = mean == 0 ? 1.0 : 0.0;
        } else {
            t = mean / std::sqrt(var / n);
            pv = std::erfc(std::abs(t) / std::numbers::sqrt2);
        }
        rep.rows.push_back({k, mean, t, pv});
        if (pv < cutoff) rep.pass = false;
    }
    return rep;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw McError("KS test needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    double en = std::sqrt(na * nb / (na + nb));
    double lam = (en + 0.12 + 0.11 / en) * d;
    double q = 0;
    if (lam < 1e-3) {
        q = 1;
    } else {
        for (int k = 1; k <= 100; ++k) {
            double term = 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
            q += term;
            if (std::abs(term) < 1e-12) break;
        }
        q = std::clamp(q, 0.0, 1.0);
    }
    return {d, q};
}

}  // namespace penf::mc
