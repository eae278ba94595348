#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace penf::mc {

struct McError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Counter-based draws: value(seed, path, counter) = mix(mix(mix(seed) ^ path) ^ counter),
// mix being the SplitMix64 finalizer. Uniforms take the top 53 bits, offset by half an ulp.
std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t counter);
double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t counter);
// Box-Muller on the uniforms at counters 2c and 2c+1; the sine branch is discarded.
double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t counter);

// Counter ranges per purpose, so streams never overlap.
inline constexpr std::uint64_t kDriverStream = 0;
inline constexpr std::uint64_t kSecondDriverStream = 1ULL << 32;
inline constexpr std::uint64_t kUniformStream = 1ULL << 40;
inline constexpr std::uint64_t kBridgeStream = 1ULL << 41;

enum class FKind { zero, linear };

struct FSpec {
    FKind kind = FKind::zero;
    double scale = 0;  // f(x) = scale * x on [-1, 1]
    double bound = 0;  // declared sup |f|
    double derivative_bound = 0;
    double value(double x) const { return kind == FKind::zero ? 0.0 : scale * x; }
};

struct McConfig {
    double dt = 1.0 / 1024;
    double horizon = 1;
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    std::vector<double> u_grid{0, 0.25, 0.5, 0.75, 1};
    double n_vol = 0;           // dN = n_vol N dW
    double lambda = 0.5;        // intensity lambda(t) = lambda + lambda_slope t
    double lambda_slope = 0;
    double y_vol = 1;           // Y = y_vol (rho W + sqrt(1 - rho^2) B)
    double y_rho = 1;
    FSpec f;
    double floor = 1e-8;        // near-singularity floor for 1 - Z
    unsigned threads = 1;
};

void validate(const McConfig& cfg);

enum PathFlag : std::uint8_t {
    kZOutOfRange = 1,
    kNearSingular = 2,
    kMOutOfRange = 4,
    kNonMonotone = 8,
};

// Values on the u-grid ("record times"); full trajectories are regenerated from the counters.
struct PathBundle {
    McConfig cfg;
    int steps = 0;
    std::vector<int> record_step;
    std::vector<double> record_time;
    std::vector<double> cumulative_intensity;  // Lambda at record times
    // [path * records + r]
    std::vector<double> w, n, y, z;
    std::vector<std::uint8_t> flags;
    std::vector<double> uniform;  // independent draw for default sampling

    std::size_t records() const { return record_step.size(); }
    double at(const std::vector<double>& v, std::size_t path, std::size_t r) const { return v[path * records() + r]; }
};

double cumulative_intensity(const McConfig& cfg, double t);

PathBundle simulate_base_paths(const McConfig& cfg);

struct MTrajectory {
    std::size_t u_index = 0;
    std::vector<double> values;  // [path * records + r], NaN before u
    std::vector<std::uint8_t> flags;
    std::size_t flagged() const;
};

MTrajectory solve_natural_sde(const PathBundle& bundle, std::size_t u_index, const FSpec& f);

// Marks paths where M^u decreases in u at some record time.
void flag_non_monotone(std::vector<MTrajectory>& family, const PathBundle& bundle);

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct DefaultSample {
    std::vector<double> tau;  // kNever when no default
    std::vector<bool> excluded;
    std::size_t excluded_count() const;
};

// Threshold of Lambda against -log V; hazard_scale != 1 is the corrupted-sampler fixture.
DefaultSample sample_default_cox(const PathBundle& bundle, double hazard_scale = 1);
// Inverse of u -> M^u at the horizon on the u-grid.
DefaultSample sample_default_natural(const PathBundle& bundle, const std::vector<MTrajectory>& family);

struct ProjectionRow {
    double t;
    double survival;   // mean of 1{tau > t}
    double projected;  // mean of N_t e^{-Lambda_t}
    double se;         // standard error of the paired difference
    bool pass;
};

struct ProjectionReport {
    std::vector<ProjectionRow> rows;
    std::size_t used_paths = 0;
    bool pass = true;
};

ProjectionReport projection_condition_test(const PathBundle& bundle, const DefaultSample& sample,
                                           std::size_t min_paths = 30);

enum class Claim { constant, defaultable_bond, stopped_walk };
std::string to_string(Claim c);

struct ReplicationRow {
    double dt;
    double rms;
    double ratio;  // rms / previous rms, NaN on the first row
};

struct ReplicationReport {
    std::vector<ReplicationRow> rows;
    bool pass = true;  // every ratio <= threshold
};

// Hedges with closed-form integrands at dt * 2^levels[j]; the bundle must have N = 1.
ReplicationReport replication_backtest(const PathBundle& bundle, const DefaultSample& sample, Claim claim,
                                       const std::vector<int>& coarsening, double threshold = 0.85);

struct DriftRow {
    std::size_t block;
    double mean;
    double t_stat;
    double p_value;
};

struct DriftReport {
    std::vector<DriftRow> rows;
    double alpha;
    bool pass = true;  // Bonferroni over the blocks
};

// samples: [path][time]; increments between consecutive times are tested.
DriftReport martingale_drift_test(const std::vector<std::vector<double>>& samples, double alpha = 0.01);

struct KsResult {
    double statistic;
    double p_value;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace penf::mc
