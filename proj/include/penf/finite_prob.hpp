#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "penf/rational.hpp"

namespace penf {

struct DimensionMismatch : EngineError {
    using EngineError::EngineError;
};
struct NotAdapted : EngineError {
    using EngineError::EngineError;
};
struct NotStoppingTime : EngineError {
    using EngineError::EngineError;
};

using Mask = std::vector<bool>;

// Atoms are indexed 0..size-1. Weights are strictly positive and sum to one.
class FiniteSpace {
public:
    FiniteSpace() = default;
    explicit FiniteSpace(Vec weights, std::vector<std::string> labels = {});

    std::size_t size() const { return weights_.size(); }
    const Vec& weights() const { return weights_; }
    const Rational& weight(std::size_t a) const { return weights_[a]; }
    const std::string& label(std::size_t a) const { return labels_[a]; }

private:
    Vec weights_;
    std::vector<std::string> labels_;
};

// Atom -> block index. Blocks are numbered by first appearance, so two
// partitions of the same atoms are equal iff their block vectors are equal.
class Partition {
public:
    Partition() = default;
    explicit Partition(const std::vector<int>& block_of);

    static Partition trivial(std::size_t atoms);
    static Partition discrete(std::size_t atoms);

    std::size_t size() const { return block_of_.size(); }
    int num_blocks() const { return num_blocks_; }
    int block(std::size_t a) const { return block_of_[a]; }
    const std::vector<int>& block_of() const { return block_of_; }
    std::vector<std::vector<int>> blocks() const;

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::vector<int> block_of_;
    int num_blocks_ = 0;
};

template <class Key>
Partition partition_from_keys(const std::vector<Key>& keys) {
    std::map<Key, int> ids;
    std::vector<int> out(keys.size());
    for (std::size_t a = 0; a < keys.size(); ++a) {
        auto [it, inserted] = ids.try_emplace(keys[a], static_cast<int>(ids.size()));
        out[a] = it->second;
    }
    return Partition(out);
}

// True iff every block of `coarse` is a union of blocks of `fine`.
bool refines(const Partition& fine, const Partition& coarse);

Partition join(const Partition& a, const Partition& b);

// Keeps the block structure on D and lumps everything outside D into one block.
// Two set families traced on D coincide iff their restrictions compare equal.
Partition restrict_to(const Partition& p, const Mask& d);

bool is_measurable(const Vec& x, const Partition& p);

// A block of `fine` that meets two blocks of `coarse`, or empty when fine refines coarse.
std::vector<int> refinement_witness(const Partition& fine, const Partition& coarse);

// Index n+1 of a filtration with horizon n stands for the terminal time.
class Filtration {
public:
    Filtration() = default;
    Filtration(std::vector<Rational> grid, std::vector<Partition> stages);
    // Skips the refinement check; used to inspect candidate stage lists that may be defective.
    static Filtration unchecked(std::vector<Rational> grid, std::vector<Partition> stages);

    int horizon() const { return static_cast<int>(grid_.size()) - 1; }
    int terminal() const { return horizon() + 1; }
    int num_stages() const { return static_cast<int>(stages_.size()); }
    std::size_t atoms() const { return stages_.front().size(); }
    const std::vector<Rational>& grid() const { return grid_; }

    // Stage -1 is stage 0.
    const Partition& stage(int k) const { return stages_[k < 0 ? 0 : k]; }
    const std::vector<Partition>& stages() const { return stages_; }

private:
    std::vector<Rational> grid_;
    std::vector<Partition> stages_;
};

bool is_filtration(const std::vector<Partition>& stages);

// Stage x atom table of rationals; the last row is the terminal column.
class ProcessTable {
public:
    ProcessTable() = default;
    ProcessTable(int stages, std::size_t atoms, const Rational& fill = 0);
    explicit ProcessTable(std::vector<Vec> rows);

    int stages() const { return static_cast<int>(rows_.size()); }
    std::size_t atoms() const { return rows_.empty() ? 0 : rows_.front().size(); }
    Vec& operator[](int k) { return rows_[k]; }
    const Vec& operator[](int k) const { return rows_[k]; }
    const std::vector<Vec>& rows() const { return rows_; }

    // X_k - X_{k-1}; the increment at 0 is X_0.
    Vec increment(int k) const;

    friend bool operator==(const ProcessTable&, const ProcessTable&) = default;
    ProcessTable& operator+=(const ProcessTable& o);
    ProcessTable& operator-=(const ProcessTable& o);
    ProcessTable& operator*=(const Rational& c);

private:
    std::vector<Vec> rows_;
};

ProcessTable operator+(ProcessTable a, const ProcessTable& b);
ProcessTable operator-(ProcessTable a, const ProcessTable& b);
ProcessTable operator*(const Rational& c, ProcessTable a);

// Grid index per atom in 0..n, with n+1 meaning "never".
class StoppingTime {
public:
    StoppingTime() = default;
    explicit StoppingTime(std::vector<int> values) : values_(std::move(values)) {}
    static StoppingTime constant(std::size_t atoms, int k) { return StoppingTime(std::vector<int>(atoms, k)); }

    std::size_t size() const { return values_.size(); }
    int operator[](std::size_t a) const { return values_[a]; }
    const std::vector<int>& values() const { return values_; }

    friend bool operator==(const StoppingTime&, const StoppingTime&) = default;

private:
    std::vector<int> values_;
};

StoppingTime max(const StoppingTime& s, const StoppingTime& t);
StoppingTime min(const StoppingTime& s, const StoppingTime& t);

bool is_stopping_time(const StoppingTime& t, const Filtration& f);

Vec cond_exp(const Vec& x, const Partition& p, const Vec& mu);

// Coarsest partition on which every generator is constant.
Partition generate_partition(std::size_t atoms, const std::vector<Vec>& generators);

bool is_adapted(const ProcessTable& x, const Filtration& f);
// Row k measurable for stage k-1 (row 0 for stage 0).
bool is_predictable(const ProcessTable& x, const Filtration& f);

// Throws NotAdapted when x is not adapted.
bool is_martingale(const ProcessTable& x, const Filtration& f, const Vec& mu);

struct DoobDecomposition {
    ProcessTable martingale;
    ProcessTable compensator;  // X = M - A, A predictable, A_0 = 0
};
DoobDecomposition doob_decomposition(const ProcessTable& x, const Filtration& f, const Vec& mu);

ProcessTable predictable_bracket(const ProcessTable& u, const ProcessTable& v, const Filtration& f, const Vec& mu);

// sum_{j<=k} K_j (X_j - X_{j-1}), starting from 0.
ProcessTable integrate(const ProcessTable& k, const ProcessTable& x);

struct DualProjections {
    ProcessTable predictable;  // A
    ProcessTable optional;     // A-hat
};
// For the one-jump process 1{tau>0} 1[tau, inf); no jump is booked at the terminal index.
DualProjections dual_projections(const StoppingTime& tau, const Filtration& f, const Vec& mu);

enum class SigmaKind { at, before };

// F_T (at) or F_{T-} (before). Requires T to be a stopping time of f.
Partition sigma_at(const StoppingTime& t, const Filtration& f, SigmaKind kind);

// Same construction for an arbitrary grid-valued random time: the sigma-algebra
// generated by optional (resp. predictable) processes evaluated at T, with the
// terminal stage on {T = terminal}.
Partition sigma_at_random_time(const StoppingTime& t, const Filtration& f, SigmaKind kind);

}  // namespace penf
