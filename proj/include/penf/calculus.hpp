#pragma once

#include <string>
#include <vector>

#include "penf/models.hpp"

namespace penf {

// Z_k = P(tau > t_k | F^_k) for k <= n; at the terminal index P(tau = inf | F^_inf).
ProcessTable azema_Z(const EnlargedSpace& s);

struct AzemaDecomposition {
    ProcessTable z;
    ProcessTable martingale;   // M, with Z = M - A
    ProcessTable predictable;  // A
    ProcessTable optional;     // A-hat
    ProcessTable m;            // M + A-hat - A, an F^-martingale
};

AzemaDecomposition azema_decomposition(const EnlargedSpace& s);

// Product atoms with tau < inf and Z_{tau-} = 0 (Z_{0-} = 1). Empty on every valid model.
std::vector<int> z_left_limit_violations(const EnlargedSpace& s);

ProcessTable default_indicator(const EnlargedSpace& s);  // H_k = 1{tau <= t_k}
ProcessTable default_martingale_L(const EnlargedSpace& s);

// All tables below live on the product space; lift base tables first.

struct DriftDecomposition {
    ProcessTable martingale_part;  // X~
    ProcessTable drift;            // Gamma(X), predictable, Gamma_0 = 0
};

DriftDecomposition drift_exact(const ProcessTable& x, const EnlargedSpace& s);

// Drift accumulated over (0, tau] only.
ProcessTable drift_before_formula(const ProcessTable& x, const EnlargedSpace& s);

// Drift accumulated over (tau, inf) only; sign multiplies the bracket term.
ProcessTable drift_after_honest_formula(const ProcessTable& x, const EnlargedSpace& s, int sign = -1);

// Steps k where the increments of a and b differ on atoms of mask(k).
enum class Region { before, after };
bool increments_agree(const ProcessTable& a, const ProcessTable& b, const EnlargedSpace& s, Region region);

struct SignResolution {
    bool plus_matches = false;
    bool minus_matches = false;
};
SignResolution resolve_after_sign(const ProcessTable& x, const EnlargedSpace& s);

struct DeviationRow {
    int step;
    int atom;
    Rational formula;
    Rational exact;
};

struct NaturalDrift {
    ProcessTable drift;
    std::vector<DeviationRow> deviations;  // entries where the formula misses the exact increment
    Rational max_deviation;
};

NaturalDrift drift_natural_formula(const ProcessTable& x, const NaturalModel& model, const NaturalParams& params);

struct Exponential {
    ProcessTable eta;
    bool positive = true;
};

// eta_k = eta_{k-1} (1 + J_k dY_k), eta_0 = 1.
Exponential stochastic_exponential(const ProcessTable& integrand, const ProcessTable& driver);

class MeasureChange {
public:
    // Density must be strictly positive with unit mean under mu.
    MeasureChange(Vec density, const Vec& mu);
    static MeasureChange identity(std::size_t atoms) { return MeasureChange(Vec(atoms, Rational(1))); }

    const Vec& density() const { return density_; }
    Vec reweight(const Vec& mu) const;

private:
    explicit MeasureChange(Vec density) : density_(std::move(density)) {}
    Vec density_;
};

// W - sum d<eta, W>_j / eta_{j-1}, brackets under mu in f.
ProcessTable girsanov_transform(const ProcessTable& x, const ProcessTable& eta, const Filtration& f, const Vec& mu);

// Martingales P(B | F^_k) for the blocks B of F^_inf, lifted to the product space.
std::vector<ProcessTable> martingale_basis(const EnlargedSpace& s);

// [W_i, W_j] = 0 path-wise for i != j.
bool strongly_orthogonal(const std::vector<ProcessTable>& drivers);

struct ShCheck {
    bool passed = true;
    int failing_basis = -1;  // index into the basis
    std::string detail;
};

ShCheck sh_measure_check(const EnlargedSpace& s, const MeasureChange& q, const StoppingTime& start,
                         const StoppingTime& end, const std::vector<ProcessTable>& basis);

// Every F^-martingale is a G-martingale.
bool immersion_check(const EnlargedSpace& s);

enum class HonestEtaForm {
    exact,          // step ratio (1 - Z_{k-1}) / (1 - P(tau >= t_k | F^_k))
    left_point,     // 1 + dm~_k / (1 - Z_{k-1})
    no_denominator  // 1 + dm~_k, a deliberately broken variant
};

struct ShMeasure {
    StoppingTime start;  // S_a = tau v a
    StoppingTime end;    // T_{a,n}
    ProcessTable eta;
    bool positive = true;
    Vec density;  // eta at S_a v T_{a,n}
};

// a: grid index; n: bracket budget and time cap.
ShMeasure build_sh_measure_honest(const EnlargedSpace& s, int a, int n, HonestEtaForm form = HonestEtaForm::exact);

struct CoveringPiece {
    int step;
    StoppingTime start;
    StoppingTime end;
    Vec density;
};

struct Covering {
    bool available = true;  // false when some F-child is invisible to G_{k-1}
    std::string detail;
    std::vector<CoveringPiece> pieces;
};

// One piece per step k, covering (tau v (k-1), k] with the density P(E|F^_{k-1}) / P(E|G_{k-1}).
Covering step_covering(const EnlargedSpace& s);

}  // namespace penf
