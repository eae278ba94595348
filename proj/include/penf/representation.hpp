#pragma once

#include <optional>
#include <string>
#include <vector>

#include "penf/calculus.hpp"

namespace penf {

struct MrpGap : EngineError {
    using EngineError::EngineError;
};
struct ShMeasureFailure : EngineError {
    using EngineError::EngineError;
};

struct NodeDimensions {
    int step;
    int block;           // block of stage step-1
    int mean_zero_dim;   // children - 1
    int span_dim;        // rank of the driver increments
};

struct MrpCertificate {
    bool spanning = true;
    std::vector<NodeDimensions> nodes;
    // On a gap: a martingale, zero before the gap step, orthogonal to every driver.
    std::optional<ProcessTable> witness;
    int gap_step = -1;
    int gap_block = -1;
};

MrpCertificate mrp_check(const Vec& mu, const Filtration& f, const std::vector<ProcessTable>& drivers);

struct RepresentationTriple {
    std::vector<ProcessTable> j;  // one integrand per driver
    ProcessTable k;
    ProcessTable x;      // E[zeta 1{tau > t_k} | F^_k] / Z_k
    Vec xi;              // G_tau-measurable residual
    ProcessTable target; // E[zeta | G_k]
    ProcessTable rebuilt;
    bool exact = false;  // rebuilt == target
};

// zeta must be measurable for G_tau; drivers are F^-martingales on the product space.
RepresentationTriple integrand_solver_before(const EnlargedSpace& s, const Vec& zeta,
                                             const std::vector<ProcessTable>& drivers);

// E[xi | G_{tau-}] = 0 on {0 < tau < inf}.
bool residual_is_orthogonal(const EnlargedSpace& s, const Vec& xi);

struct HonestRepresentation {
    RepresentationTriple before;              // built from E[zeta | G_tau]
    std::vector<ProcessTable> j_after;        // per driver, used on (tau, inf)
    ProcessTable target;
    ProcessTable rebuilt;
    bool exact = false;
};

HonestRepresentation honest_full_representation(const EnlargedSpace& s, const Vec& zeta,
                                                const std::vector<ProcessTable>& drivers);

// Throws ShMeasureFailure when q is not an sH-measure on (S, T].
MrpCertificate fragment_mrp_check(const EnlargedSpace& s, const MeasureChange& q, const StoppingTime& start,
                                  const StoppingTime& end, const std::vector<ProcessTable>& drivers);

// G^tau: stage k is G at tau ^ t_k.
Filtration stopped_filtration(const EnlargedSpace& s);
ProcessTable stopped(const ProcessTable& x, const StoppingTime& t);

struct Equivalence {
    std::string label;
    bool applicable = true;
    bool lhs = false;
    bool rhs = false;
    bool consistent() const { return !applicable || lhs == rhs; }
};

struct HarnessReport {
    bool f_mrp = false;
    bool a = false;    // MRP(G^tau, (W~^tau, L))
    bool b = false;    // W_tau 1{0<tau<inf} in G_{tau-}
    bool c = false;    // G_tau = G_{tau-} on {0<tau<inf}
    bool d = false;    // immersion
    bool d_w = false;  // W itself is a G-martingale
    bool e = false;    // MRP(G, (W~, L))
    bool covering_available = false;
    bool covering_verified = false;
    std::string covering_detail;
    std::vector<Equivalence> equivalences;
    bool all_consistent() const;
};

// drivers: F-martingales on the base space.
HarnessReport theorem_harness(const EnlargedSpace& s, const std::vector<ProcessTable>& drivers);

}  // namespace penf
