#pragma once

#include <functional>
#include <string>
#include <vector>

#include "penf/enlargement.hpp"

namespace penf {

struct InvalidParameters : EngineError {
    using EngineError::EngineError;
};

// ---- base trees ----

struct Branch {
    Rational prob;
    Rational increment;  // step of the driver walk along this branch
};

// Branches below a node, given the step (1..n) and the branch indices taken so far.
using BranchRule = std::function<std::vector<Branch>(int step, const std::vector<int>& path)>;

struct BaseModel {
    FiniteSpace space;
    Filtration filtration;
    ProcessTable walk;                     // driver W, W_0 = 0, terminal row = W_n
    std::vector<std::vector<int>> paths;   // branch indices per atom
};

BaseModel build_tree(int steps, const BranchRule& rule);

// Same branches at every node of a step; a single branch means a quiet step.
BaseModel build_tree(const std::vector<std::vector<Branch>>& per_step);

std::vector<Branch> fair_coin();  // +1 / -1 with probability 1/2

// ---- default-time models ----

// survival = e^{-Lambda}: adapted, starts at 1, non-increasing, values in [0,1].
struct CoxParams {
    ProcessTable survival;
};

EnlargedSpace cox_model(const FiniteSpace& base, const Filtration& f, const CoxParams& params);

// alpha[theta] is the conditional density process of tau at grid index theta
// (theta = n+1 for infinity) against the reference weights mu[theta].
struct DensityParams {
    std::vector<ProcessTable> alpha;
    Vec mu;
};

EnlargedSpace density_model(const FiniteSpace& base, const Filtration& f, const DensityParams& params);

// Density alpha_k(tau)^{-1} of the measure under which tau is independent of F_k.
Vec density_decoupling_density(const EnlargedSpace& s, const DensityParams& params, int k);

// tau per base atom (n+1 for infinity). Honesty is verified; violations throw.
EnlargedSpace honest_time_model(const FiniteSpace& base, const Filtration& f, const std::vector<int>& tau);

bool is_honest(const Filtration& f, const std::vector<int>& tau);

// Last time the walk sits at its overall maximum; last time it is at zero.
std::vector<int> last_max_rule(const ProcessTable& walk, int horizon);
std::vector<int> last_zero_rule(const ProcessTable& walk, int horizon);

struct ScalarFunction {
    std::string name;
    std::function<Rational(const Rational&)> value;
    std::function<Rational(const Rational&)> derivative;
    Rational bound;             // declared sup |f|
    Rational derivative_bound;  // declared sup |f'|
};

ScalarFunction zero_function();
ScalarFunction scaled_identity(const Rational& c, const Rational& bound);  // f(x) = c x on the declared range

struct NaturalParams {
    ProcessTable n;         // positive martingale, N_0 = 1
    ProcessTable survival;  // e^{-Lambda}
    ProcessTable y;         // martingale
    ScalarFunction f;
};

struct NaturalModel {
    EnlargedSpace space;
    // cdf[u][k][w] = Q[tau <= t_u | F_k] on base atoms; rows k >= u follow the recursion.
    std::vector<ProcessTable> cdf;
    ProcessTable z;  // N e^{-Lambda} on base atoms
};

NaturalModel natural_model_discrete(const FiniteSpace& base, const Filtration& f, const NaturalParams& params);

}  // namespace penf
