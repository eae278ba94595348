#pragma once

#include <string>
#include <vector>

#include "penf/finite_prob.hpp"

namespace penf {

// rows[w][k] = P(tau = t_k | base atom w), k = 0..n, index n+1 for tau = infinity.
struct DefaultKernel {
    std::vector<Vec> rows;
};

struct ProductAtom {
    int time;  // default index, n+1 for infinity
    int base;  // base atom
};

class EnlargedSpace {
public:
    EnlargedSpace(FiniteSpace base, Filtration base_filtration, DefaultKernel kernel);

    const FiniteSpace& base() const { return base_; }
    const Filtration& base_filtration() const { return base_f_; }
    const DefaultKernel& kernel() const { return kernel_; }

    const FiniteSpace& product() const { return product_; }
    const Vec& mu() const { return product_.weights(); }
    std::size_t size() const { return atoms_.size(); }
    const std::vector<ProductAtom>& atoms() const { return atoms_; }

    const StoppingTime& tau() const { return tau_; }
    const Filtration& lifted() const { return lifted_; }  // base filtration pulled back
    const Filtration& G() const { return g_; }            // progressive enlargement

    int horizon() const { return base_f_.horizon(); }
    int terminal() const { return base_f_.terminal(); }
    int num_stages() const { return base_f_.num_stages(); }

    Vec lift(const Vec& base_var) const;
    ProcessTable lift(const ProcessTable& base_process) const;

private:
    FiniteSpace base_;
    Filtration base_f_;
    DefaultKernel kernel_;
    FiniteSpace product_;
    std::vector<ProductAtom> atoms_;
    StoppingTime tau_;
    Filtration lifted_;
    Filtration g_;
};

EnlargedSpace build_product_space(const FiniteSpace& base, const Filtration& f, const DefaultKernel& kernel);

// tau > t_k; at the terminal index this reads tau = infinity.
Mask alive_after(const EnlargedSpace& s, int k);

enum class GStarMutation { none, drop_tau_generator };

// The three-piece sigma-algebra between G_{T-} and G_T.
Partition g_star(const EnlargedSpace& s, const StoppingTime& t, GStarMutation mutation = GStarMutation::none);

enum class FragmentMutation { none, flip_comparison };

// Filtration living on (S, S v T]; stage t mixes G*_T and G_{S v t}.
Filtration fragment_filtration(const EnlargedSpace& s, const StoppingTime& start, const StoppingTime& end,
                               FragmentMutation mutation = FragmentMutation::none,
                               GStarMutation gstar_mutation = GStarMutation::none);

// X_{(S v t) ^ T} - X_S, with T replaced by S v T.
ProcessTable fragment_process(const ProcessTable& x, const StoppingTime& start, const StoppingTime& end);

struct IdentityResult {
    IdentityResult() = default;
    explicit IdentityResult(std::string n) : name(std::move(n)) {}

    std::string name;
    bool passed = true;
    std::vector<int> witness;  // product atoms of an offending block
    std::string detail;
};

struct AppendixReport {
    std::vector<IdentityResult> results;
    bool all_passed() const;
    const IdentityResult& find(const std::string& name) const;
};

struct AppendixOptions {
    GStarMutation gstar = GStarMutation::none;
    FragmentMutation fragment = FragmentMutation::none;
};

AppendixReport check_appendix_identities(const EnlargedSpace& s, const StoppingTime& start, const StoppingTime& end,
                                         const AppendixOptions& options = {});

// {0<tau<inf} ∩ G_tau equals {0<tau<inf} ∩ G_{tau-}.
bool gtau_equality(const EnlargedSpace& s);

}  // namespace penf
