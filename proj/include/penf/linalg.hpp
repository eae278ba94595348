#pragma once

#include <optional>
#include <vector>

#include "penf/rational.hpp"

namespace penf {

// Dense row-major rational matrix, just enough for node-wise rank work.
using Matrix = std::vector<Vec>;

struct RowEchelon {
    Matrix reduced;             // reduced row echelon form
    std::vector<int> pivots;    // pivot column of each nonzero row
};

RowEchelon row_reduce(Matrix m, std::size_t cols);

std::size_t rank(const Matrix& m, std::size_t cols);

// Basis of {x : m x = 0}.
std::vector<Vec> nullspace(const Matrix& m, std::size_t cols);

// Some x with m x = b, or nullopt if inconsistent. Free variables are set to 0.
std::optional<Vec> solve(const Matrix& m, const Vec& b, std::size_t cols);

}  // namespace penf
