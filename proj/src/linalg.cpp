#include "penf/linalg.hpp"

#include <utility>

namespace penf {

RowEchelon row_reduce(Matrix m, std::size_t cols) {
    RowEchelon out;
    std::size_t row = 0;
    for (std::size_t c = 0; c < cols && row < m.size(); ++c) {
        std::size_t piv = row;
        while (piv < m.size() && sgn(m[piv][c]) == 0) ++piv;
        if (piv == m.size()) continue;
        std::swap(m[row], m[piv]);
        Rational inv = 1 / m[row][c];
        for (auto& v : m[row]) v *= inv;
        for (std::size_t r = 0; r < m.size(); ++r) {
            if (r == row || sgn(m[r][c]) == 0) continue;
            Rational factor = m[r][c];
            for (std::size_t j = 0; j < m[r].size(); ++j) m[r][j] -= factor * m[row][j];
        }
        out.pivots.push_back(static_cast<int>(c));
        ++row;
    }
    m.resize(row);
    out.reduced = std::move(m);
    return out;
}

std::size_t rank(const Matrix& m, std::size_t cols) { return row_reduce(m, cols).pivots.size(); }

std::vector<Vec> nullspace(const Matrix& m, std::size_t cols) {
    RowEchelon e = row_reduce(m, cols);
    std::vector<bool> is_pivot(cols, false);
    for (int p : e.pivots) is_pivot[p] = true;
    std::vector<Vec> basis;
    for (std::size_t free = 0; free < cols; ++free) {
        if (is_pivot[free]) continue;
        Vec x(cols);
        x[free] = 1;
        for (std::size_t r = 0; r < e.pivots.size(); ++r) x[e.pivots[r]] = -e.reduced[r][free];
        basis.push_back(std::move(x));
    }
    return basis;
}

std::optional<Vec> solve(const Matrix& m, const Vec& b, std::size_t cols) {
    Matrix aug = m;
    for (std::size_t r = 0; r < aug.size(); ++r) {
        aug[r].resize(cols);
        aug[r].push_back(b[r]);
    }
    RowEchelon e = row_reduce(aug, cols + 1);
    for (int p : e.pivots)
        if (static_cast<std::size_t>(p) == cols) return std::nullopt;
    Vec x(cols);
    for (std::size_t r = 0; r < e.pivots.size(); ++r) x[e.pivots[r]] = e.reduced[r][cols];
    return x;
}

}  // namespace penf
