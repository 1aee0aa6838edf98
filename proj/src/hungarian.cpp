#include "gebd/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gebd/datamodel.hpp"

namespace gebd {

namespace {

// Shortest augmenting path with potentials, one row at a time. Requires
// n <= m; O(n^2 m). Arbitrary real costs are fine because edges are only
// compared through reduced costs.
std::vector<int> solve_rows_le_cols(const Mat& a) {
    const int n = a.rows();
    const int m = a.cols();
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> match(m + 1, 0); // match[j] = row assigned to column j (1-based)
    std::vector<int> way(m + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_of_col(m, -1);
    for (int j = 1; j <= m; ++j)
        if (match[j] != 0) row_of_col[j - 1] = match[j] - 1;
    return row_of_col;
}

} // namespace

std::vector<std::pair<int, int>> hungarian(const Mat& cost) {
    const int n = cost.rows();
    const int m = cost.cols();
    if (n == 0 || m == 0) return {};
    for (std::size_t i = 0; i < cost.size(); ++i)
        if (!std::isfinite(cost.data()[i])) throw Error("hungarian: non-finite cost");

    std::vector<std::pair<int, int>> out;
    if (n <= m) {
        const auto row_of_col = solve_rows_le_cols(cost);
        for (int j = 0; j < m; ++j)
            if (row_of_col[j] >= 0) out.emplace_back(row_of_col[j], j);
    } else {
        Mat t(m, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) t(j, i) = cost(i, j);
        const auto col_of_row = solve_rows_le_cols(t);
        for (int i = 0; i < n; ++i)
            if (col_of_row[i] >= 0) out.emplace_back(i, col_of_row[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double assignment_cost(const Mat& cost, const std::vector<std::pair<int, int>>& assignment) {
    double total = 0.0;
    for (const auto& [i, j] : assignment) total += cost(i, j);
    return total;
}

} // namespace gebd
