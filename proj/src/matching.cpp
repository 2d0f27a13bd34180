#include "proseco/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace proseco {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment on an n x n cost lookup. Returns
// col_of_row plus the dual potentials (u, v), which satisfy
// u[i] + v[j] <= cost(i,j) with equality on matched edges.
struct SquareSolution {
    std::vector<int> col_of_row;
    std::vector<double> u, v;
};

template <typename CostFn>
SquareSolution solve_square(int n, CostFn cost) {
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);  // p[j]: row (1-based) on column j
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    SquareSolution s;
    s.col_of_row.assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) s.col_of_row[p[j] - 1] = j - 1;
    s.u.assign(u.begin() + 1, u.end());
    s.v.assign(v.begin() + 1, v.end());
    return s;
}

// Equal-cost optima live inside the zero-reduced-cost subgraph (complementary
// slackness on the padded square problem). When more than one optimum exists,
// pick the lexicographically smallest column list by fixing rows in order and
// re-augmenting displaced rows within the subgraph.
class ZeroSubgraph {
public:
    ZeroSubgraph(int n, std::vector<std::vector<int>> adj, std::vector<int> col_of_row)
        : n_(n), adj_(std::move(adj)), col_of_row_(std::move(col_of_row)),
          row_of_col_(n, -1), fixed_col_(n, 0) {
        for (int r = 0; r < n_; ++r)
            if (col_of_row_[r] >= 0) row_of_col_[col_of_row_[r]] = r;
    }

    bool has_ties() const {
        for (int r = 0; r < n_; ++r)
            if (adj_[r].size() > 1) return true;
        return false;
    }

    void canonicalize() {
        for (int r = 0; r < n_; ++r) {
            for (int c : adj_[r]) {
                if (c >= col_of_row_[r]) break;  // adj is ascending
                if (fixed_col_[c] || !try_move(r, c)) continue;
                break;
            }
            fixed_col_[col_of_row_[r]] = 1;
        }
    }

    const std::vector<int>& col_of_row() const { return col_of_row_; }

private:
    // Attempt to put row r on column c, re-routing the displaced row through
    // an augmenting path that avoids fixed columns. Rolls back on failure.
    bool try_move(int r, int c) {
        const int old_c = col_of_row_[r];
        const int displaced = row_of_col_[c];
        col_of_row_[r] = c;
        row_of_col_[c] = r;
        row_of_col_[old_c] = -1;  // freed for the augmenting search
        if (displaced == -1) return true;
        std::vector<char> visited(n_, 0);
        visited[c] = 1;
        col_of_row_[displaced] = -1;
        if (augment(displaced, visited)) return true;
        col_of_row_[displaced] = c;
        row_of_col_[c] = displaced;
        col_of_row_[r] = old_c;
        row_of_col_[old_c] = r;
        return false;
    }

    void assign(int r, int c) {
        col_of_row_[r] = c;
        row_of_col_[c] = r;
    }

    bool augment(int r, std::vector<char>& visited) {
        for (int c : adj_[r]) {
            if (visited[c] || fixed_col_[c]) continue;
            visited[c] = 1;
            const int other = row_of_col_[c];
            if (other == -1) {
                assign(r, c);
                return true;
            }
            col_of_row_[other] = -1;
            if (augment(other, visited)) {
                assign(r, c);
                return true;
            }
            col_of_row_[other] = c;
        }
        return false;
    }

    int n_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> col_of_row_;
    std::vector<int> row_of_col_;
    std::vector<char> fixed_col_;
};

MatchAssignment solve(const CostMatrix& c) {
    const int rows = c.rows, cols = c.cols;
    const int n = cols;  // rows <= cols here; pad with zero-cost dummy rows
    auto cost = [&c, rows](int i, int j) -> double {
        return i < rows ? c.at(i, j) : 0.0;
    };
    SquareSolution s = solve_square(n, cost);

    double max_abs = 0.0;
    for (double e : c.entries) max_abs = std::max(max_abs, std::abs(e));
    const double tol = 1e-9 * (1.0 + max_abs);

    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (std::abs(cost(i, j) - s.u[i] - s.v[j]) <= tol) adj[i].push_back(j);

    ZeroSubgraph zg(n, std::move(adj), s.col_of_row);
    if (zg.has_ties()) zg.canonicalize();

    MatchAssignment out;
    for (int r = 0; r < rows; ++r) {
        const int j = zg.col_of_row()[r];
        out.pairs.emplace_back(r, j);
        out.total_cost += c.at(r, j);
    }
    return out;
}

}  // namespace

MatchAssignment hungarian(const CostMatrix& c) {
    if (c.rows == 0 || c.cols == 0) return {};
    if (c.entries.size() != static_cast<size_t>(c.rows) * c.cols)
        throw ShapeError("hungarian: entry count does not match dims");
    for (double e : c.entries)
        if (!std::isfinite(e)) throw ContractError("hungarian: non-finite cost entry");

    if (c.rows <= c.cols) return solve(c);

    CostMatrix t;
    t.rows = c.cols;
    t.cols = c.rows;
    t.entries.resize(c.entries.size());
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) t.at(j, i) = c.at(i, j);
    MatchAssignment flipped = solve(t);
    MatchAssignment out;
    out.total_cost = flipped.total_cost;
    for (auto [src, dst] : flipped.pairs) out.pairs.emplace_back(dst, src);
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

CostMatrix proposal_cost(const ProposalSet& teacher, const ProposalSet& student,
                         const RunConfig& cfg) {
    const int n = teacher.count();
    if (n != student.count())
        throw ContractError("proposal_cost: teacher and student sizes differ");
    const int d = teacher.embeddings.dim(1);
    CostMatrix c;
    c.rows = c.cols = n;
    c.entries.resize(static_cast<size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        for (int s = 0; s < n; ++s) {
            double dot = 0.0;
            for (int t = 0; t < d; ++t)
                dot += static_cast<double>(teacher.embeddings.at(j, t)) *
                       student.embeddings.at(s, t);
            c.at(j, s) = -cfg.lambda_sim * dot +
                         cfg.lambda_coord * l1_coord_loss(teacher.boxes[j], student.boxes[s]) +
                         cfg.lambda_giou * giou_loss(teacher.boxes[j], student.boxes[s]);
        }
    }
    return c;
}

CostMatrix box_cost(const BoxSet& ss, const ProposalSet& student, const RunConfig& cfg) {
    const int k = static_cast<int>(ss.size());
    const int n = student.count();
    if (k > n) throw ContractError("box_cost: more target boxes than predictions (K > N)");
    CostMatrix c;
    c.rows = k;
    c.cols = n;
    c.entries.resize(static_cast<size_t>(k) * n);
    for (int j = 0; j < k; ++j)
        for (int s = 0; s < n; ++s)
            c.at(j, s) = cfg.lambda_coord * l1_coord_loss(ss[j], student.boxes[s]) +
                         cfg.lambda_giou * giou_loss(ss[j], student.boxes[s]);
    return c;
}

}  // namespace proseco
