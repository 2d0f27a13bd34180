#pragma once

#include <utility>
#include <vector>

#include "proseco/box.hpp"
#include "proseco/config.hpp"
#include "proseco/tensor.hpp"

namespace proseco {

/// One detector pass over one image: N embeddings (rows, unit L2 norm) and
/// the N predicted boxes. `box_tensor` carries the same boxes as a [N x 4]
/// tensor so the box losses can differentiate into the student head; on the
/// teacher side it is a constant.
struct ProposalSet {
    Tensor embeddings;  // [N x d_proj]
    BoxSet boxes;
    Tensor box_tensor;  // [N x 4]

    int count() const { return embeddings.defined() ? embeddings.dim(0) : 0; }
};

struct CostMatrix {
    int rows = 0, cols = 0;
    std::vector<double> entries;  // row-major

    double at(int r, int c) const { return entries[static_cast<size_t>(r) * cols + c]; }
    double& at(int r, int c) { return entries[static_cast<size_t>(r) * cols + c]; }
};

/// An injective source->target map covering min(rows, cols) pairs, sorted by
/// source index, plus the summed cost of the matched entries.
struct MatchAssignment {
    std::vector<std::pair<int, int>> pairs;
    double total_cost = 0.0;

    /// target matched to source j (pairs cover every source when rows<=cols)
    int target_of(int source) const { return pairs[static_cast<size_t>(source)].second; }
};

/// Exact minimum-cost assignment (shortest augmenting path with potentials).
/// Requires finite entries. Matrices with more rows than columns are solved
/// transposed. Equal-cost optima are canonicalized to the lexicographically
/// smallest pair list by restricting to the zero-reduced-cost subgraph.
MatchAssignment hungarian(const CostMatrix& c);

/// Teacher-proposal to student-prediction cost, entry (j, s) =
///   -lambda_sim * cos(z_j, zhat_s) + lambda_coord * L1 + lambda_giou * Lgiou.
/// Detached from the tape: values only, no gradient path.
CostMatrix proposal_cost(const ProposalSet& teacher, const ProposalSet& student,
                         const RunConfig& cfg);

/// Selective-search box to student-prediction cost (K x N, needs K <= N):
///   lambda_coord * L1 + lambda_giou * Lgiou.
CostMatrix box_cost(const BoxSet& ss, const ProposalSet& student, const RunConfig& cfg);

}  // namespace proseco
