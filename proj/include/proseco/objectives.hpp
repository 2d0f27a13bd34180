#pragma once

#include <vector>

#include "proseco/config.hpp"
#include "proseco/matching.hpp"
#include "proseco/tensor.hpp"

namespace proseco {

// Flat index convention throughout: proposal (image i, slot j) maps to row
// i*N + j of the (Nb*N) x (Nb*N) similarity matrices.

struct SimilarityDistribution {
    Tensor values;  // [B x B], rows sum to 1 over unmasked entries
    double temperature = 0.0;
    bool masked = false;
};

struct TargetDistribution {
    Tensor values;  // constant [B x B]
    double lambda_sce = 0.0;
    double delta = 1.0;
};

/// [Nb*N x d] stack of per-image embedding matrices.
Tensor flatten_embeddings(const std::vector<ProposalSet>& sets);

/// Teacher-teacher relation distribution p'. Row (i,j) is a softmax over the
/// slots kept by the relation mask: as_written keeps (k,l) with k != i and
/// l != j; self_only drops only (i,j) itself. Throws DegenerateError when a
/// row has nothing left to relate to.
SimilarityDistribution teacher_relations(const Tensor& z_flat, int nb, int n,
                                         double tau_t, RelationMask mask);

/// Teacher-student similarity p''. Full softmax over all Nb*N student slots;
/// differentiable in the student embeddings.
SimilarityDistribution cross_similarities(const Tensor& z_flat, const Tensor& zhat_flat,
                                          double tau);

/// Localization-aware target w_loc = lambda * same-image IoU gate + (1-lambda) p'.
/// p_prime may be null when lambda_sce == 1 (the relation term has zero weight).
/// iou_per_image holds one row-major NxN teacher overlap matrix per image.
TargetDistribution locsce_target(const SimilarityDistribution* p_prime,
                                 const std::vector<std::vector<double>>& iou_per_image,
                                 int nb, int n, double lambda_sce, double delta);

// The four contrastive objectives. All take teacher/student proposal batches
// and the per-image proposal matching; gradients reach only the student.
Tensor locsce_loss(const std::vector<ProposalSet>& teacher,
                   const std::vector<ProposalSet>& student,
                   const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg);
Tensor sce_loss(const std::vector<ProposalSet>& teacher,
                const std::vector<ProposalSet>& student,
                const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg);
Tensor infonce_loss(const std::vector<ProposalSet>& teacher,
                    const std::vector<ProposalSet>& student,
                    const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg);
Tensor locnce_loss(const std::vector<ProposalSet>& teacher,
                   const std::vector<ProposalSet>& student,
                   const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg);

struct GlobalLossResult {
    Tensor total;               // lambda_contrast * contrast + box terms
    double contrast = 0.0;      // unweighted contrastive loss value
    double coord_term = 0.0;    // lambda_coord-weighted, 1/(Nb K) normalized
    double giou_term = 0.0;     // lambda_giou-weighted, 1/(Nb K) normalized
    double mean_positive_count = 0.0;  // mean IoU-gate positives per proposal
};

/// Full training objective: the configured contrastive loss plus the
/// box-matched coordinate and overlap regression terms.
GlobalLossResult global_loss(const std::vector<ProposalSet>& teacher,
                             const std::vector<ProposalSet>& student,
                             const std::vector<MatchAssignment>& sigma_prop,
                             const std::vector<MatchAssignment>& sigma_box,
                             const std::vector<BoxSet>& ss_boxes, const RunConfig& cfg);

}  // namespace proseco
