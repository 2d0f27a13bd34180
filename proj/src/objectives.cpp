#include "proseco/objectives.hpp"

#include <cmath>

namespace proseco {

namespace {

void check_batch(const std::vector<ProposalSet>& teacher,
                 const std::vector<ProposalSet>& student,
                 const std::vector<MatchAssignment>& sigma) {
    if (teacher.empty() || teacher.size() != student.size() || sigma.size() != teacher.size())
        throw ContractError("objectives: batch sizes disagree");
    const int n = teacher[0].count();
    for (size_t i = 0; i < teacher.size(); ++i) {
        if (teacher[i].count() != n || student[i].count() != n)
            throw ContractError("objectives: proposal counts disagree across the batch");
        if (static_cast<int>(sigma[i].pairs.size()) != n)
            throw ContractError("objectives: matching does not cover all proposals");
    }
}

std::vector<std::vector<double>> teacher_overlaps(const std::vector<ProposalSet>& teacher) {
    std::vector<std::vector<double>> out;
    out.reserve(teacher.size());
    for (const auto& p : teacher) out.push_back(pairwise_iou(p.boxes));
    return out;
}

enum class PositiveRule { exact_match, iou_gate, nce_single, nce_gate };

// A target weight addressed at teacher pair (r, (k,l)) multiplies
// log p''[r, (k, sigma_k(l))]; shifting the columns once up front turns the
// quadruple sum into a plain elementwise product.
Tensor permute_target_columns(const Tensor& w, const std::vector<MatchAssignment>& sigma,
                              int nb, int n) {
    const int big = nb * n;
    std::vector<float> out(static_cast<size_t>(big) * big, 0.f);
    for (int r = 0; r < big; ++r)
        for (int k = 0; k < nb; ++k)
            for (int l = 0; l < n; ++l)
                out[static_cast<size_t>(r) * big + static_cast<size_t>(k) * n +
                    sigma[static_cast<size_t>(k)].target_of(l)] =
                    w.at(r, k * n + l);
    return Tensor::from({big, big}, std::move(out));
}

Tensor build_targets(PositiveRule rule, const SimilarityDistribution* p_prime,
                     const std::vector<std::vector<double>>& iou_per_image, int nb, int n,
                     const RunConfig& cfg) {
    const int big = nb * n;
    if (rule == PositiveRule::iou_gate)
        return locsce_target(p_prime, iou_per_image, nb, n, cfg.lambda_sce, cfg.iou_delta)
            .values;
    std::vector<float> w(static_cast<size_t>(big) * big, 0.f);
    const float lam = static_cast<float>(cfg.lambda_sce);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < n; ++j) {
            const size_t r = static_cast<size_t>(i) * n + j;
            switch (rule) {
                case PositiveRule::exact_match:
                    if (cfg.lambda_sce < 1.0)
                        for (int c = 0; c < big; ++c)
                            w[r * big + c] =
                                (1.f - lam) * p_prime->values.at(static_cast<int>(r), c);
                    w[r * big + r] += lam;
                    break;
                case PositiveRule::nce_single:
                    w[r * big + r] = 1.f;
                    break;
                case PositiveRule::nce_gate:
                    for (int m = 0; m < n; ++m)
                        if (iou_per_image[static_cast<size_t>(i)]
                                         [static_cast<size_t>(j) * n + m] >= cfg.iou_delta)
                            w[r * big + static_cast<size_t>(i) * n + m] = 1.f;
                    break;
                case PositiveRule::iou_gate:
                    break;  // handled above
            }
        }
    return Tensor::from({big, big}, std::move(w));
}

Tensor contrastive_core(PositiveRule rule, const std::vector<ProposalSet>& teacher,
                        const std::vector<ProposalSet>& student,
                        const std::vector<MatchAssignment>& sigma, const RunConfig& cfg) {
    check_batch(teacher, student, sigma);
    const int nb = static_cast<int>(teacher.size());
    const int n = teacher[0].count();

    Tensor z = flatten_embeddings(teacher).detached();
    Tensor zhat = flatten_embeddings(student);

    SimilarityDistribution p_prime;
    const SimilarityDistribution* p_prime_ptr = nullptr;
    const bool needs_relations = (rule == PositiveRule::exact_match ||
                                  rule == PositiveRule::iou_gate) &&
                                 cfg.lambda_sce < 1.0;
    if (needs_relations) {
        p_prime = teacher_relations(z, nb, n, cfg.tau_teacher, cfg.relation_mask);
        p_prime_ptr = &p_prime;
    }

    std::vector<std::vector<double>> overlaps;
    if (rule == PositiveRule::iou_gate || rule == PositiveRule::nce_gate)
        overlaps = teacher_overlaps(teacher);

    Tensor w = build_targets(rule, p_prime_ptr, overlaps, nb, n, cfg);
    Tensor w_cols = permute_target_columns(w, sigma, nb, n);
    SimilarityDistribution p2 = cross_similarities(z, zhat, cfg.tau);
    Tensor weighted = mul(w_cols, log(p2.values));
    return scale(sum(weighted), -1.f / static_cast<float>(nb * n));
}

}  // namespace

Tensor flatten_embeddings(const std::vector<ProposalSet>& sets) {
    std::vector<Tensor> parts;
    parts.reserve(sets.size());
    for (const auto& s : sets) parts.push_back(s.embeddings);
    return concat_rows(parts);
}

SimilarityDistribution teacher_relations(const Tensor& z_flat, int nb, int n,
                                         double tau_t, RelationMask mask) {
    if (tau_t <= 0.0) throw ContractError("teacher_relations: temperature must be positive");
    const int big = nb * n;
    if (z_flat.dim(0) != big) throw ShapeError("teacher_relations: embedding count mismatch");
    std::vector<std::uint8_t> keep(static_cast<size_t>(big) * big, 0);
    bool any_row_empty = false;
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < n; ++j) {
            const size_t r = static_cast<size_t>(i) * n + j;
            bool row_has = false;
            for (int k = 0; k < nb; ++k)
                for (int l = 0; l < n; ++l) {
                    const bool ok = mask == RelationMask::as_written
                                        ? (k != i && l != j)
                                        : !(k == i && l == j);
                    keep[r * big + static_cast<size_t>(k) * n + l] = ok ? 1 : 0;
                    row_has = row_has || ok;
                }
            any_row_empty = any_row_empty || !row_has;
        }
    if (any_row_empty)
        throw DegenerateError(
            "teacher_relations: batch leaves no relation candidates for some proposal "
            "(batch and query counts too small for the configured relation_mask)");
    Tensor logits = scale(matmul(z_flat, z_flat, false, true), 1.f / static_cast<float>(tau_t));
    SimilarityDistribution out;
    out.values = masked_softmax_rows(logits, keep);
    out.temperature = tau_t;
    out.masked = true;
    return out;
}

SimilarityDistribution cross_similarities(const Tensor& z_flat, const Tensor& zhat_flat,
                                          double tau) {
    if (tau <= 0.0) throw ContractError("cross_similarities: temperature must be positive");
    if (z_flat.dim(1) != zhat_flat.dim(1) || z_flat.dim(0) != zhat_flat.dim(0))
        throw ShapeError("cross_similarities: embedding shapes disagree");
    Tensor logits = scale(matmul(z_flat, zhat_flat, false, true), 1.f / static_cast<float>(tau));
    SimilarityDistribution out;
    out.values = softmax_rows(logits);
    out.temperature = tau;
    out.masked = false;
    return out;
}

TargetDistribution locsce_target(const SimilarityDistribution* p_prime,
                                 const std::vector<std::vector<double>>& iou_per_image,
                                 int nb, int n, double lambda_sce, double delta) {
    if (!(delta > 0.0 && delta <= 1.0)) throw ContractError("locsce_target: delta outside (0,1]");
    if (lambda_sce < 0.0 || lambda_sce > 1.0)
        throw ContractError("locsce_target: lambda_sce outside [0,1]");
    if (lambda_sce < 1.0 && p_prime == nullptr)
        throw ContractError("locsce_target: relation distribution required for lambda_sce < 1");
    const int big = nb * n;
    std::vector<float> w(static_cast<size_t>(big) * big, 0.f);
    const float lam = static_cast<float>(lambda_sce);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < n; ++j) {
            const size_t r = static_cast<size_t>(i) * n + j;
            if (lambda_sce < 1.0)
                for (int c = 0; c < big; ++c)
                    w[r * big + c] = (1.f - lam) * p_prime->values.at(static_cast<int>(r), c);
            for (int m = 0; m < n; ++m)
                if (iou_per_image[static_cast<size_t>(i)][static_cast<size_t>(j) * n + m] >= delta)
                    w[r * big + static_cast<size_t>(i) * n + m] += lam;
        }
    TargetDistribution out;
    out.values = Tensor::from({big, big}, std::move(w));
    out.lambda_sce = lambda_sce;
    out.delta = delta;
    return out;
}

Tensor locsce_loss(const std::vector<ProposalSet>& teacher,
                   const std::vector<ProposalSet>& student,
                   const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg) {
    return contrastive_core(PositiveRule::iou_gate, teacher, student, sigma_prop, cfg);
}

Tensor sce_loss(const std::vector<ProposalSet>& teacher,
                const std::vector<ProposalSet>& student,
                const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg) {
    return contrastive_core(PositiveRule::exact_match, teacher, student, sigma_prop, cfg);
}

Tensor infonce_loss(const std::vector<ProposalSet>& teacher,
                    const std::vector<ProposalSet>& student,
                    const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg) {
    return contrastive_core(PositiveRule::nce_single, teacher, student, sigma_prop, cfg);
}

Tensor locnce_loss(const std::vector<ProposalSet>& teacher,
                   const std::vector<ProposalSet>& student,
                   const std::vector<MatchAssignment>& sigma_prop, const RunConfig& cfg) {
    return contrastive_core(PositiveRule::nce_gate, teacher, student, sigma_prop, cfg);
}

GlobalLossResult global_loss(const std::vector<ProposalSet>& teacher,
                             const std::vector<ProposalSet>& student,
                             const std::vector<MatchAssignment>& sigma_prop,
                             const std::vector<MatchAssignment>& sigma_box,
                             const std::vector<BoxSet>& ss_boxes, const RunConfig& cfg) {
    const int nb = static_cast<int>(student.size());
    if (static_cast<int>(sigma_box.size()) != nb || static_cast<int>(ss_boxes.size()) != nb)
        throw ContractError("global_loss: box matching inputs disagree with the batch");

    GlobalLossResult result;

    Tensor contrast;
    switch (cfg.loss_kind) {
        case LossKind::locsce: contrast = locsce_loss(teacher, student, sigma_prop, cfg); break;
        case LossKind::sce: contrast = sce_loss(teacher, student, sigma_prop, cfg); break;
        case LossKind::infonce: contrast = infonce_loss(teacher, student, sigma_prop, cfg); break;
        case LossKind::locnce: contrast = locnce_loss(teacher, student, sigma_prop, cfg); break;
    }
    result.contrast = contrast.item();

    // box regression over matched (selective-search box, student prediction) pairs
    int total_pairs = 0;
    for (const auto& s : ss_boxes) total_pairs += static_cast<int>(s.size());
    Tensor coord_sum, giou_sum;
    if (total_pairs > 0) {
        std::vector<Tensor> coord_parts, giou_parts;
        for (int i = 0; i < nb; ++i) {
            if (ss_boxes[static_cast<size_t>(i)].empty()) continue;
            std::vector<int> matched;
            matched.reserve(sigma_box[static_cast<size_t>(i)].pairs.size());
            for (auto [src, dst] : sigma_box[static_cast<size_t>(i)].pairs) {
                (void)src;
                matched.push_back(dst);
            }
            Tensor pred = gather_rows(student[static_cast<size_t>(i)].box_tensor, matched);
            Tensor target = boxes_to_tensor(ss_boxes[static_cast<size_t>(i)]);
            coord_parts.push_back(l1_coord_loss_rows(pred, target));
            giou_parts.push_back(giou_loss_rows(pred, target));
        }
        const float norm = 1.f / static_cast<float>(static_cast<std::int64_t>(nb) *
                                                    std::max(1, cfg.num_ss_boxes));
        coord_sum = scale(sum(concat_rows(coord_parts)),
                          static_cast<float>(cfg.lambda_coord) * norm);
        giou_sum = scale(sum(concat_rows(giou_parts)),
                         static_cast<float>(cfg.lambda_giou) * norm);
        result.coord_term = coord_sum.item();
        result.giou_term = giou_sum.item();
    }

    Tensor total = scale(contrast, static_cast<float>(cfg.lambda_contrast));
    if (total_pairs > 0) total = add(add(total, coord_sum), giou_sum);
    result.total = total;

    // gate statistic: positives per proposal under the configured threshold
    double positives = 0.0;
    int counted = 0;
    for (const auto& p : teacher) {
        const int n = p.count();
        auto m = pairwise_iou(p.boxes);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                if (m[static_cast<size_t>(j) * n + k] >= cfg.iou_delta) positives += 1.0;
        counted += n;
    }
    result.mean_positive_count = counted > 0 ? positives / counted : 0.0;
    return result;
}

}  // namespace proseco
