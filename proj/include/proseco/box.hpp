#pragma once

#include <array>
#include <string>
#include <vector>

#include "proseco/tensor.hpp"

namespace proseco {

/// Axis-aligned box in normalized center format, coordinates relative to the
/// image: cx, cy in [0,1], w, h in (0,1]. Widths below 1e-6 are clamped up at
/// construction so enclosure terms never divide by zero.
struct BoxN {
    float cx = 0.5f, cy = 0.5f, w = 1.f, h = 1.f;

    BoxN() = default;
    BoxN(float cx_, float cy_, float w_, float h_);

    static BoxN full_image() { return BoxN(0.5f, 0.5f, 1.f, 1.f); }
    /// From corner coordinates (clamps degenerate extents like the ctor).
    static BoxN from_corners(float x1, float y1, float x2, float y2);

    std::array<float, 4> corners() const;  // x1, y1, x2, y2
    double area() const { return static_cast<double>(w) * h; }
};

struct BoxSet {
    std::vector<BoxN> boxes;
    std::string image_id;

    size_t size() const { return boxes.size(); }
    bool empty() const { return boxes.empty(); }
    const BoxN& operator[](size_t i) const { return boxes[i]; }
};

// Scalar geometry in 64-bit; used by matching costs, targets and metrics.
double iou(const BoxN& a, const BoxN& b);
double giou_loss(const BoxN& a, const BoxN& b);
double l1_coord_loss(const BoxN& a, const BoxN& b);

/// Symmetric NxN overlap matrix with exact unit diagonal, row-major.
std::vector<double> pairwise_iou(const BoxSet& s);

// Differentiable route. Boxes are rows of a [K x 4] tensor in (cx, cy, w, h)
// order; the result is a [K x 1] per-pair loss column built from the
// primitive op set, so gradients reach the student box head.
Tensor giou_loss_rows(const Tensor& pred, const Tensor& target);
Tensor l1_coord_loss_rows(const Tensor& pred, const Tensor& target);

/// [K x 4] constant tensor from a BoxSet.
Tensor boxes_to_tensor(const BoxSet& s);

}  // namespace proseco
