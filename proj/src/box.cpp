#include "proseco/box.hpp"

#include <algorithm>
#include <cmath>

namespace proseco {

namespace {
constexpr float kMinExtent = 1e-6f;
}

BoxN::BoxN(float cx_, float cy_, float w_, float h_) : cx(cx_), cy(cy_), w(w_), h(h_) {
    if (!(cx >= 0.f && cx <= 1.f && cy >= 0.f && cy <= 1.f))
        throw ContractError("box: center outside [0,1]");
    if (!(w <= 1.f && h <= 1.f) || !std::isfinite(w) || !std::isfinite(h))
        throw ContractError("box: extent outside (0,1]");
    w = std::max(w, kMinExtent);
    h = std::max(h, kMinExtent);
}

BoxN BoxN::from_corners(float x1, float y1, float x2, float y2) {
    return BoxN((x1 + x2) * 0.5f, (y1 + y2) * 0.5f, x2 - x1, y2 - y1);
}

std::array<float, 4> BoxN::corners() const {
    return {cx - w * 0.5f, cy - h * 0.5f, cx + w * 0.5f, cy + h * 0.5f};
}

namespace {

// Corner arithmetic in 64-bit so that identical boxes give intersection ==
// union bit-exactly (f32 corner rounding would break the unit diagonal).
struct CornersD {
    double x1, y1, x2, y2, area;
};

CornersD corners_d(const BoxN& b) {
    const double cx = b.cx, cy = b.cy, hw = 0.5 * b.w, hh = 0.5 * b.h;
    return {cx - hw, cy - hh, cx + hw, cy + hh, static_cast<double>(b.w) * b.h};
}

}  // namespace

double iou(const BoxN& a, const BoxN& b) {
    const CornersD ca = corners_d(a), cb = corners_d(b);
    const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
    const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
    const double inter = iw * ih;
    const double uni = ca.area + cb.area - inter;
    return inter / uni;
}

double giou_loss(const BoxN& a, const BoxN& b) {
    const CornersD ca = corners_d(a), cb = corners_d(b);
    const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
    const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
    const double inter = iw * ih;
    const double uni = ca.area + cb.area - inter;
    const double ew = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
    const double eh = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
    const double enclosure = ew * eh;
    const double giou = inter / uni - (enclosure - uni) / enclosure;
    return 1.0 - giou;
}

double l1_coord_loss(const BoxN& a, const BoxN& b) {
    return std::abs(static_cast<double>(a.cx) - b.cx) +
           std::abs(static_cast<double>(a.cy) - b.cy) +
           std::abs(static_cast<double>(a.w) - b.w) +
           std::abs(static_cast<double>(a.h) - b.h);
}

std::vector<double> pairwise_iou(const BoxSet& s) {
    const size_t n = s.size();
    std::vector<double> m(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        m[i * n + i] = 1.0;
        for (size_t j = i + 1; j < n; ++j) {
            const double v = iou(s[i], s[j]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    return m;
}

namespace {

// Column j of a [K x 4] box tensor, as [K x 1], via a basis matmul.
Tensor box_col(const Tensor& boxes, int j) {
    std::vector<float> basis(4, 0.f);
    basis[static_cast<size_t>(j)] = 1.f;
    return matmul(boxes, Tensor::from({4, 1}, std::move(basis)));
}

struct Corners {
    Tensor x1, y1, x2, y2, area;
};

Corners split_corners(const Tensor& boxes) {
    Tensor cx = box_col(boxes, 0), cy = box_col(boxes, 1);
    Tensor w = box_col(boxes, 2), h = box_col(boxes, 3);
    Tensor hw = scale(w, 0.5f), hh = scale(h, 0.5f);
    return {sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh), mul(w, h)};
}

}  // namespace

Tensor giou_loss_rows(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape() || pred.rank() != 2 || pred.dim(1) != 4)
        throw ShapeError("giou_loss_rows: expected matching [K x 4] tensors");
    const Corners a = split_corners(pred);
    const Corners b = split_corners(target);
    Tensor iw = relu(sub(tmin(a.x2, b.x2), tmax(a.x1, b.x1)));
    Tensor ih = relu(sub(tmin(a.y2, b.y2), tmax(a.y1, b.y1)));
    Tensor inter = mul(iw, ih);
    Tensor uni = sub(add(a.area, b.area), inter);
    Tensor ew = sub(tmax(a.x2, b.x2), tmin(a.x1, b.x1));
    Tensor eh = sub(tmax(a.y2, b.y2), tmin(a.y1, b.y1));
    Tensor enclosure = mul(ew, eh);
    Tensor iou_term = mul(inter, reciprocal(uni));
    Tensor slack = mul(sub(enclosure, uni), reciprocal(enclosure));
    Tensor giou = sub(iou_term, slack);
    return sub(Tensor::full(giou.shape(), 1.f), giou);
}

Tensor l1_coord_loss_rows(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape() || pred.rank() != 2 || pred.dim(1) != 4)
        throw ShapeError("l1_coord_loss_rows: expected matching [K x 4] tensors");
    Tensor diff = tabs(sub(pred, target));
    // row sum via ones vector
    return matmul(diff, Tensor::full({4, 1}, 1.f));
}

Tensor boxes_to_tensor(const BoxSet& s) {
    std::vector<float> v;
    v.reserve(s.size() * 4);
    for (const auto& b : s.boxes) {
        v.push_back(b.cx);
        v.push_back(b.cy);
        v.push_back(b.w);
        v.push_back(b.h);
    }
    return Tensor::from({static_cast<int>(s.size()), 4}, std::move(v));
}

}  // namespace proseco
