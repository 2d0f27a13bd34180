#include "proseco/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace proseco {

namespace {

int scaled(int reference_px, int input_size) {
    return std::max(4, static_cast<int>(std::lround(reference_px * input_size / 800.0)));
}

ImageTensor flip_horizontal(const ImageTensor& img) {
    ImageTensor out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

ImageTensor crop(const ImageTensor& img, int x0, int y0, int w, int h) {
    ImageTensor out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

std::pair<int, int> short_edge_dims(int h, int w, int edge) {
    const double s = static_cast<double>(edge) / std::min(h, w);
    return {std::max(1, static_cast<int>(std::lround(h * s))),
            std::max(1, static_cast<int>(std::lround(w * s)))};
}

AugOp resize_op(const ImageTensor& img, int edge) {
    auto [oh, ow] = short_edge_dims(img.height, img.width, edge);
    AugOp op;
    op.kind = AugOp::Kind::resize;
    op.in_h = img.height;
    op.in_w = img.width;
    op.out_h = oh;
    op.out_w = ow;
    return op;
}

// ---- color helpers ----

float luminance(float r, float g, float b) {
    return 0.299f * r + 0.587f * g + 0.114f * b;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.f ? d / mx : 0.f;
    if (d == 0.f) {
        h = 0.f;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.f) / 6.f;
    } else if (mx == g) {
        h = ((b - r) / d + 2.f) / 6.f;
    } else {
        h = ((r - g) / d + 4.f) / 6.f;
    }
    if (h < 0.f) h += 1.f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    const float hh = std::fmod(std::max(h, 0.f), 1.f) * 6.f;
    const int sector = std::min(5, static_cast<int>(hh));
    const float f = hh - static_cast<float>(sector);
    const float p = v * (1.f - s);
    const float q = v * (1.f - s * f);
    const float t = v * (1.f - s * (1.f - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

WeakAugParams WeakAugParams::make(ImageScale scale, int input_size) {
    WeakAugParams p;
    if (scale == ImageScale::large) {
        for (int e = 480; e <= 800; e += 32) p.scale_edges.push_back(scaled(e, input_size));
    } else {
        for (int e = 320; e <= 480; e += 16) p.scale_edges.push_back(scaled(e, input_size));
    }
    for (int e : {400, 500, 600}) p.pre_crop_edges.push_back(scaled(e, input_size));
    p.crop_min = scaled(384, input_size);
    p.crop_max = scaled(600, input_size);
    return p;
}

ImageTensor apply_record(const ImageTensor& img, const AugRecord& rec) {
    ImageTensor cur = img;
    for (const auto& op : rec.ops) {
        if (op.in_h != cur.height || op.in_w != cur.width)
            throw ContractError("apply_record: record does not match this image");
        switch (op.kind) {
            case AugOp::Kind::flip: cur = flip_horizontal(cur); break;
            case AugOp::Kind::resize: cur = resize_image(cur, op.out_h, op.out_w); break;
            case AugOp::Kind::crop: cur = crop(cur, op.x0, op.y0, op.w, op.h); break;
        }
    }
    return cur;
}

std::pair<ImageTensor, AugRecord> weak_augment(const ImageTensor& img,
                                               const WeakAugParams& params, Rng& rng) {
    AugRecord rec;
    ImageTensor cur = img;

    if (rng.bernoulli(0.5)) {
        AugOp op;
        op.kind = AugOp::Kind::flip;
        op.in_h = cur.height;
        op.in_w = cur.width;
        rec.ops.push_back(op);
        cur = flip_horizontal(cur);
    }

    const auto pick = [&rng](const std::vector<int>& v) {
        return v[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
    };

    if (rng.bernoulli(0.5)) {
        AugOp op = resize_op(cur, pick(params.scale_edges));
        rec.ops.push_back(op);
        cur = resize_image(cur, op.out_h, op.out_w);
    } else {
        AugOp pre = resize_op(cur, pick(params.pre_crop_edges));
        rec.ops.push_back(pre);
        cur = resize_image(cur, pre.out_h, pre.out_w);

        AugOp cr;
        cr.kind = AugOp::Kind::crop;
        cr.in_h = cur.height;
        cr.in_w = cur.width;
        const int wmax = std::max(params.crop_min, std::min(cur.width, params.crop_max));
        const int hmax = std::max(params.crop_min, std::min(cur.height, params.crop_max));
        cr.w = std::min(cur.width, static_cast<int>(rng.uniform_int(params.crop_min, wmax)));
        cr.h = std::min(cur.height, static_cast<int>(rng.uniform_int(params.crop_min, hmax)));
        cr.x0 = static_cast<int>(rng.uniform_int(0, cur.width - cr.w));
        cr.y0 = static_cast<int>(rng.uniform_int(0, cur.height - cr.h));
        rec.ops.push_back(cr);
        cur = crop(cur, cr.x0, cr.y0, cr.w, cr.h);

        AugOp post = resize_op(cur, pick(params.scale_edges));
        rec.ops.push_back(post);
        cur = resize_image(cur, post.out_h, post.out_w);
    }
    cur.clamp01();
    return {std::move(cur), std::move(rec)};
}

ImageTensor strong_augment(const ImageTensor& img, Rng& rng) {
    ImageTensor out = img;

    if (rng.bernoulli(0.8)) {
        const float fb = static_cast<float>(rng.uniform(0.6, 1.4));
        const float fc = static_cast<float>(rng.uniform(0.6, 1.4));
        const float fs = static_cast<float>(rng.uniform(0.6, 1.4));
        const float dh = static_cast<float>(rng.uniform(-0.1, 0.1));

        for (float& v : out.data) v = std::clamp(v * fb, 0.f, 1.f);

        double mean = 0.0;
        for (size_t p = 0; p < out.pixel_count(); ++p)
            mean += luminance(out.data[p * 3], out.data[p * 3 + 1], out.data[p * 3 + 2]);
        const float gray_mean = static_cast<float>(mean / static_cast<double>(out.pixel_count()));
        for (float& v : out.data) v = std::clamp(gray_mean + (v - gray_mean) * fc, 0.f, 1.f);

        for (size_t p = 0; p < out.pixel_count(); ++p) {
            const float gray =
                luminance(out.data[p * 3], out.data[p * 3 + 1], out.data[p * 3 + 2]);
            for (int c = 0; c < 3; ++c)
                out.data[p * 3 + c] =
                    std::clamp(gray + (out.data[p * 3 + c] - gray) * fs, 0.f, 1.f);
        }

        for (size_t p = 0; p < out.pixel_count(); ++p) {
            float h, s, v;
            rgb_to_hsv(out.data[p * 3], out.data[p * 3 + 1], out.data[p * 3 + 2], h, s, v);
            h += dh;
            if (h < 0.f) h += 1.f;
            if (h >= 1.f) h -= 1.f;
            hsv_to_rgb(h, s, v, out.data[p * 3], out.data[p * 3 + 1], out.data[p * 3 + 2]);
        }
        out.clamp01();
    }

    if (rng.bernoulli(0.2)) {
        for (size_t p = 0; p < out.pixel_count(); ++p) {
            const float gray =
                luminance(out.data[p * 3], out.data[p * 3 + 1], out.data[p * 3 + 2]);
            out.data[p * 3] = out.data[p * 3 + 1] = out.data[p * 3 + 2] = gray;
        }
    }

    if (rng.bernoulli(0.5)) {
        const double sigma = std::exp(rng.uniform(std::log(0.1), std::log(2.0)));
        const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        std::vector<float> kernel(static_cast<size_t>(radius) + 1);
        double total = 0.0;
        for (int i = 0; i <= radius; ++i) {
            kernel[static_cast<size_t>(i)] =
                static_cast<float>(std::exp(-0.5 * (i / sigma) * (i / sigma)));
            total += (i == 0 ? 1.0 : 2.0) * kernel[static_cast<size_t>(i)];
        }
        for (auto& k : kernel) k = static_cast<float>(k / total);

        ImageTensor tmp(out.height, out.width);
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    float acc = kernel[0] * out.at(y, x, c);
                    for (int i = 1; i <= radius; ++i) {
                        const int xl = std::max(0, x - i), xr = std::min(out.width - 1, x + i);
                        acc += kernel[static_cast<size_t>(i)] *
                               (out.at(y, xl, c) + out.at(y, xr, c));
                    }
                    tmp.at(y, x, c) = acc;
                }
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    float acc = kernel[0] * tmp.at(y, x, c);
                    for (int i = 1; i <= radius; ++i) {
                        const int yt = std::max(0, y - i), yb = std::min(out.height - 1, y + i);
                        acc += kernel[static_cast<size_t>(i)] *
                               (tmp.at(yt, x, c) + tmp.at(yb, x, c));
                    }
                    out.at(y, x, c) = acc;
                }
        out.clamp01();
    }
    return out;
}

BoxSet transport_boxes(const BoxSet& boxes, const AugRecord& rec) {
    BoxSet out;
    out.image_id = boxes.image_id;
    for (const auto& box : boxes.boxes) {
        bool alive = true;
        BoxN cur = box;
        for (const auto& op : rec.ops) {
            if (op.kind == AugOp::Kind::flip) {
                cur = BoxN(1.f - cur.cx, cur.cy, cur.w, cur.h);
            } else if (op.kind == AugOp::Kind::crop) {
                auto c = cur.corners();
                const double x1 = static_cast<double>(c[0]) * op.in_w;
                const double y1 = static_cast<double>(c[1]) * op.in_h;
                const double x2 = static_cast<double>(c[2]) * op.in_w;
                const double y2 = static_cast<double>(c[3]) * op.in_h;
                const double cx1 = std::max(x1, static_cast<double>(op.x0));
                const double cy1 = std::max(y1, static_cast<double>(op.y0));
                const double cx2 = std::min(x2, static_cast<double>(op.x0 + op.w));
                const double cy2 = std::min(y2, static_cast<double>(op.y0 + op.h));
                const double area = (x2 - x1) * (y2 - y1);
                const double kept = std::max(0.0, cx2 - cx1) * std::max(0.0, cy2 - cy1);
                if (area <= 0.0 || kept < 0.1 * area) {
                    alive = false;
                    break;
                }
                cur = BoxN::from_corners(
                    static_cast<float>((cx1 - op.x0) / op.w),
                    static_cast<float>((cy1 - op.y0) / op.h),
                    static_cast<float>((cx2 - op.x0) / op.w),
                    static_cast<float>((cy2 - op.y0) / op.h));
            }
            // resize: identity in normalized coordinates
        }
        if (alive) out.boxes.push_back(cur);
    }
    return out;
}

// ---- synthetic scenes --------------------------------------------------------

std::string SceneSpec::to_json() const {
    nlohmann::json j;
    j["background"] = {background[0], background[1], background[2]};
    j["shapes"] = nlohmann::json::array();
    for (const auto& s : shapes) {
        const char* kind = s.kind == SceneShape::Kind::rectangle ? "rectangle"
                           : s.kind == SceneShape::Kind::ellipse ? "ellipse"
                                                                 : "triangle";
        j["shapes"].push_back({{"kind", kind},
                               {"color", {s.color[0], s.color[1], s.color[2]}},
                               {"bbox", {s.bbox.cx, s.bbox.cy, s.bbox.w, s.bbox.h}}});
    }
    return j.dump(2);
}

std::pair<ImageTensor, SceneSpec> synth_scene(Rng& rng, const SceneParams& params) {
    SceneSpec spec;
    for (int c = 0; c < 3; ++c) spec.background[c] = static_cast<float>(rng.uniform(0, 1));

    const int count =
        static_cast<int>(rng.uniform_int(params.min_shapes, params.max_shapes));
    for (int s = 0; s < count; ++s) {
        SceneShape shape;
        shape.kind = static_cast<SceneShape::Kind>(rng.uniform_int(0, 2));
        // color separated from background and from the other shapes
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (int c = 0; c < 3; ++c) shape.color[c] = static_cast<float>(rng.uniform(0, 1));
            float bg_dist = 0.f;
            for (int c = 0; c < 3; ++c)
                bg_dist = std::max(bg_dist, std::abs(shape.color[c] - spec.background[c]));
            float shape_dist = 1.f;
            for (const auto& other : spec.shapes) {
                float d = 0.f;
                for (int c = 0; c < 3; ++c)
                    d = std::max(d, std::abs(shape.color[c] - other.color[c]));
                shape_dist = std::min(shape_dist, d);
            }
            if (bg_dist >= 0.2f && shape_dist >= 0.15f) break;
        }
        // placement kept fully inside with limited pairwise overlap
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            const float w = static_cast<float>(rng.uniform(params.min_extent, params.max_extent));
            const float h = static_cast<float>(rng.uniform(params.min_extent, params.max_extent));
            const float cx = static_cast<float>(rng.uniform(w / 2, 1 - w / 2));
            const float cy = static_cast<float>(rng.uniform(h / 2, 1 - h / 2));
            BoxN candidate(cx, cy, w, h);
            bool ok = true;
            for (const auto& other : spec.shapes)
                ok = ok && iou(candidate, other.bbox) <= params.max_overlap_iou;
            if (ok) {
                shape.bbox = candidate;
                placed = true;
            }
        }
        if (placed) spec.shapes.push_back(shape);
    }

    ImageTensor img(params.size, params.size);
    for (size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = spec.background[c];

    for (const auto& shape : spec.shapes) {
        const auto box = shape.bbox.corners();
        const float cx = shape.bbox.cx, cy = shape.bbox.cy;
        const float hw = shape.bbox.w / 2.f, hh = shape.bbox.h / 2.f;
        for (int y = 0; y < params.size; ++y) {
            const float py = (static_cast<float>(y) + 0.5f) / static_cast<float>(params.size);
            if (py < box[1] || py > box[3]) continue;
            for (int x = 0; x < params.size; ++x) {
                const float px =
                    (static_cast<float>(x) + 0.5f) / static_cast<float>(params.size);
                if (px < box[0] || px > box[2]) continue;
                bool inside = false;
                switch (shape.kind) {
                    case SceneShape::Kind::rectangle: inside = true; break;
                    case SceneShape::Kind::ellipse: {
                        const float dx = (px - cx) / hw, dy = (py - cy) / hh;
                        inside = dx * dx + dy * dy <= 1.f;
                        break;
                    }
                    case SceneShape::Kind::triangle: {
                        // apex at top center, base along the bottom edge
                        const float t = (py - box[1]) / (box[3] - box[1]);
                        inside = std::abs(px - cx) <= t * hw;
                        break;
                    }
                }
                if (inside)
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = shape.color[c];
            }
        }
    }
    return {std::move(img), std::move(spec)};
}

}  // namespace proseco
